#pragma once

// Masked Cartesian grids over 2D convex bodies and scalar fields on them.

#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/errors.hpp"

namespace isolab {

/// Shared face between two active cells; aperture is the fraction of the face inside the body.
struct Face {
  std::size_t a = 0;
  std::size_t b = 0;
  double aperture = 0.0;
  int axis = 0;
};

class Grid {
 public:
  /// Square cells, `cells_across` of them along the longer bounding-box side.
  /// Cut cells get their inside fraction from subsamples^2 point samples;
  /// face apertures are exact.
  static std::shared_ptr<const Grid> over(const ConvexBody& body, int cells_across, int subsamples = 4) {
    if (body.dim() != 2) throw DimensionMismatch("grids are 2D");
    if (cells_across < 2) throw ResolutionError("grid needs at least two cells across");
    auto g = std::shared_ptr<Grid>(new Grid());
    g->body_ = std::make_shared<const ConvexBody>(body);
    const Vec ext = body.bbox().extent();
    g->h_ = ext.maxCoeff() / cells_across;
    g->nx_ = std::max(1, static_cast<int>(std::ceil(ext.x() / g->h_ - 1e-9)));
    g->ny_ = std::max(1, static_cast<int>(std::ceil(ext.y() / g->h_ - 1e-9)));
    const Vec2 c = body.bbox().center();
    g->origin_ = c - 0.5 * g->h_ * Vec2(g->nx_, g->ny_);
    g->build_mask(subsamples);
    g->build_faces();
    return g;
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return static_cast<std::size_t>(nx_) * ny_; }
  double spacing() const { return h_; }
  double cell_area() const { return h_ * h_; }
  const Vec2& origin() const { return origin_; }
  const ConvexBody& body() const { return *body_; }
  const std::vector<double>& mask() const { return mask_; }
  double mask(std::size_t k) const { return mask_[k]; }
  bool active(std::size_t k) const { return mask_[k] > 0.0; }
  const std::vector<Face>& faces() const { return faces_; }

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }
  int col(std::size_t k) const { return static_cast<int>(k % nx_); }
  int row(std::size_t k) const { return static_cast<int>(k / nx_); }
  Vec2 center(int i, int j) const { return origin_ + h_ * Vec2(i + 0.5, j + 0.5); }
  Vec2 center(std::size_t k) const { return center(col(k), row(k)); }

  /// Number of cells whose mask is 1.
  std::size_t full_cells() const {
    std::size_t n = 0;
    for (double m : mask_) n += (m >= 1.0);
    return n;
  }

 private:
  Grid() = default;

  void build_mask(int s) {
    if (s < 1) throw PreconditionError("subsample count must be positive");
    mask_.assign(size(), 0.0);
    std::vector<int> counts(size(), 0);
    const double hs = h_ / s;
    for (int j = 0; j < ny_; ++j) {
      for (int r = 0; r < s; ++r) {
        const double y = origin_.y() + (j + (r + 0.5) / s) * h_;
        const auto iv = body_->clip_line(vec2(origin_.x(), y), vec2(1.0, 0.0));
        if (!iv) continue;
        const long total = static_cast<long>(nx_) * s;
        const long k0 = std::max(0L, static_cast<long>(std::ceil(iv->first / hs - 0.5)));
        const long k1 = std::min(total - 1, static_cast<long>(std::floor(iv->second / hs - 0.5)));
        for (long k = k0; k <= k1; ++k) ++counts[index(static_cast<int>(k / s), j)];
      }
    }
    for (std::size_t k = 0; k < size(); ++k) mask_[k] = static_cast<double>(counts[k]) / (s * s);
  }

  double aperture(const Vec2& p, const Vec2& dir) const {
    const auto iv = body_->clip_line(Vec(p), Vec(dir));
    if (!iv) return 0.0;
    const double lo = std::max(0.0, iv->first), hi = std::min(h_, iv->second);
    return hi > lo ? (hi - lo) / h_ : 0.0;
  }

  void build_faces() {
    for (int pass = 0; pass < 2; ++pass) {
      faces_.clear();
      std::vector<int> degree(size(), 0);
      for (int j = 0; j < ny_; ++j)
        for (int i = 0; i + 1 < nx_; ++i) {
          const auto a = index(i, j), b = index(i + 1, j);
          if (!active(a) || !active(b)) continue;
          const double ap = aperture(origin_ + h_ * Vec2(i + 1, j), Vec2(0, 1));
          if (ap <= 0.0) continue;
          faces_.push_back({a, b, ap, 0});
          ++degree[a];
          ++degree[b];
        }
      for (int j = 0; j + 1 < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
          const auto a = index(i, j), b = index(i, j + 1);
          if (!active(a) || !active(b)) continue;
          const double ap = aperture(origin_ + h_ * Vec2(i, j + 1), Vec2(1, 0));
          if (ap <= 0.0) continue;
          faces_.push_back({a, b, ap, 1});
          ++degree[a];
          ++degree[b];
        }
      // Slivers with no open face to the rest of the body are dropped.
      bool changed = false;
      for (std::size_t k = 0; k < size(); ++k)
        if (active(k) && degree[k] == 0) {
          mask_[k] = 0.0;
          changed = true;
        }
      if (!changed) break;
    }
    if (full_cells() == 0) throw ResolutionError("grid has no cell fully inside the body");
  }

  std::shared_ptr<const ConvexBody> body_;
  Vec2 origin_ = Vec2::Zero();
  double h_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> mask_;
  std::vector<Face> faces_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// One scalar per grid cell.
struct ScalarField {
  GridPtr grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(GridPtr g, double fill = 0.0) : grid(std::move(g)), values(grid->size(), fill) {}
  ScalarField(GridPtr g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
    if (values.size() != grid->size()) throw DimensionMismatch("field size does not match grid");
  }

  template <class F>
  static ScalarField sample(GridPtr g, F&& fn) {
    ScalarField f(g);
    for (std::size_t k = 0; k < g->size(); ++k) f.values[k] = fn(g->center(k));
    return f;
  }

  double operator[](std::size_t k) const { return values[k]; }
  double& operator[](std::size_t k) { return values[k]; }

  /// Bilinear interpolation through cell centers (clamped at the grid edge).
  double interpolate(const Vec2& x) const {
    const Grid& g = *grid;
    const double u = (x.x() - g.origin().x()) / g.spacing() - 0.5;
    const double v = (x.y() - g.origin().y()) / g.spacing() - 0.5;
    const int i0 = std::clamp(static_cast<int>(std::floor(u)), 0, std::max(0, g.nx() - 2));
    const int j0 = std::clamp(static_cast<int>(std::floor(v)), 0, std::max(0, g.ny() - 2));
    const int i1 = std::min(i0 + 1, g.nx() - 1), j1 = std::min(j0 + 1, g.ny() - 1);
    const double s = std::clamp(u - i0, 0.0, 1.0), t = std::clamp(v - j0, 0.0, 1.0);
    return (1 - s) * (1 - t) * values[g.index(i0, j0)] + s * (1 - t) * values[g.index(i1, j0)] +
           (1 - s) * t * values[g.index(i0, j1)] + s * t * values[g.index(i1, j1)];
  }

  /// Central-difference gradient at a cell, one-sided where a neighbour is inactive.
  Vec2 gradient(std::size_t k) const {
    const Grid& g = *grid;
    const int i = g.col(k), j = g.row(k);
    auto diff = [&](int di, int dj) {
      const int ip = i + di, jp = j + dj, im = i - di, jm = j - dj;
      const bool has_p = ip >= 0 && ip < g.nx() && jp >= 0 && jp < g.ny() && g.active(g.index(ip, jp));
      const bool has_m = im >= 0 && im < g.nx() && jm >= 0 && jm < g.ny() && g.active(g.index(im, jm));
      if (has_p && has_m) return (values[g.index(ip, jp)] - values[g.index(im, jm)]) / (2 * g.spacing());
      if (has_p) return (values[g.index(ip, jp)] - values[k]) / g.spacing();
      if (has_m) return (values[k] - values[g.index(im, jm)]) / g.spacing();
      return 0.0;
    };
    return Vec2(diff(1, 0), diff(0, 1));
  }
};

}  // namespace isolab
