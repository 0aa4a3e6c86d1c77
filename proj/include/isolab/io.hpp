#pragma once

// Artifact serialization: JSON with 17 significant digits, binary field dumps
// with sidecars, interface CSV/JSON, SVG drawing and small filesystem helpers.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/digest.hpp"
#include "isolab/errors.hpp"
#include "isolab/grid.hpp"
#include "isolab/surface.hpp"

namespace isolab {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string format_double(double x) {
  if (std::isnan(x)) return "\"nan\"";
  if (std::isinf(x)) return x > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s(buf);
  // Keep integral values recognisably floating.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

/// CSV cell: plain 17-digit number (nan/inf unquoted).
inline std::string csv_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline void write_json(std::ostream& os, const json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(it.key()).dump() << ": ";
        write_json(os, it.value(), indent, depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& v : j) flat = flat && !v.is_structured();
      if (flat) {
        os << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          write_json(os, j[i], indent, depth + 1);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(os, j[i], indent, depth + 1);
      }
      os << "\n" << close << "]";
      return;
    }
    case json::value_t::number_float:
      os << format_double(j.get<double>());
      return;
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// Deterministic JSON text; floats carry 17 significant digits.
inline std::string to_json_text(const json& j) {
  std::ostringstream os;
  detail::write_json(os, j, 2, 0);
  os << "\n";
  return os.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  f << s;
  if (!f) throw Error("write failed: " + p.string());
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

/// Writes through a sibling temporary and renames over the target.
inline void write_atomic(const fs::path& p, const std::string& s) {
  fs::path tmp = p;
  tmp += ".tmp";
  write_text(tmp, s);
  fs::rename(tmp, p);
}

inline void write_json_file(const fs::path& p, const json& j) { write_atomic(p, to_json_text(j)); }

inline json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline std::string mask_digest(const Grid& g) { return Sha256().update(std::span<const double>(g.mask())).hex(); }

/// Row-major little-endian f64 dump of a field (row j = y index) plus sidecar.
inline void dump_field(const ScalarField& f, const fs::path& bin, const fs::path& sidecar) {
  const Grid& g = *f.grid;
  std::string bytes;
  bytes.reserve(8 * f.values.size());
  for (double x : f.values) {
    std::uint64_t b;
    std::memcpy(&b, &x, sizeof b);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((b >> (8 * i)) & 0xff));
  }
  write_atomic(bin, bytes);
  json j;
  j["format"] = "f64le";
  j["order"] = "row-major";
  j["dims"] = json::array({g.ny(), g.nx()});
  j["spacing"] = g.spacing();
  j["origin"] = vec_json(g.origin());
  j["cell_centers"] = "origin + spacing * (i + 1/2, j + 1/2)";
  j["mask_digest"] = mask_digest(g);
  j["active_cells"] = std::count_if(g.mask().begin(), g.mask().end(), [](double m) { return m > 0.0; });
  j["data_digest"] = Sha256().update(std::span<const double>(f.values)).hex();
  write_json_file(sidecar, j);
}

inline std::vector<double> load_field_values(const fs::path& bin) {
  const std::string bytes = read_text(bin);
  if (bytes.size() % 8) throw Error("field dump size is not a multiple of 8");
  std::vector<double> v(bytes.size() / 8);
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::uint64_t b = 0;
    for (int i = 0; i < 8; ++i) b |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 * k + i])) << (8 * i);
    std::memcpy(&v[k], &b, sizeof b);
  }
  return v;
}

/// chain,index,x,y,nx,ny,boundary
inline std::string interface_csv(const Interface& s) {
  std::ostringstream os;
  os << "chain,index,x,y,nx,ny,boundary\n";
  for (std::size_t c = 0; c < s.chains.size(); ++c) {
    const auto& ch = s.chains[c];
    for (std::size_t i = 0; i < ch.idx.size(); ++i) {
      const auto v = ch.idx[i];
      const Vec2 n = v < s.normals.size() ? s.normals[v] : Vec2(0, 0);
      os << c << ',' << i << ',' << csv_double(s.vertices[v].x()) << ',' << csv_double(s.vertices[v].y()) << ','
         << csv_double(n.x()) << ',' << csv_double(n.y()) << ',' << (s.is_boundary(v) ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

inline json interface_topology(const Interface& s) {
  json j;
  j["vertices"] = s.vertices.size();
  j["segments"] = s.segment_count();
  j["resolution"] = s.resolution;
  j["length"] = s.length();
  json chains = json::array();
  for (std::size_t c = 0; c < s.chains.size(); ++c) {
    const auto& ch = s.chains[c];
    json cj;
    cj["id"] = c;
    cj["closed"] = ch.closed;
    cj["vertices"] = ch.idx.size();
    int ends = 0;
    if (!ch.closed && !ch.idx.empty()) ends = s.is_boundary(ch.idx.front()) + s.is_boundary(ch.idx.back());
    cj["boundary_ends"] = ends;
    chains.push_back(cj);
  }
  j["chains"] = chains;
  j["components"] = s.chains.size();
  return j;
}

/// Polylines read back from an interface CSV, one per chain.
inline std::vector<std::vector<Vec2>> read_interface_csv(const fs::path& p) {
  std::istringstream is(read_text(p));
  std::string line;
  std::getline(is, line);
  std::vector<std::vector<Vec2>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) throw Error("malformed interface CSV row: " + line);
    const auto c = static_cast<std::size_t>(std::stoul(cells[0]));
    if (out.size() <= c) out.resize(c + 1);
    out[c].emplace_back(std::stod(cells[2]), std::stod(cells[3]));
  }
  return out;
}

/// Minimal SVG writer in world coordinates (y up).
class Svg {
 public:
  Svg(Vec2 lo, Vec2 hi, double width_px = 640.0) : lo_(lo), hi_(hi) {
    const Vec2 ext = (hi - lo).cwiseMax(Vec2(1e-12, 1e-12));
    scale_ = width_px / ext.x();
    w_ = width_px;
    h_ = ext.y() * scale_;
  }

  static Svg around(const std::vector<Vec2>& pts, double margin = 0.05, double width_px = 640.0) {
    Vec2 lo = pts.empty() ? Vec2(-1, -1) : pts.front(), hi = lo;
    for (const auto& p : pts) lo = lo.cwiseMin(p), hi = hi.cwiseMax(p);
    const Vec2 pad = margin * (hi - lo).cwiseMax(Vec2(1e-9, 1e-9));
    return Svg(lo - pad, hi + pad, width_px);
  }

  Vec2 map(const Vec2& p) const { return Vec2((p.x() - lo_.x()) * scale_, (hi_.y() - p.y()) * scale_); }

  void polyline(const std::vector<Vec2>& pts, const std::string& stroke, double width = 1.5, bool closed = false,
                const std::string& fill = "none", const std::string& dash = "") {
    if (pts.empty()) return;
    body_ << "<" << (closed ? "polygon" : "polyline") << " points=\"";
    for (const auto& p : pts) {
      const Vec2 q = map(p);
      body_ << num(q.x()) << "," << num(q.y()) << " ";
    }
    body_ << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"";
    if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
    body_ << "/>\n";
  }

  void circle(const Vec2& c, double r_px, const std::string& fill) {
    const Vec2 q = map(c);
    body_ << "<circle cx=\"" << num(q.x()) << "\" cy=\"" << num(q.y()) << "\" r=\"" << r_px << "\" fill=\"" << fill << "\"/>\n";
  }

  void text(const Vec2& at, const std::string& s, double size = 12.0) {
    const Vec2 q = map(at);
    body_ << "<text x=\"" << num(q.x()) << "\" y=\"" << num(q.y()) << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\">" << escape(s) << "</text>\n";
  }

  void text_px(double x, double y, const std::string& s, double size = 12.0, const std::string& anchor = "start") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
       << "\" viewBox=\"0 0 " << num(w_) << " " << num(h_) << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

  Vec2 lo() const { return lo_; }
  Vec2 hi() const { return hi_; }

 private:
  static std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", x);
    return buf;
  }
  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  }

  Vec2 lo_, hi_;
  double scale_ = 1.0, w_ = 0.0, h_ = 0.0;
  std::ostringstream body_;
};

inline std::vector<Vec2> outline(const ConvexBody& b) {
  std::vector<Vec2> v;
  for (const auto& p : b.vertices()) v.emplace_back(p);
  return v;
}

/// Body outline with interface chains on top.
inline std::string interface_svg(const std::vector<Vec2>& body, const std::vector<std::vector<Vec2>>& chains,
                                 const std::string& title = "") {
  Svg svg = Svg::around(body);
  svg.polyline(body, "#333", 1.5, true, "#f4f4f4");
  for (const auto& c : chains) svg.polyline(c, "#c0392b", 2.0);
  if (!title.empty()) svg.text_px(8, 16, title);
  return svg.str();
}

/// Line plot of one or more series against a shared abscissa.
inline std::string line_plot(const std::vector<double>& x, const std::vector<std::pair<std::string, std::vector<double>>>& series,
                             const std::string& title, const std::string& xlabel) {
  const double W = 640, H = 400, L = 60, R = 20, T = 30, B = 45;
  double ylo = 0.0, yhi = 0.0;
  bool first = true;
  for (const auto& [name, ys] : series)
    for (double y : ys)
      if (std::isfinite(y)) {
        ylo = first ? y : std::min(ylo, y);
        yhi = first ? y : std::max(yhi, y);
        first = false;
      }
  ylo = std::min(ylo, 0.0);
  if (yhi - ylo < 1e-12) yhi = ylo + 1.0;
  const double xlo = x.empty() ? 0.0 : x.front(), xhi = x.empty() ? 1.0 : std::max(x.back(), xlo + 1e-12);
  auto px = [&](double v) { return L + (v - xlo) / (xhi - xlo) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ylo) / (yhi - ylo) * (H - T - B); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0) << "\" stroke=\"#999\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"#333\"/>\n";
  const char* colors[] = {"#c0392b", "#2471a3", "#229954", "#7d3c98"};
  int ci = 0;
  for (const auto& [name, ys] : series) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[ci % 4] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < x.size() && i < ys.size(); ++i)
      if (std::isfinite(ys[i])) os << px(x[i]) << "," << py(ys[i]) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (ci + 1) << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
       << colors[ci % 4] << "\" font-family=\"sans-serif\">" << name << "</text>\n";
    ++ci;
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">"
     << xlabel << "</text>\n";
  os << "<text x=\"" << L << "\" y=\"18\" font-size=\"13\" font-family=\"sans-serif\">" << title << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << py(yhi) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << csv_double(yhi).substr(0, 8)
     << "</text>\n";
  os << "<text x=\"" << L - 4 << "\" y=\"" << py(ylo) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << csv_double(ylo).substr(0, 8)
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace isolab
