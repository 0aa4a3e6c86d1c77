#pragma once

// Experiment configuration: TOML text validated against a fixed schema.
// Every key must be consumed by the reader for the chosen kind, otherwise
// the config is rejected before anything runs.

#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isolab/convex.hpp"
#include "isolab/errors.hpp"
#include "isolab/field.hpp"
#include "isolab/io.hpp"
#include "isolab/measure.hpp"
#include "isolab/spectral.hpp"
#include "isolab/stability.hpp"

namespace isolab::lab {

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"isoperimetric", "stability", "spectral", "deform", "conjecture-battery", "simons"};
  return k;
}

namespace detail {

struct SectionState {
  const toml::table* table = nullptr;
  std::string path;
  std::set<std::string, std::less<>> used;
};

using Registry = std::vector<std::shared_ptr<SectionState>>;

/// Read access to one TOML table that remembers which keys were consumed.
class Section {
 public:
  Section(const toml::table* t, std::string path, std::shared_ptr<Registry> reg) : reg_(std::move(reg)) {
    st_ = std::make_shared<SectionState>();
    st_->table = t;
    st_->path = std::move(path);
    reg_->push_back(st_);
  }

  bool present() const { return st_->table != nullptr; }
  bool has(std::string_view k) const { return st_->table && st_->table->contains(k); }
  std::string key(std::string_view k) const { return st_->path.empty() ? std::string(k) : st_->path + "." + std::string(k); }

  const toml::node* node(std::string_view k) {
    if (!st_->table) return nullptr;
    const toml::node* n = st_->table->get(k);
    if (n) st_->used.emplace(k);
    return n;
  }

  double number(std::string_view k, std::optional<double> def = std::nullopt) {
    const toml::node* n = node(k);
    if (!n) return required(k, def);
    if (auto v = n->value_exact<double>()) return *v;
    if (auto v = n->value_exact<std::int64_t>()) return static_cast<double>(*v);
    throw ConfigError("key '" + key(k) + "' must be a number");
  }

  double positive(std::string_view k, std::optional<double> def = std::nullopt) {
    const double v = number(k, def);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("key '" + key(k) + "' must be positive");
    return v;
  }

  std::int64_t integer(std::string_view k, std::optional<std::int64_t> def = std::nullopt) {
    const toml::node* n = node(k);
    if (!n) return required(k, def);
    if (auto v = n->value_exact<std::int64_t>()) return *v;
    throw ConfigError("key '" + key(k) + "' must be an integer");
  }

  int count(std::string_view k, int lo, std::optional<int> def = std::nullopt) {
    const auto v = integer(k, def);
    if (v < lo || v > (1 << 24)) throw ConfigError("key '" + key(k) + "' must be an integer >= " + std::to_string(lo));
    return static_cast<int>(v);
  }

  bool boolean(std::string_view k, std::optional<bool> def = std::nullopt) {
    const toml::node* n = node(k);
    if (!n) return required(k, def);
    if (auto v = n->value_exact<bool>()) return *v;
    throw ConfigError("key '" + key(k) + "' must be true or false");
  }

  std::string string(std::string_view k, std::optional<std::string> def = std::nullopt) {
    const toml::node* n = node(k);
    if (!n) return required(k, std::move(def));
    if (auto v = n->value_exact<std::string>()) return *v;
    throw ConfigError("key '" + key(k) + "' must be a string");
  }

  std::string choice(std::string_view k, const std::vector<std::string>& allowed, std::optional<std::string> def = std::nullopt) {
    std::string v = string(k, std::move(def));
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("key '" + key(k) + "' must be one of: " + list + " (got '" + v + "')");
    }
    return v;
  }

  Vec2 vec2(std::string_view k, std::optional<Vec2> def = std::nullopt) {
    const toml::node* n = node(k);
    if (!n) return required(k, def);
    return as_vec2(*n, key(k));
  }

  std::vector<Vec2> points(std::string_view k) {
    const toml::node* n = node(k);
    if (!n) throw ConfigError("missing required key '" + key(k) + "'");
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError("key '" + key(k) + "' must be an array of [x, y] pairs");
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(as_vec2(*arr->get(i), key(k) + "[" + std::to_string(i) + "]"));
    return out;
  }

  /// A scalar or an array of scalars of type T.
  template <class T>
  std::vector<T> list(std::string_view k, std::vector<T> def) {
    const toml::node* n = node(k);
    if (!n) return def;
    std::vector<T> out;
    auto take = [&](const toml::node& x) {
      if (auto v = x.value_exact<T>()) return out.push_back(*v);
      throw ConfigError("key '" + key(k) + "' has an element of the wrong type");
    };
    if (const auto* arr = n->as_array()) {
      for (const auto& x : *arr) take(x);
    } else {
      take(*n);
    }
    if (out.empty()) throw ConfigError("key '" + key(k) + "' must not be empty");
    return out;
  }

  Section sub(std::string_view k) {
    const toml::node* n = node(k);
    if (n && !n->is_table()) throw ConfigError("key '" + key(k) + "' must be a table");
    return Section(n ? n->as_table() : nullptr, key(k), reg_);
  }

  /// Sections for every table in an array of tables.
  std::vector<Section> sub_list(std::string_view k) {
    const toml::node* n = node(k);
    std::vector<Section> out;
    if (!n) return out;
    const auto* arr = n->as_array();
    if (!arr) throw ConfigError("key '" + key(k) + "' must be an array of tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = arr->get(i)->as_table();
      if (!t) throw ConfigError("key '" + key(k) + "' must be an array of tables");
      out.emplace_back(t, key(k) + "[" + std::to_string(i) + "]", reg_);
    }
    return out;
  }

  void reject_all(const std::string& why) {
    if (st_->table && !st_->table->empty()) throw ConfigError("table '" + st_->path + "' is not used " + why);
  }

 private:
  template <class T>
  T required(std::string_view k, std::optional<T> def) const {
    if (!def) throw ConfigError("missing required key '" + key(k) + "'");
    return *def;
  }

  static Vec2 as_vec2(const toml::node& n, const std::string& where) {
    const auto* arr = n.as_array();
    if (!arr || arr->size() != 2) throw ConfigError("key '" + where + "' must be a pair [x, y]");
    Vec2 v;
    for (int i = 0; i < 2; ++i) {
      const auto& e = *arr->get(static_cast<std::size_t>(i));
      if (auto d = e.value_exact<double>())
        v[i] = *d;
      else if (auto j = e.value_exact<std::int64_t>())
        v[i] = static_cast<double>(*j);
      else
        throw ConfigError("key '" + where + "' must contain numbers");
    }
    return v;
  }

  std::shared_ptr<SectionState> st_;
  std::shared_ptr<Registry> reg_;
};

inline void check_unknown(const Registry& reg, const std::string& kind) {
  for (const auto& s : reg) {
    if (!s->table) continue;
    for (const auto& [k, v] : *s->table) {
      const std::string name(k.str());
      if (!s->used.count(name)) {
        const std::string full = s->path.empty() ? name : s->path + "." + name;
        throw ConfigError("unknown key '" + full + "' for experiment kind '" + kind + "'");
      }
    }
  }
}

inline json toml_to_json(const toml::node& n) {
  if (const auto* t = n.as_table()) {
    json j = json::object();
    std::vector<std::string> keys;
    for (const auto& [k, v] : *t) keys.emplace_back(k.str());
    std::sort(keys.begin(), keys.end());
    for (const auto& k : keys) j[k] = toml_to_json(*t->get(k));
    return j;
  }
  if (const auto* a = n.as_array()) {
    json j = json::array();
    for (const auto& e : *a) j.push_back(toml_to_json(e));
    return j;
  }
  if (auto v = n.value_exact<std::int64_t>()) return *v;
  if (auto v = n.value_exact<double>()) return *v;
  if (auto v = n.value_exact<bool>()) return *v;
  if (auto v = n.value_exact<std::string>()) return *v;
  throw ConfigError("unsupported TOML value (dates and times are not accepted)");
}

}  // namespace detail

struct BodySpec {
  std::string kind;
  std::shared_ptr<const ConvexBody> body;

  static BodySpec parse(detail::Section s) {
    if (!s.present()) throw ConfigError("missing required table '" + s.key("") + "'");
    BodySpec b;
    b.kind = s.choice("kind", {"square", "box", "disk", "ellipse", "regular-polygon", "polygon", "hull-of-points"});
    auto p = s.sub("params");
    const std::optional<bool> sym = s.has("symmetric") ? std::optional<bool>(s.boolean("symmetric")) : std::nullopt;
    try {
      ConvexBody body = [&]() -> ConvexBody {
        if (b.kind == "square") {
          const double half = p.positive("half", 1.0);
          const Vec2 c = p.vec2("center", Vec2(0, 0));
          return make_box(c - Vec2(half, half), c + Vec2(half, half));
        }
        if (b.kind == "box") return make_box(p.vec2("lo"), p.vec2("hi"));
        if (b.kind == "disk") return make_disk(p.positive("radius", 1.0), p.count("facets", 8, 256));
        if (b.kind == "ellipse") return make_ellipse(p.positive("a"), p.positive("b"), p.count("facets", 8, 256));
        if (b.kind == "regular-polygon")
          return make_regular_polygon(p.count("sides", 3), p.positive("radius", 1.0), p.number("phase", 0.0));
        if (b.kind == "polygon") return polygon_from_ccw(p.points("vertices"));
        std::vector<Vec> pts;
        for (const auto& q : p.points("points")) pts.emplace_back(Vec(q));
        return convex_hull(pts);
      }();
      if (sym && *sym && !body.symmetric()) throw ConfigError("body is declared symmetric but is not centrally symmetric");
      if (sym && !*sym && body.symmetric())
        body = ConvexBody(body.halfspaces(), false, body.smooth(), body.kind());
      b.body = std::make_shared<const ConvexBody>(std::move(body));
    } catch (const PreconditionError& e) {
      throw ConfigError("invalid body '" + s.key("") + "': " + e.what());
    }
    return b;
  }
};

struct DensitySpec {
  std::string kind = "uniform";
  std::shared_ptr<const Density> density;

  static DensitySpec parse(detail::Section s, const BodySpec* body) {
    DensitySpec d;
    d.kind = s.choice("kind", {"uniform", "gaussian", "power_exp", "product"}, "uniform");
    auto p = s.sub("params");
    const double trunc = s.number("truncation_mass", 1e-10);
    if (!(trunc > 0.0 && trunc < 1e-3)) throw ConfigError("density.truncation_mass must lie in (0, 1e-3)");
    try {
      if (d.kind == "uniform") {
        if (!body) throw ConfigError("a uniform density needs a [body] table");
        d.density = std::make_shared<const Density>(Density::uniform(*body->body));
      } else {
        if (body) throw ConfigError("[body] is implied by the truncated support of a non-uniform density; remove it");
        if (d.kind == "gaussian") {
          d.density = std::make_shared<const Density>(Density::gaussian(p.positive("sigma", 1.0), trunc));
        } else if (d.kind == "power_exp") {
          d.density = std::make_shared<const Density>(Density::power_exp(p.number("beta"), p.positive("scale", 1.0), trunc));
        } else {
          auto fs = p.sub_list("factors");
          if (fs.size() != 2) throw ConfigError("density.params.factors needs exactly two factor tables");
          std::vector<Factor1d> f;
          for (auto& t : fs) {
            const auto k = t.choice("kind", {"gaussian", "laplace", "power"});
            if (k == "gaussian") f.push_back(Factor1d::gaussian(t.positive("sigma", 1.0)));
            else if (k == "laplace") f.push_back(Factor1d::laplace(t.positive("rate", 1.0)));
            else f.push_back(Factor1d::power(t.number("beta"), t.positive("scale", 1.0)));
          }
          d.density = std::make_shared<const Density>(Density::product(std::move(f), trunc));
        }
      }
    } catch (const PreconditionError& e) {
      throw ConfigError(std::string("invalid density: ") + e.what());
    }
    return d;
  }
};

struct PhaseFieldSpec {
  double alpha = 0.5;
  int n = 256;
  int subsamples = 4;
  std::optional<double> eps_start;  ///< default: ten cells
  OptimizerConfig opt;
  std::string init = "random";
  Vec2 direction = Vec2(1, 0);

  static PhaseFieldSpec parse(detail::Section root) {
    PhaseFieldSpec p;
    p.alpha = root.number("alpha", 0.5);
    if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    auto g = root.sub("grid");
    p.n = g.count("n", 16, 256);
    p.subsamples = g.count("subsamples", 1, 4);
    auto e = root.sub("eps");
    if (e.has("start")) p.eps_start = e.positive("start");
    p.opt.eps_stages = e.count("stages", 1, 3);
    auto o = root.sub("opt");
    p.opt.tol = o.positive("tol", p.opt.tol);
    p.opt.max_iters = o.count("max_iters", 1, p.opt.max_iters);
    p.opt.armijo = o.positive("armijo", p.opt.armijo);
    p.opt.max_update = o.positive("max_update", p.opt.max_update);
    auto i = root.sub("init");
    p.init = i.choice("kind", {"random", "halfspace"}, "random");
    if (p.init == "halfspace") {
      p.direction = i.vec2("direction");
      if (!(p.direction.norm() > 0.0)) throw ConfigError("init.direction must be nonzero");
    }
    return p;
  }
};

struct StabilitySpec {
  std::string source = "phase_field";
  double radius = 1.0;
  int points = 1024;
  Vec2 from = Vec2(-1, 0), to = Vec2(1, 0);
  bool mean_zero = true;
  bool claims_symmetric = false;
};

struct SpectralSpec {
  int n = 256;
  int modes = 1;
  NeumannOptions neumann;
  HotSpotsOptions hot_spots;

  static SpectralSpec parse(detail::Section root, int default_n) {
    SpectralSpec s;
    s.n = root.sub("grid").count("n", 64, default_n);
    auto t = root.sub("spectral");
    s.modes = t.count("modes", 1, 1);
    s.neumann.tol = t.positive("tol", s.neumann.tol);
    s.neumann.max_iters = t.count("max_iters", 1, s.neumann.max_iters);
    s.hot_spots.collar = t.number("collar", 0.0);
    if (s.hot_spots.collar < 0.0) throw ConfigError("spectral.collar must be >= 0");
    s.hot_spots.directions = t.count("directions", 8, s.hot_spots.directions);
    return s;
  }
};

struct DeformSpec {
  BodySpec target;
  int steps = 10;
  int support_samples = 360;
};

struct RegionSpec {
  std::string source = "phase_field";
  Vec2 normal = Vec2(0, 1);
  double offset = 0.0;
  bool rerun_on_violation = true;
};

struct SimonsSpec {
  std::vector<int> n{4};
  std::vector<SimonsDomain> domains{SimonsDomain::ball};
  std::vector<SimonsBc> bcs{SimonsBc::boundary_fixed, SimonsBc::volume_constrained};
  int elements = 400;
  bool cross_check = true;  ///< compare n = 1 with the planar X network
  int per_ray = 400;
};

struct ExperimentConfig {
  std::string kind;
  std::string name;
  std::uint64_t seed = 0;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::string source_text;
  json canonical;      ///< normalized config without run-placement keys
  std::string digest;  ///< SHA-256 of the canonical form

  std::optional<BodySpec> body;
  std::optional<DensitySpec> density;
  PhaseFieldSpec phase_field;
  StabilitySpec stability;
  SpectralSpec spectral;
  DeformSpec deform;
  RegionSpec region;
  SimonsSpec simons;

  const Density& dens() const { return *density->density; }
  /// The region the computation lives in: the body, or the truncated support of the density.
  const ConvexBody& domain() const { return body ? *body->body : density->density->support(); }

  static ExperimentConfig parse(const std::string& text, const std::string& source = "config",
                                std::optional<std::uint64_t> seed_override = std::nullopt) {
    toml::table root;
    try {
      root = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
      std::ostringstream os;
      os << "TOML syntax error in " << source << " at line " << e.source().begin.line << ": " << e.description();
      throw ConfigError(os.str());
    }
    auto reg = std::make_shared<detail::Registry>();
    detail::Section top(&root, "", reg);
    ExperimentConfig c;
    c.source_text = text;
    c.kind = top.choice("kind", experiment_kinds());
    c.name = top.string("name", c.kind);
    if (c.name.empty() || c.name.find_first_of("/\\ \t\n") != std::string::npos || c.name[0] == '.')
      throw ConfigError("name must be non-empty, must not start with '.', and must not contain slashes or whitespace");
    const auto seed = top.integer("seed", 0);
    if (seed < 0) throw ConfigError("seed must be >= 0");
    c.seed = seed_override ? *seed_override : static_cast<std::uint64_t>(seed);
    if (top.has("threads")) c.threads = top.count("threads", 1);
    if (top.has("out")) c.out = top.string("out");

    if (c.kind == "simons") {
      auto s = top.sub("simons");
      c.simons.n.clear();
      for (auto n : s.list<std::int64_t>("n", {4})) {
        if (n < 1 || n > 16) throw ConfigError("simons.n entries must lie in [1, 16]");
        c.simons.n.push_back(static_cast<int>(n));
      }
      c.simons.domains.clear();
      for (const auto& d : s.list<std::string>("domain", {"ball"})) {
        if (d == "ball") c.simons.domains.push_back(SimonsDomain::ball);
        else if (d == "hull") c.simons.domains.push_back(SimonsDomain::hull);
        else throw ConfigError("simons.domain entries must be 'ball' or 'hull'");
      }
      c.simons.bcs.clear();
      for (const auto& b : s.list<std::string>("bc", {"boundary_fixed", "volume_constrained"})) {
        if (b == "boundary_fixed") c.simons.bcs.push_back(SimonsBc::boundary_fixed);
        else if (b == "volume_constrained") c.simons.bcs.push_back(SimonsBc::volume_constrained);
        else throw ConfigError("simons.bc entries must be 'boundary_fixed' or 'volume_constrained'");
      }
      c.simons.elements = s.count("elements", 16, 400);
      c.simons.cross_check = s.boolean("cross_check", true);
      c.simons.per_ray = s.count("per_ray", 8, 400);
    } else if (c.kind == "spectral" || c.kind == "deform") {
      c.body = BodySpec::parse(top.sub("body"));
      c.spectral = SpectralSpec::parse(top, c.kind == "deform" ? 128 : 256);
      if (c.kind == "deform") {
        auto d = top.sub("deform");
        c.deform.steps = d.count("steps", 1, 10);
        c.deform.support_samples = d.count("support_samples", 16, 360);
        c.deform.target = BodySpec::parse(d.sub("target"));
        if (!c.body->body->symmetric() || !c.deform.target.body->symmetric())
          throw ConfigError("deform needs centrally symmetric start and target bodies");
      }
    } else {
      if (top.has("body")) c.body = BodySpec::parse(top.sub("body"));
      c.density = DensitySpec::parse(top.sub("density"), c.body ? &*c.body : nullptr);
      const std::string src = [&] {
        if (c.kind != "stability") return std::string("phase_field");
        auto s = top.sub("stability");
        c.stability.source = s.choice("source", {"phase_field", "circle", "segment", "x_network"}, "phase_field");
        c.stability.mean_zero = s.boolean("mean_zero", true);
        c.stability.claims_symmetric = s.boolean("claims_symmetric", false);
        if (c.stability.source == "circle") {
          c.stability.radius = s.positive("radius", 1.0);
          c.stability.points = s.count("points", 16, 1024);
        } else if (c.stability.source == "segment") {
          c.stability.from = s.vec2("from");
          c.stability.to = s.vec2("to");
          c.stability.points = s.count("points", 2, 256);
        } else if (c.stability.source == "x_network") {
          c.stability.points = s.count("points", 8, 400);
        }
        return c.stability.source;
      }();
      if (c.kind == "conjecture-battery") {
        auto r = top.sub("region");
        c.region.source = r.choice("source", {"phase_field", "halfplane"}, "phase_field");
        c.region.rerun_on_violation = r.boolean("rerun_on_violation", true);
        if (c.region.source == "halfplane") {
          c.region.normal = r.vec2("normal");
          if (!(c.region.normal.norm() > 0.0)) throw ConfigError("region.normal must be nonzero");
          c.region.offset = r.number("offset", 0.0);
          c.phase_field.n = top.sub("grid").count("n", 16, 256);
        }
      }
      const bool uses_field = src == "phase_field" && !(c.kind == "conjecture-battery" && c.region.source == "halfplane");
      if (uses_field) c.phase_field = PhaseFieldSpec::parse(top);
      if (c.kind == "stability" && src == "x_network" && !(c.body && c.body->kind == "disk"))
        throw ConfigError("the x_network source lives in the unit disk; set [body] kind = \"disk\"");
    }
    detail::check_unknown(*reg, c.kind);

    c.canonical = detail::toml_to_json(root);
    c.canonical.erase("threads");
    c.canonical.erase("out");
    c.canonical["seed"] = c.seed;
    c.digest = sha256_hex(c.canonical.dump());
    return c;
  }

  static ExperimentConfig from_file(const std::filesystem::path& p, std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file " + p.string());
    std::ostringstream os;
    os << f.rdbuf();
    return parse(os.str(), p.string(), seed_override);
  }
};

}  // namespace isolab::lab
