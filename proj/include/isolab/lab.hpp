#pragma once

// Experiment runner: executes a validated config, persists artifacts
// atomically, renders report bundles and runs directories of configs.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "isolab/config.hpp"
#include "isolab/conjectures.hpp"
#include "isolab/field.hpp"
#include "isolab/io.hpp"
#include "isolab/parallel.hpp"
#include "isolab/spectral.hpp"
#include "isolab/stability.hpp"
#include "isolab/surface.hpp"

namespace isolab::lab {

inline constexpr const char* kCodeVersion = "isolab 0.1.0";
inline constexpr int kRecordSchema = 1;

enum ExitCode : int { kOk = 0, kConfigError = 2, kSolverFailure = 3, kInvariantViolation = 4 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const PreconditionError*>(&e)) return kConfigError;
  if (dynamic_cast<const InvariantViolation*>(&e)) return kInvariantViolation;
  return kSolverFailure;
}

inline std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config_error";
  if (dynamic_cast<const PreconditionError*>(&e)) return "precondition_error";
  if (dynamic_cast<const InvariantViolation*>(&e)) return "invariant_violation";
  if (dynamic_cast<const SolverError*>(&e)) return "solver_error";
  return "internal_error";
}

struct RunOptions {
  std::optional<fs::path> out;   ///< overrides the config's `out`; default "runs"
  std::optional<int> threads;    ///< overrides the config's `threads`; default 1
};

struct RunRecord {
  std::string run_id;
  fs::path dir;
  std::string kind;
  std::string status;  ///< "ok" or "failed"
  int exit_code = kOk;
  std::string error_type;
  std::string error;
  std::string config_digest;
  json summary;
  std::string summary_hash;
  std::vector<std::string> artifacts;
  json timings = json::object();

  bool ok() const { return status == "ok"; }
};

namespace detail {

/// Collects artifacts in the run's temporary directory.
class Workspace {
 public:
  explicit Workspace(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }
  json& results() { return results_; }
  json& timings() { return timings_; }
  const std::vector<std::string>& artifacts() const { return artifacts_; }

  void text(const std::string& name, const std::string& s) {
    write_atomic(dir_ / name, s);
    add(name);
  }
  void json_file(const std::string& name, const json& j) { text(name, to_json_text(j)); }

  void field(const std::string& stem, const ScalarField& f) {
    dump_field(f, dir_ / (stem + ".bin"), dir_ / (stem + ".json"));
    add(stem + ".bin");
    add(stem + ".json");
  }

  void interface(const std::string& stem, const Interface& s, const ConvexBody* body, const std::string& title) {
    text(stem + ".csv", interface_csv(s));
    json_file(stem + ".json", interface_topology(s));
    std::vector<std::vector<Vec2>> chains;
    for (const auto& c : s.chains) {
      std::vector<Vec2> pts;
      for (auto v : c.idx) pts.push_back(s.vertices[v]);
      if (c.closed && !pts.empty()) pts.push_back(pts.front());
      chains.push_back(std::move(pts));
    }
    std::vector<Vec2> outline_pts = body ? outline(*body) : std::vector<Vec2>{};
    if (!body)
      for (const auto& c : chains) outline_pts.insert(outline_pts.end(), c.begin(), c.end());
    if (body) {
      text(stem + ".svg", interface_svg(outline_pts, chains, title));
    } else {
      Svg svg = Svg::around(outline_pts, 0.1);
      for (const auto& c : chains) svg.polyline(c, "#c0392b", 2.0);
      svg.text_px(8, 16, title);
      text(stem + ".svg", svg.str());
    }
  }

  void body(const std::string& name, const ConvexBody& b) {
    json j;
    j["kind"] = b.kind();
    j["symmetric"] = b.symmetric();
    j["area"] = b.volume();
    json v = json::array();
    for (const auto& p : b.vertices()) v.push_back(json::array({p[0], p[1]}));
    j["vertices"] = v;
    json_file(name, j);
  }

  template <class F>
  auto timed(const std::string& phase, F&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&] { timings_[phase] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto r = fn();
      finish();
      return r;
    }
  }

 private:
  void add(const std::string& name) {
    if (std::find(artifacts_.begin(), artifacts_.end(), name) == artifacts_.end()) artifacts_.push_back(name);
  }

  fs::path dir_;
  json results_ = json::object();
  json timings_ = json::object();
  std::vector<std::string> artifacts_;
};

inline json stage_json(const StageRecord& s) {
  json j;
  j["eps"] = s.eps;
  j["iterations"] = s.iterations;
  j["energy"] = s.energy;
  j["grad_norm"] = s.grad_norm;
  j["max_constraint_residual"] = s.max_constraint_residual;
  return j;
}

struct PhaseFieldOutcome {
  PhaseFieldProblem problem;
  MinimizeResult result;
  Interface interface;
};

/// Minimizes the phase-field energy for the configured problem at `n` cells across.
inline PhaseFieldOutcome solve_phase_field(const ExperimentConfig& c, Workspace& ws, int n, const std::string& tag = "") {
  const auto& pf = c.phase_field;
  const ConvexBody& domain = c.domain();
  const auto g = Grid::over(domain, n, pf.subsamples);
  const double eps = pf.eps_start.value_or(10.0 * g->spacing());
  PhaseFieldOutcome o{PhaseFieldProblem::make(c.dens(), g, eps, pf.alpha), {}, {}};
  const ScalarField init = pf.init == "halfspace" ? halfspace_initial_field(o.problem, pf.direction)
                                                  : random_initial_field(o.problem, c.seed);
  try {
    o.result = ws.timed("minimize" + tag, [&] { return minimize(o.problem, init, pf.opt); });
  } catch (const NonConvergence& e) {
    ws.field("field-last" + tag, e.last_iterate);
    throw;
  }
  ws.field("field" + tag, o.result.field);
  o.interface = ws.timed("extract" + tag, [&] { return extract(o.result.field, 0.0); });
  return o;
}

inline json phase_field_results(const ExperimentConfig& c, const PhaseFieldOutcome& o) {
  const Density& d = c.dens();
  const Interface& S = o.interface;
  const Grid& g = *o.problem.grid;
  json r;
  r["alpha"] = c.phase_field.alpha;
  r["cells_across"] = std::max(g.nx(), g.ny());
  r["spacing"] = g.spacing();
  r["truncation_radius"] = d.truncation_radius();
  r["eps_final"] = o.result.stages.back().eps;
  json stages = json::array();
  double drift = 0.0;
  for (const auto& s : o.result.stages) {
    stages.push_back(stage_json(s));
    drift = std::max(drift, s.max_constraint_residual);
  }
  r["stages"] = stages;
  r["max_constraint_residual"] = drift;
  r["energy"] = o.result.stages.back().energy;
  r["energy_over_calibration"] = o.result.stages.back().energy / kCalibration;
  r["volume_fraction"] = volume_fraction(o.result.field, d, 4);
  r["length"] = S.length();
  r["weighted_perimeter"] = perimeter(S, d);
  r["components"] = S.chains.size();
  r["boundary_vertices"] = S.boundary_vertices.size();
  const auto [dist, dir] = distance_to_best_line_through(S, Vec2::Zero());
  r["distance_to_line_through_origin"] = dist;
  r["distance_to_line_over_h"] = dist / g.spacing();
  r["line_direction"] = vec_json(dir);
  if (!S.boundary_vertices.empty()) {
    double worst = 0.0;
    json angles = json::array();
    for (const auto& a : contact_angle(S, c.domain())) {
      worst = std::max(worst, a.deviation_deg);
      angles.push_back(a.angle_deg);
    }
    r["contact_angles_deg"] = angles;
    r["max_contact_deviation_deg"] = worst;
  }
  const auto fit = graph_fit(S);
  r["graph_direction"] = vec_json(fit.direction);
  r["graph_lipschitz"] = fit.is_graph ? fit.lipschitz : std::numeric_limits<double>::infinity();
  r["is_graph"] = fit.is_graph;
  return r;
}

inline void run_isoperimetric(const ExperimentConfig& c, Workspace& ws) {
  const auto o = solve_phase_field(c, ws, c.phase_field.n);
  ws.body("body.json", c.domain());
  ws.interface("interface", o.interface, &c.domain(), "isoperimetric interface");
  json hist = json::array();
  for (double e : o.result.energy_history) hist.push_back(e);
  json h;
  h["energy"] = hist;
  h["stage_offsets"] = o.result.stage_offsets;
  ws.json_file("energy.json", h);
  ws.results() = phase_field_results(c, o);
}

inline json verdict_json(const StabilityVerdict& v) {
  json j;
  j["min_rayleigh"] = v.min_rayleigh;
  j["stable"] = v.stable;
  j["n"] = v.n;
  j["domain"] = v.domain;
  j["bc"] = v.bc;
  j["resolution"] = v.resolution;
  j["tolerance"] = v.tolerance;
  j["unconstrained_min"] = v.unconstrained_min;
  j["constraint_residual"] = v.constraint_residual;
  j["iterations"] = v.iterations;
  return j;
}

inline void run_stability(const ExperimentConfig& c, Workspace& ws) {
  const auto& s = c.stability;
  const Density& d = c.dens();
  const ConvexBody* body = nullptr;
  Interface S;
  json pf_results;
  if (s.source == "phase_field") {
    const auto o = solve_phase_field(c, ws, c.phase_field.n);
    S = o.interface;
    body = &c.domain();
    pf_results = phase_field_results(c, o);
  } else if (s.source == "circle") {
    S = make_circle_interface(Vec2::Zero(), s.radius, s.points);
  } else if (s.source == "segment") {
    const Vec2 t = (s.to - s.from).normalized();
    S = make_segment_interface(s.from, s.to, s.points, Vec2(-t.y(), t.x()));
    body = &c.domain();
    for (std::size_t v : {std::size_t{0}, S.vertices.size() - 1})
      if (std::abs(body->boundary_distance(Vec(S.vertices[v]))) < 1e-9) S.boundary_vertices.push_back(v);
  } else {
    S = make_x_network(s.points);
    body = &c.domain();
  }
  if (body) ws.body("body.json", *body);
  ws.interface("interface", S, body, "surface (" + s.source + ")");

  EigenOptions eo;
  eo.mean_zero = s.mean_zero;
  const auto v = ws.timed("eigen", [&] { return min_eigenvalue(S, d, body, eo); });
  const auto tt = ws.timed("translations", [&] { return translation_test(S, d, body, s.claims_symmetric); });
  ws.json_file("verdict.json", verdict_json(v));

  json t;
  t["q"] = tt.q;
  t["mean_residual"] = tt.mean;
  t["sum_q"] = tt.sum_q;
  t["expected_sum"] = tt.expected_sum;
  t["sum_rule_residual"] = tt.sum_rule_residual;
  t["unit_residual"] = tt.unit_residual;
  t["gradient_residual"] = tt.gradient_residual;
  t["some_negative"] = tt.some_negative;
  ws.json_file("translation.json", t);

  std::ostringstream w;
  w << "vertex,x,y,value\n";
  for (std::size_t k = 0; k < v.witness.values.size() && k < S.vertices.size(); ++k)
    w << k << ',' << csv_double(S.vertices[k].x()) << ',' << csv_double(S.vertices[k].y()) << ','
      << csv_double(v.witness.values[k]) << '\n';
  ws.text("witness.csv", w.str());

  json r;
  r["source"] = s.source;
  r["verdict"] = verdict_json(v);
  r["translation"] = t;
  r["weighted_length"] = perimeter(S, d);
  r["vertices"] = S.vertices.size();
  if (!pf_results.is_null()) r["phase_field"] = pf_results;
  ws.results() = r;
}

inline json hot_spots_json(const EigenResult& e, const HotSpotsReport& h) {
  json j;
  j["lambda"] = e.lambda;
  j["residual"] = e.residual;
  j["degenerate"] = e.degenerate;
  j["iterations"] = e.iterations;
  j["argmax"] = vec_json(h.argmax);
  j["argmin"] = vec_json(h.argmin);
  j["max_boundary_distance"] = h.max_boundary_distance;
  j["min_boundary_distance"] = h.min_boundary_distance;
  j["direction"] = vec_json(h.direction);
  j["margin"] = h.margin;
  j["monotone"] = h.monotone;
  j["collar"] = h.collar;
  j["interior_cells"] = h.interior_cells;
  j["nodal_direction"] = vec_json(h.nodal_direction);
  j["nodal_lipschitz"] = h.nodal ? h.nodal_lipschitz : std::numeric_limits<double>::infinity();
  j["nodal_found"] = h.nodal.has_value();
  return j;
}

inline void run_spectral(const ExperimentConfig& c, Workspace& ws) {
  const ConvexBody& body = *c.body->body;
  const auto g = Grid::over(body, c.spectral.n);
  const auto res = ws.timed("eigensolve", [&] { return solve_neumann(body, g, c.spectral.modes, c.spectral.neumann); });
  ws.body("body.json", body);
  json modes = json::array();
  for (std::size_t i = 0; i < res.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    ws.field("field-u" + id, res[i].u);
    const auto h = ws.timed("hot_spots_" + id, [&] { return hot_spots_check(res[i], body, c.spectral.hot_spots); });
    if (h.nodal) ws.interface("nodal-" + id, *h.nodal, &body, "nodal set of u" + id);
    modes.push_back(hot_spots_json(res[i], h));
  }
  ws.json_file("hotspots.json", modes);
  json r;
  r["cells_across"] = c.spectral.n;
  r["spacing"] = g->spacing();
  r["modes"] = modes;
  r["lambda"] = res.front().lambda;
  ws.results() = r;
}

inline void run_deform(const ExperimentConfig& c, Workspace& ws) {
  DeformOptions opt;
  opt.support_samples = c.deform.support_samples;
  opt.cells_across = c.spectral.n;
  opt.neumann = c.spectral.neumann;
  opt.hot_spots = c.spectral.hot_spots;
  const auto res = ws.timed("deform", [&] { return deform_family(*c.body->body, *c.deform.target.body, c.deform.steps, opt); });
  ws.body("body.json", *c.body->body);
  ws.body("target.json", *c.deform.target.body);
  json steps = json::array();
  std::ostringstream csv;
  csv << "t,lambda,margin,direction_x,direction_y,lipschitz,extrema_boundary_distance,degenerate\n";
  for (const auto& s : res.steps) {
    json j;
    j["t"] = s.t;
    j["lambda"] = s.lambda;
    j["margin"] = s.margin;
    j["direction"] = vec_json(s.direction);
    j["lipschitz"] = s.lipschitz;
    j["extrema_boundary_distance"] = s.extrema_boundary_distance;
    j["degenerate"] = s.degenerate;
    steps.push_back(j);
    csv << csv_double(s.t) << ',' << csv_double(s.lambda) << ',' << csv_double(s.margin) << ',' << csv_double(s.direction.x())
        << ',' << csv_double(s.direction.y()) << ',' << csv_double(s.lipschitz) << ',' << csv_double(s.extrema_boundary_distance)
        << ',' << (s.degenerate ? 1 : 0) << '\n';
  }
  ws.json_file("deform.json", steps);
  ws.text("deform.csv", csv.str());
  json r;
  r["steps"] = steps;
  r["cells_across"] = c.spectral.n;
  r["first_nonpositive"] = res.first_nonpositive ? json(*res.first_nonpositive) : json(nullptr);
  ws.results() = r;
}

inline json report_json(const ConjectureReport& r) {
  json j;
  j["schema_version"] = ConjectureReport::kSchemaVersion;
  j["name"] = r.name;
  j["inputs_digest"] = r.inputs_digest;
  json s = json::object();
  for (const auto& [k, v] : r.scalars) s[k] = v;
  j["scalars"] = s;
  j["verdict"] = to_string(r.verdict);
  j["notes"] = r.notes;
  return j;
}

struct BatteryPass {
  RegionLabel region;
  TwoHyperplane th;
  std::vector<ConjectureReport> reports;
  std::optional<Interface> interface;
  json phase_field;
};

inline BatteryPass battery_pass(const ExperimentConfig& c, Workspace& ws, int n, const std::string& tag) {
  BatteryPass p;
  if (c.region.source == "phase_field") {
    const auto o = solve_phase_field(c, ws, n, tag);
    p.region = RegionLabel::from_field(o.result.field, c.dens(), true);
    p.interface = o.interface;
    p.phase_field = phase_field_results(c, o);
  } else {
    const auto g = Grid::over(c.domain(), n);
    const Vec2 a = c.region.normal.normalized();
    const double off = c.region.offset;
    p.region = RegionLabel::from_level(g, c.dens(), [&](const Vec2& x) { return a.dot(x) - off; }, false);
    p.interface = extract(p.region.level, 0.0);
  }
  p.th = ws.timed("two_hyperplane" + tag, [&] { return two_hyperplane_margin(p.region); });
  const ConvexBody* body = c.dens().is_uniform() ? &c.domain() : nullptr;
  p.reports = ws.timed("battery" + tag, [&] { return conjecture_battery(p.region, body, &p.th); });
  return p;
}

inline void run_battery(const ExperimentConfig& c, Workspace& ws) {
  const int n = c.phase_field.n;
  BatteryPass pass = battery_pass(c, ws, n, "");
  auto violated = [](const BatteryPass& p) {
    return std::any_of(p.reports.begin(), p.reports.end(), [](const auto& r) { return r.verdict == Verdict::violated; });
  };
  json r;
  json first = json::array();
  for (const auto& rep : pass.reports) first.push_back(report_json(rep));
  if (violated(pass) && c.region.rerun_on_violation) {
    // Confirm at double resolution before reporting a violation.
    r["coarse_reports"] = first;
    r["rerun"] = true;
    pass = battery_pass(c, ws, 2 * n, "-fine");
  } else {
    r["rerun"] = false;
  }
  json reports = json::array();
  for (const auto& rep : pass.reports) reports.push_back(report_json(rep));
  json doc;
  doc["schema_version"] = ConjectureReport::kSchemaVersion;
  doc["inputs_digest"] = pass.region.digest();
  doc["spacing"] = pass.region.grid().spacing();
  doc["alpha"] = pass.region.alpha;
  doc["density"] = c.dens().name();
  doc["reports"] = reports;
  ws.json_file("conjectures.json", doc);

  std::ostringstream scan;
  scan << "angle,c1,c2,b\n";
  for (const auto& s : pass.th.scan)
    scan << csv_double(s.angle) << ',' << csv_double(s.c1) << ',' << csv_double(s.c2) << ',' << csv_double(s.b) << '\n';
  ws.text("scan.csv", scan.str());

  json w;
  w["halfspace"] = {{"normal", json::array({pass.th.witness.normal[0], pass.th.witness.normal[1]})},
                    {"offset", pass.th.witness.offset},
                    {"b_star", pass.th.b_star}};
  for (const auto& rep : pass.reports)
    if (rep.name == "cone") {
      const double ang = rep.scalars.at("cone_axis_angle");
      w["cone"] = {{"apex", json::array({rep.scalars.at("cone_apex_x"), rep.scalars.at("cone_apex_y")})},
                   {"axis", json::array({std::cos(ang), std::sin(ang)})},
                   {"half_angle", rep.scalars.at("cone_half_angle")},
                   {"mass", rep.scalars.at("cone_mass")}};
    }
  ws.json_file("witness.json", w);
  ws.body("body.json", c.domain());
  if (pass.interface && !pass.interface->chains.empty()) ws.interface("interface", *pass.interface, &c.domain(), "region boundary");

  r["alpha"] = pass.region.alpha;
  r["spacing"] = pass.region.grid().spacing();
  r["inputs_digest"] = pass.region.digest();
  r["reports"] = reports;
  if (!pass.phase_field.is_null()) r["phase_field"] = pass.phase_field;
  ws.results() = r;
}

inline void run_simons(const ExperimentConfig& c, Workspace& ws) {
  json verdicts = json::array();
  std::optional<double> reduced_n1;
  std::optional<bool> reduced_n1_stable;
  for (int n : c.simons.n)
    for (auto dom : c.simons.domains)
      for (auto bc : c.simons.bcs) {
        const auto v = ws.timed("simons_" + std::to_string(n) + "_" + to_string(dom) + "_" + to_string(bc),
                                [&] { return simons_reduced(n, dom, bc, c.simons.elements); });
        verdicts.push_back(verdict_json(v));
        if (n == 1 && dom == SimonsDomain::ball && bc == SimonsBc::volume_constrained) {
          reduced_n1 = v.min_rayleigh;
          reduced_n1_stable = v.stable;
        }
      }
  ws.json_file("verdicts.json", verdicts);
  json r;
  r["verdicts"] = verdicts;
  if (c.simons.cross_check && reduced_n1) {
    const auto disk = make_disk(1.0);
    const auto S = make_x_network(c.simons.per_ray);
    const auto v = ws.timed("cross_check", [&] { return min_eigenvalue(S, Density::uniform(disk), &disk); });
    ws.body("body.json", disk);
    ws.interface("interface", S, &disk, "planar cone {|x| = |y|} in the unit disk");
    json x;
    x["reduced"] = *reduced_n1;
    x["grid"] = verdict_json(v);
    x["agree"] = v.stable == *reduced_n1_stable;
    x["relative_difference"] = std::abs(v.min_rayleigh - *reduced_n1) / std::max(1e-300, std::abs(*reduced_n1));
    r["cross_check"] = x;
  }
  ws.results() = r;
}

inline void execute(const ExperimentConfig& c, Workspace& ws) {
  if (c.kind == "isoperimetric") return run_isoperimetric(c, ws);
  if (c.kind == "stability") return run_stability(c, ws);
  if (c.kind == "spectral") return run_spectral(c, ws);
  if (c.kind == "deform") return run_deform(c, ws);
  if (c.kind == "conjecture-battery") return run_battery(c, ws);
  if (c.kind == "simons") return run_simons(c, ws);
  throw ConfigError("unknown experiment kind '" + c.kind + "'");
}

/// Exclusive claim on a run id, held for the lifetime of the object.
class RunLock {
 public:
  static std::optional<RunLock> try_acquire(const fs::path& p) {
    std::FILE* f = std::fopen(p.c_str(), "wx");
    if (!f) return std::nullopt;
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
    return RunLock(p);
  }
  RunLock(RunLock&& o) noexcept : path_(std::move(o.path_)) { o.path_.clear(); }
  RunLock& operator=(RunLock&& o) noexcept {
    release();
    path_ = std::move(o.path_);
    o.path_.clear();
    return *this;
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() { release(); }

 private:
  void release() {
    if (!path_.empty()) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

  explicit RunLock(fs::path p) : path_(std::move(p)) {}
  fs::path path_;
};

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json record_json(const RunRecord& r, const ExperimentConfig& c, int threads, const std::string& started) {
  json j;
  j["schema_version"] = kRecordSchema;
  j["run_id"] = r.run_id;
  j["name"] = c.name;
  j["kind"] = r.kind;
  j["status"] = r.status;
  j["exit_code"] = r.exit_code;
  if (!r.ok()) j["error"] = {{"type", r.error_type}, {"message", r.error}};
  j["config_digest"] = r.config_digest;
  j["code_version"] = kCodeVersion;
  j["seed"] = c.seed;
  j["threads"] = threads;
  j["started_at"] = started;
  j["timings"] = r.timings;
  j["artifacts"] = r.artifacts;
  j["summary_hash"] = r.summary_hash;
  return j;
}

}  // namespace detail

/// Runs a validated config. Module errors are captured in the record; the
/// partial run is then moved under `<out>/failures/`.
inline RunRecord run(const ExperimentConfig& c, const RunOptions& opt = {}) {
  const fs::path out = opt.out ? *opt.out : fs::path(c.out.value_or("runs"));
  const int threads = opt.threads.value_or(c.threads.value_or(1));
  fs::create_directories(out);

  RunRecord rec;
  rec.kind = c.kind;
  rec.config_digest = c.digest;
  const std::string base = c.name + "-" + c.digest.substr(0, 12);
  std::optional<detail::RunLock> lock;
  for (int i = 1; !lock; ++i) {
    if (i > 10000) throw Error("could not allocate a run id under " + out.string());
    const std::string id = i == 1 ? base : base + "-" + std::to_string(i);
    if (fs::exists(out / id) || fs::exists(out / "failures" / id)) continue;
    lock = detail::RunLock::try_acquire(out / (id + ".lock"));
    if (lock && (fs::exists(out / id) || fs::exists(out / "failures" / id))) lock.reset();
    if (lock) rec.run_id = id;
  }

  const fs::path tmp = out / (".tmp-" + rec.run_id);
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  detail::Workspace ws(tmp);
  const std::string started = detail::utc_now();
  const int previous_threads = isolab::threads();
  set_threads(threads);
  const auto t0 = std::chrono::steady_clock::now();

  ws.text("config.toml", c.source_text);
  try {
    detail::execute(c, ws);
    rec.status = "ok";
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.exit_code = exit_code_for(e);
    rec.error_type = error_type(e);
    rec.error = e.what();
  }
  set_threads(previous_threads);
  ws.timings()["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.timings = ws.timings();

  if (rec.ok()) {
    json summary;
    summary["schema_version"] = kRecordSchema;
    summary["kind"] = c.kind;
    summary["name"] = c.name;
    summary["seed"] = c.seed;
    summary["config_digest"] = c.digest;
    summary["results"] = ws.results();
    const std::string text = to_json_text(summary);
    ws.text("summary.json", text);
    rec.summary = summary;
    rec.summary_hash = sha256_hex(text);
  }
  rec.artifacts = ws.artifacts();
  write_json_file(tmp / "record.json", detail::record_json(rec, c, threads, started));

  rec.dir = rec.ok() ? out / rec.run_id : out / "failures" / rec.run_id;
  fs::create_directories(rec.dir.parent_path());
  fs::rename(tmp, rec.dir);
  return rec;
}

inline RunRecord run_file(const fs::path& config, const RunOptions& opt = {}, std::optional<std::uint64_t> seed = std::nullopt) {
  return run(ExperimentConfig::from_file(config, seed), opt);
}

struct ReportBundle {
  fs::path dir;
  std::vector<std::string> files;
  std::vector<std::string> absent;
};

namespace detail {

inline std::vector<std::string> expected_artifacts(const std::string& kind, const json& record) {
  std::vector<std::string> e{"config.toml", "summary.json"};
  auto add = [&](std::initializer_list<const char*> l) {
    for (auto s : l) e.emplace_back(s);
  };
  if (kind == "isoperimetric") add({"field.bin", "field.json", "interface.csv", "interface.json", "interface.svg", "body.json"});
  if (kind == "stability") add({"verdict.json", "translation.json", "witness.csv", "interface.csv", "interface.json"});
  if (kind == "spectral") add({"field-u1.bin", "field-u1.json", "hotspots.json", "nodal-1.csv", "body.json"});
  if (kind == "deform") add({"deform.json", "deform.csv", "body.json", "target.json"});
  if (kind == "conjecture-battery") add({"conjectures.json", "scan.csv", "witness.json", "interface.csv", "body.json"});
  if (kind == "simons") add({"verdicts.json"});
  (void)record;
  return e;
}

inline std::optional<json> load_json(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  try {
    return json::parse(read_text(p));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline double num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline Vec2 vec_of(const json& j) { return Vec2(num(j.at(0)), num(j.at(1))); }

inline void flatten(const json& j, const std::string& prefix, std::ostream& os) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), os);
  } else if (j.is_array() && std::any_of(j.begin(), j.end(), [](const json& x) { return x.is_structured(); })) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", os);
  } else {
    os << prefix << " = ";
    if (j.is_number_float()) os << csv_double(j.get<double>());
    else if (j.is_array()) {
      os << "[";
      for (std::size_t i = 0; i < j.size(); ++i) os << (i ? ", " : "") << (j[i].is_number_float() ? csv_double(j[i].get<double>()) : j[i].dump());
      os << "]";
    } else os << (j.is_string() ? j.get<std::string>() : j.dump());
    os << "\n";
  }
}

/// Line a.x = c clipped to the box [lo, hi].
inline std::optional<std::pair<Vec2, Vec2>> clip_line_to_box(const Vec2& a, double c, const Vec2& lo, const Vec2& hi) {
  const Vec2 p = c * a, t(-a.y(), a.x());
  double s0 = -1e300, s1 = 1e300;
  for (int i = 0; i < 2; ++i) {
    if (std::abs(t[i]) < 1e-15) {
      if (p[i] < lo[i] || p[i] > hi[i]) return std::nullopt;
      continue;
    }
    double u = (lo[i] - p[i]) / t[i], v = (hi[i] - p[i]) / t[i];
    if (u > v) std::swap(u, v);
    s0 = std::max(s0, u);
    s1 = std::min(s1, v);
  }
  if (s0 > s1) return std::nullopt;
  return std::make_pair(Vec2(p + s0 * t), Vec2(p + s1 * t));
}

}  // namespace detail

/// Renders `<run-dir>/report/`: overlay.svg, summary.txt and kind-specific plots.
/// Missing artifacts are listed, never fatal.
inline ReportBundle report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw ConfigError("run directory not found: " + run_dir.string());
  ReportBundle b;
  const auto record = detail::load_json(run_dir / "record.json");
  const std::string kind = record && record->contains("kind") ? (*record)["kind"].get<std::string>() : "unknown";
  if (!record) b.absent.push_back("record.json");
  for (const auto& a : detail::expected_artifacts(kind, record.value_or(json())))
    if (!fs::exists(run_dir / a)) b.absent.push_back(a);

  const fs::path tmp = run_dir / ".report-tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(tmp / name, text);
    b.files.push_back(name);
  };

  // Overlay: body, interfaces, witnesses, extrema.
  std::vector<Vec2> body_pts;
  if (auto bj = detail::load_json(run_dir / "body.json"))
    for (const auto& v : (*bj)["vertices"]) body_pts.push_back(detail::vec_of(v));
  std::vector<std::pair<std::string, std::vector<std::vector<Vec2>>>> curves;
  for (const char* stem : {"interface", "nodal-1", "nodal-2", "nodal-3"}) {
    const fs::path p = run_dir / (std::string(stem) + ".csv");
    if (fs::exists(p)) {
      try {
        curves.emplace_back(stem, read_interface_csv(p));
      } catch (const std::exception&) {
        b.absent.push_back(std::string(stem) + ".csv (unreadable)");
      }
    }
  }
  std::vector<Vec2> frame = body_pts;
  for (const auto& [n, cs] : curves)
    for (const auto& c : cs) frame.insert(frame.end(), c.begin(), c.end());
  if (frame.empty()) frame = {Vec2(-1, -1), Vec2(1, 1)};
  Svg svg = Svg::around(frame, 0.08);
  if (!body_pts.empty()) svg.polyline(body_pts, "#333", 1.5, true, "#f4f4f4");
  const char* colors[] = {"#c0392b", "#2471a3", "#229954", "#7d3c98"};
  int ci = 0;
  for (const auto& [n, cs] : curves) {
    for (const auto& c : cs) svg.polyline(c, colors[ci % 4], 2.0);
    ++ci;
  }
  if (auto w = detail::load_json(run_dir / "witness.json")) {
    const Vec2 lo = svg.lo(), hi = svg.hi();
    if (w->contains("halfspace")) {
      const Vec2 a = detail::vec_of((*w)["halfspace"]["normal"]);
      const double c = detail::num((*w)["halfspace"]["offset"]);
      for (double s : {c, -c})
        if (auto seg = detail::clip_line_to_box(a, s, lo, hi)) svg.polyline({seg->first, seg->second}, "#d68910", 1.5, false, "none", "6 4");
    }
    if (w->contains("cone")) {
      const Vec2 apex = detail::vec_of((*w)["cone"]["apex"]), axis = detail::vec_of((*w)["cone"]["axis"]);
      const double ha = detail::num((*w)["cone"]["half_angle"]);
      const double len = (hi - lo).norm();
      for (double s : {ha, -ha}) {
        const Vec2 d(std::cos(s) * axis.x() - std::sin(s) * axis.y(), std::sin(s) * axis.x() + std::cos(s) * axis.y());
        svg.polyline({apex, Vec2(apex + len * d)}, "#7d3c98", 1.5, false, "none", "2 3");
      }
    }
  }
  if (auto h = detail::load_json(run_dir / "hotspots.json"))
    for (const auto& m : *h) {
      svg.circle(detail::vec_of(m["argmax"]), 4, "#c0392b");
      svg.circle(detail::vec_of(m["argmin"]), 4, "#2471a3");
    }
  svg.text_px(8, 16, kind + (record ? " / " + (*record)["run_id"].get<std::string>() : ""));
  emit("overlay.svg", svg.str());

  // Deformation curves.
  if (auto d = detail::load_json(run_dir / "deform.json")) {
    std::vector<double> t, margin, lip;
    std::ostringstream csv;
    csv << "t,margin,lipschitz\n";
    for (const auto& s : *d) {
      t.push_back(detail::num(s["t"]));
      margin.push_back(detail::num(s["margin"]));
      lip.push_back(detail::num(s["lipschitz"]));
      csv << csv_double(t.back()) << ',' << csv_double(margin.back()) << ',' << csv_double(lip.back()) << '\n';
    }
    emit("margin.svg", line_plot(t, {{"margin(t)", margin}}, "monotone margin along the family", "t"));
    emit("lipschitz.svg", line_plot(t, {{"L(t)", lip}}, "nodal-line Lipschitz constant", "t"));
    emit("curves.csv", csv.str());
  }

  // Conjecture table.
  std::ostringstream table;
  if (auto cj = detail::load_json(run_dir / "conjectures.json")) {
    std::ostringstream csv;
    csv << "check,verdict,key,value\n";
    table << "\nconjecture checks\n";
    for (const auto& r : (*cj)["reports"]) {
      table << "  " << r["name"].get<std::string>() << ": " << r["verdict"].get<std::string>() << "\n";
      for (auto it = r["scalars"].begin(); it != r["scalars"].end(); ++it) {
        table << "      " << it.key() << " = " << csv_double(detail::num(it.value())) << "\n";
        csv << r["name"].get<std::string>() << ',' << r["verdict"].get<std::string>() << ',' << it.key() << ','
            << csv_double(detail::num(it.value())) << '\n';
      }
    }
    emit("conjectures.csv", csv.str());
  }

  std::ostringstream txt;
  txt << "run: " << (record ? (*record)["run_id"].get<std::string>() : run_dir.filename().string()) << "\n";
  txt << "kind: " << kind << "\n";
  if (record) {
    txt << "status: " << (*record)["status"].get<std::string>() << "\n";
    if (record->contains("error")) txt << "error: " << (*record)["error"]["message"].get<std::string>() << "\n";
    txt << "config digest: " << (*record)["config_digest"].get<std::string>() << "\n";
    txt << "summary hash: " << (*record)["summary_hash"].get<std::string>() << "\n";
  }
  if (auto s = detail::load_json(run_dir / "summary.json")) {
    txt << "\nsummary\n";
    std::ostringstream flat;
    detail::flatten((*s)["results"], "", flat);
    std::istringstream lines(flat.str());
    for (std::string line; std::getline(lines, line);) txt << "  " << line << "\n";
  }
  txt << table.str();
  txt << "\nartifacts absent: " << (b.absent.empty() ? "none" : "") << "\n";
  for (const auto& a : b.absent) txt << "  " << a << "\n";
  emit("summary.txt", txt.str());

  json index;
  index["files"] = b.files;
  index["absent"] = b.absent;
  write_text(tmp / "index.json", to_json_text(index));
  b.files.push_back("index.json");

  b.dir = run_dir / "report";
  fs::remove_all(b.dir);
  fs::rename(tmp, b.dir);
  return b;
}

struct SuiteEntry {
  fs::path config;
  std::optional<RunRecord> record;
  int exit_code = kOk;
  std::string error;
};

struct SuiteResult {
  std::vector<SuiteEntry> entries;
  int exit_code = kOk;  ///< worst exit code over all configs
  fs::path index;
};

/// Runs every `*.toml` in `dir` (sorted by name), reports each run and writes
/// `<out>/suite.json` and `<out>/suite.txt`.
inline SuiteResult suite(const fs::path& dir, const RunOptions& opt = {}, std::optional<std::uint64_t> seed = std::nullopt) {
  if (!fs::is_directory(dir)) throw ConfigError("config directory not found: " + dir.string());
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".toml") configs.push_back(e.path());
  std::sort(configs.begin(), configs.end());
  if (configs.empty()) throw ConfigError("no .toml configs in " + dir.string());

  SuiteResult s;
  json rows = json::array();
  std::ostringstream txt;
  std::ostringstream battery;
  fs::path out = opt.out.value_or("runs");
  for (const auto& p : configs) {
    SuiteEntry e;
    e.config = p;
    json row;
    row["config"] = p.filename().string();
    try {
      auto c = ExperimentConfig::from_file(p, seed);
      if (!opt.out && c.out) out = *c.out;
      RunOptions o = opt;
      o.out = out;
      e.record = run(c, o);
      e.exit_code = e.record->exit_code;
      e.error = e.record->error;
      report(e.record->dir);
      row["run_id"] = e.record->run_id;
      row["status"] = e.record->status;
      row["summary_hash"] = e.record->summary_hash;
      if (e.record->ok() && c.kind == "conjecture-battery") {
        battery << p.filename().string();
        for (const auto& r : e.record->summary["results"]["reports"]) {
          const auto& sc = r["scalars"];
          for (const char* key : {"b_star", "hull_fraction", "kls_ratio"})
            if (sc.contains(key)) battery << "  " << key << "=" << csv_double(detail::num(sc[key]));
        }
        battery << "\n";
      }
    } catch (const std::exception& ex) {
      e.exit_code = exit_code_for(ex);
      e.error = ex.what();
      row["status"] = "rejected";
    }
    row["exit_code"] = e.exit_code;
    if (!e.error.empty()) row["error"] = e.error;
    txt << p.filename().string() << "  exit=" << e.exit_code << "  " << row["status"].get<std::string>()
        << (e.error.empty() ? "" : "  (" + e.error + ")") << "\n";
    s.exit_code = std::max(s.exit_code, e.exit_code);
    rows.push_back(row);
    s.entries.push_back(std::move(e));
  }
  if (!battery.str().empty()) txt << "\nconjecture battery (b*, hull fraction, KLS ratio)\n" << battery.str();
  fs::create_directories(out);
  json index;
  index["configs"] = rows;
  index["exit_code"] = s.exit_code;
  write_json_file(out / "suite.json", index);
  write_atomic(out / "suite.txt", txt.str());
  s.index = out / "suite.json";
  return s;
}

}  // namespace isolab::lab
