#pragma once

// Scenario files: flat "dotted.key = value" lines, '#' starts a comment.
// parse_config collects every problem before throwing; run() executes one
// pipeline and writes CSV/JSON artifacts with manifest.json written last.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hardylab/verify.hpp"

namespace hardylab {

inline constexpr const char* kToolVersion = "0.3.0";

struct Descriptor {
  std::string name;
  std::vector<double> args;
  std::string text;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::map<std::string, std::string> entries;

  MeshKind mesh_kind = MeshKind::radial;
  int n_dim = 3;
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  int cells = 0, nx = 0, ny = 0;
  Grading grading;
  std::optional<Box> hole;

  double p = 2.0;
  Descriptor A{"identity", {}, "identity"};
  Descriptor V{"zero", {}, "zero"};
  double eps_reg = 1e-14;

  std::optional<Density> density;
  std::string pipeline = "verify_all";

  std::string green_source = "exhaustion";
  int K = 8;
  int max_levels = 100;
  double tol_change = 1e-8;

  double load = 1.0;
  double solve_tol = 1e-10;
  int max_iters = 200;

  std::optional<std::uint64_t> seed;
  TestFunctionFamily family;

  std::vector<int> k_list{4, 8, 16, 32};
  std::vector<double> tau_list, t_list;
  /// Subset run by verify_all; empty means every applicable check.
  std::vector<std::string> checks;
  double margin_allowance = 1e-3;
  double overweight_factor = 1.5;
  std::string output_dir;

  /// Sorted key=value lines; the config hash is taken over this text.
  std::string canonical() const {
    std::string s;
    for (const auto& [k, v] : entries) s += k + "=" + v + "\n";
    return s;
  }
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }
};

inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> v{"hardy_margin",         "overweight_probe",        "exhaustion_monotonicity",
                                          "coarea_flux",          "null_criticality_growth", "null_sequence_decay",
                                          "chain_rule_residual", "simp_equivalence"};
  return v;
}

namespace detail {

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> v{
      "name",           "pipeline",        "seed",           "mesh.kind",         "mesh.x_min",
      "mesh.x_max",     "mesh.y_min",      "mesh.y_max",     "mesh.cells",        "mesh.nx",
      "mesh.ny",        "mesh.grading",    "mesh.hole",      "operator.p",        "operator.n",
      "operator.A",     "operator.V",      "operator.eps_reg", "density.center",  "density.radius",
      "density.mass",   "green.source",    "green.K",        "green.max_levels",  "green.tol_change",
      "solve.load",     "solve.tol",       "solve.max_iters", "family.kind",      "family.count",
      "family.margin",  "family.tilt",     "verify.k_list",  "verify.tau_list",   "verify.t_list",
      "verify.margin_allowance",           "verify.overweight_factor",            "verify.checks",
      "output.dir"};
  return v;
}

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::string last_segment(const std::string& k) {
  const auto d = k.rfind('.');
  return d == std::string::npos ? k : k.substr(d + 1);
}

/// Closest known key, comparing full keys and their last segments.
inline std::optional<std::string> suggest_key(const std::string& key) {
  std::size_t best = 3;
  std::optional<std::string> out;
  for (const auto& k : known_keys()) {
    const std::size_t d = std::min(levenshtein(key, k), levenshtein(last_segment(key), last_segment(k)));
    if (d < best) {
      best = d;
      out = k;
    }
  }
  return out;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::optional<double> to_real(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

/// "name" or "name(a, b, ...)".
inline std::optional<Descriptor> parse_descriptor(const std::string& s) {
  Descriptor d;
  d.text = s;
  const auto open = s.find('(');
  if (open == std::string::npos) {
    d.name = s;
    return d;
  }
  if (s.back() != ')') return std::nullopt;
  d.name = trim(s.substr(0, open));
  const std::string inner = s.substr(open + 1, s.size() - open - 2);
  if (!trim(inner).empty())
    for (const auto& a : split(inner, ',')) {
      const auto v = to_real(a);
      if (!v) return std::nullopt;
      d.args.push_back(*v);
    }
  return d;
}

/// Reads typed values out of the raw entries, collecting errors.
class Reader {
 public:
  Reader(const std::map<std::string, std::string>& e, std::vector<std::string>& errors) : e_(e), errors_(errors) {}

  bool has(const std::string& k) const { return e_.count(k) != 0; }

  void real(const std::string& k, double& out) {
    if (!has(k)) return;
    if (auto v = to_real(e_.at(k)))
      out = *v;
    else
      errors_.push_back(k + ": expected a number, got '" + e_.at(k) + "'");
  }
  void integer(const std::string& k, int& out) {
    if (!has(k)) return;
    const auto v = to_real(e_.at(k));
    if (v && *v == std::floor(*v) && std::abs(*v) < 1e9)
      out = static_cast<int>(*v);
    else
      errors_.push_back(k + ": expected an integer, got '" + e_.at(k) + "'");
  }
  void text(const std::string& k, std::string& out) {
    if (has(k)) out = e_.at(k);
  }
  std::vector<double> reals(const std::string& k) {
    std::vector<double> out;
    if (!has(k)) return out;
    for (const auto& a : split(e_.at(k), ',')) {
      if (auto v = to_real(a))
        out.push_back(*v);
      else {
        errors_.push_back(k + ": '" + a + "' is not a number");
        return {};
      }
    }
    return out;
  }

 private:
  const std::map<std::string, std::string>& e_;
  std::vector<std::string>& errors_;
};

inline bool pipeline_uses_family(const std::string& pipeline) {
  return pipeline == "verify_all" || pipeline == "verify:hardy_margin" || pipeline == "verify:overweight_probe" ||
         pipeline == "verify:simp_equivalence";
}

}  // namespace detail

/// Parses scenario text; throws ConfigError listing every problem found.
inline ScenarioConfig parse_config_text(const std::string& text, const std::string& name = "scenario") {
  ScenarioConfig cfg;
  cfg.name = name;
  std::vector<std::string> errors;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  const std::set<std::string> known(detail::known_keys().begin(), detail::known_keys().end());
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    if (!known.count(key)) {
      std::string msg = "line " + std::to_string(lineno) + ": unknown key '" + key + "'";
      if (auto s = detail::suggest_key(key)) msg += " (did you mean '" + *s + "'?)";
      errors.push_back(msg);
      continue;
    }
    if (cfg.entries.count(key)) errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.entries[key] = value;
  }

  detail::Reader r(cfg.entries, errors);
  r.text("name", cfg.name);
  r.text("pipeline", cfg.pipeline);
  {
    bool ok = cfg.pipeline == "solve" || cfg.pipeline == "green" || cfg.pipeline == "weight" ||
              cfg.pipeline == "verify_all";
    if (cfg.pipeline.rfind("verify:", 0) == 0) {
      const std::string c = cfg.pipeline.substr(7);
      ok = std::find(known_checks().begin(), known_checks().end(), c) != known_checks().end();
    }
    if (!ok) errors.push_back("pipeline: '" + cfg.pipeline + "' is not one of solve, green, weight, verify_all, verify:<check>");
  }

  std::string kind = "radial";
  r.text("mesh.kind", kind);
  if (kind == "radial")
    cfg.mesh_kind = MeshKind::radial;
  else if (kind == "interval")
    cfg.mesh_kind = MeshKind::interval;
  else if (kind == "tensor2d")
    cfg.mesh_kind = MeshKind::tensor2d;
  else
    errors.push_back("mesh.kind: '" + kind + "' is not radial, interval or tensor2d");
  const bool oned = cfg.mesh_kind != MeshKind::tensor2d;

  r.real("mesh.x_min", cfg.x_min);
  r.real("mesh.x_max", cfg.x_max);
  r.real("mesh.y_min", cfg.y_min);
  r.real("mesh.y_max", cfg.y_max);
  if (!(cfg.x_min < cfg.x_max)) errors.push_back("mesh.x_min must be below mesh.x_max");
  if (!oned && !(cfg.y_min < cfg.y_max)) errors.push_back("mesh.y_min must be below mesh.y_max");
  if (cfg.mesh_kind == MeshKind::radial && !(cfg.x_min > 0.0)) errors.push_back("mesh.x_min must be > 0 on radial meshes");
  r.integer("mesh.cells", cfg.cells);
  r.integer("mesh.nx", cfg.nx);
  r.integer("mesh.ny", cfg.ny);
  if (oned && cfg.cells < 8) errors.push_back("mesh.cells must be >= 8");
  if (!oned && (cfg.nx < 8 || cfg.ny < 8)) errors.push_back("mesh.nx and mesh.ny must be >= 8");
  if (r.has("mesh.grading")) {
    const auto d = detail::parse_descriptor(cfg.entries["mesh.grading"]);
    if (d && d->name == "uniform" && d->args.empty())
      cfg.grading = Grading::uniform();
    else if (d && d->name == "log_uniform" && d->args.empty())
      cfg.grading = Grading::log_uniform();
    else if (d && d->name == "geometric" && d->args.size() == 1 && d->args[0] > 0.0)
      cfg.grading = Grading::geometric(d->args[0]);
    else
      errors.push_back("mesh.grading: expected uniform, log_uniform or geometric(ratio)");
    if (!oned && cfg.grading.kind != Grading::Kind::uniform) errors.push_back("mesh.grading: tensor2d grids are uniform");
  }
  if (r.has("mesh.hole")) {
    const auto h = r.reals("mesh.hole");
    if (oned)
      errors.push_back("mesh.hole: only tensor2d meshes take a hole");
    else if (h.size() != 4 || !(h[0] < h[1]) || !(h[2] < h[3]))
      errors.push_back("mesh.hole: expected x0, x1, y0, y1 with x0 < x1 and y0 < y1");
    else
      cfg.hole = Box{h[0], h[1], h[2], h[3]};
  }

  r.real("operator.p", cfg.p);
  if (!(cfg.p > 1.0)) errors.push_back("operator.p: p must exceed 1");
  r.integer("operator.n", cfg.n_dim);
  if (cfg.mesh_kind == MeshKind::radial && cfg.n_dim < 2) errors.push_back("operator.n must be >= 2 on radial meshes");
  if (cfg.mesh_kind == MeshKind::interval) cfg.n_dim = 1;
  if (cfg.mesh_kind == MeshKind::tensor2d) {
    if (r.has("operator.n") && cfg.n_dim != 2) errors.push_back("operator.n must be 2 on tensor2d meshes");
    cfg.n_dim = 2;
  }
  if (r.has("operator.A")) {
    const auto d = detail::parse_descriptor(cfg.entries["operator.A"]);
    const bool ok = d && ((d->name == "identity" && d->args.empty()) ||
                          (d->name == "diag" && d->args.size() == 2 && d->args[0] > 0 && d->args[1] > 0) ||
                          (d->name == "rotdiag" && d->args.size() == 3 && d->args[0] > 0 && d->args[1] > 0));
    if (ok)
      cfg.A = *d;
    else
      errors.push_back("operator.A: expected identity, diag(a,b) or rotdiag(a,b,theta) with a, b > 0");
  }
  if (r.has("operator.V")) {
    const auto d = detail::parse_descriptor(cfg.entries["operator.V"]);
    const bool ok = d && ((d->name == "zero" && d->args.empty()) || (d->name == "constant" && d->args.size() == 1) ||
                          (d->name == "power" && d->args.size() == 2) ||
                          (d->name == "annulus" && d->args.size() == 3 && d->args[1] < d->args[2]));
    if (ok)
      cfg.V = *d;
    else
      errors.push_back("operator.V: expected zero, constant(c), power(c,e) or annulus(amp,r0,r1) with r0 < r1");
  }
  r.real("operator.eps_reg", cfg.eps_reg);
  if (!(cfg.eps_reg >= 0.0)) errors.push_back("operator.eps_reg must be >= 0");

  if (r.has("density.center") || r.has("density.radius") || r.has("density.mass")) {
    Density d;
    const auto c = r.reals("density.center");
    if (c.size() != (oned ? 1u : 2u))
      errors.push_back(std::string("density.center: expected ") + (oned ? "one coordinate" : "two coordinates"));
    else
      d.center = {c[0], oned ? 0.0 : c[1]};
    r.real("density.radius", d.radius);
    r.real("density.mass", d.mass);
    if (!(d.radius > 0.0)) errors.push_back("density.radius must be > 0");
    if (!(d.mass > 0.0)) errors.push_back("density.mass must be > 0");
    cfg.density = d;
  }

  r.text("green.source", cfg.green_source);
  if (cfg.green_source != "exhaustion" && cfg.green_source != "oracle")
    errors.push_back("green.source: expected exhaustion or oracle");
  r.integer("green.K", cfg.K);
  r.integer("green.max_levels", cfg.max_levels);
  r.real("green.tol_change", cfg.tol_change);
  if (cfg.K < 1) errors.push_back("green.K must be >= 1");
  if (cfg.max_levels < 1) errors.push_back("green.max_levels must be >= 1");
  if (!(cfg.tol_change > 0.0)) errors.push_back("green.tol_change must be > 0");
  const bool needs_green = cfg.pipeline != "solve";
  if (needs_green && cfg.green_source == "exhaustion" && !cfg.density)
    errors.push_back("density.center/radius: the " + cfg.pipeline + " pipeline needs a density");
  if (needs_green && cfg.green_source == "oracle") {
    if (cfg.mesh_kind != MeshKind::radial) errors.push_back("green.source=oracle needs a radial mesh");
    if (cfg.A.name != "identity" || cfg.V.name != "zero")
      errors.push_back("green.source=oracle needs operator.A = identity and operator.V = zero");
    if (!(cfg.p < cfg.n_dim)) errors.push_back("green.source=oracle needs p < n");
  }

  r.real("solve.load", cfg.load);
  r.real("solve.tol", cfg.solve_tol);
  r.integer("solve.max_iters", cfg.max_iters);
  if (!(cfg.solve_tol > 0.0)) errors.push_back("solve.tol must be > 0");
  if (cfg.max_iters < 1) errors.push_back("solve.max_iters must be >= 1");

  if (r.has("seed")) {
    const auto v = detail::to_real(cfg.entries["seed"]);
    if (v && *v >= 0 && *v == std::floor(*v) && *v < 9e15)
      cfg.seed = static_cast<std::uint64_t>(*v);
    else
      errors.push_back("seed: expected a non-negative integer");
  }
  std::string fk = "random_bumps";
  r.text("family.kind", fk);
  if (fk == "random_bumps")
    cfg.family.kind = TestFunctionFamily::Kind::random_bumps;
  else if (fk == "tensor_sines")
    cfg.family.kind = TestFunctionFamily::Kind::tensor_sines;
  else if (fk == "hat_products")
    cfg.family.kind = TestFunctionFamily::Kind::hat_products;
  else
    errors.push_back("family.kind: expected random_bumps, tensor_sines or hat_products");
  r.integer("family.count", cfg.family.count);
  r.real("family.margin", cfg.family.margin);
  if (cfg.family.count < 1) errors.push_back("family.count must be >= 1");
  if (!(cfg.family.margin >= 0.0 && cfg.family.margin < 0.5)) errors.push_back("family.margin must lie in [0, 0.5)");
  if (r.has("family.tilt")) {
    const auto t = r.reals("family.tilt");
    if (t.size() != 2 || t[0] > t[1])
      errors.push_back("family.tilt: expected lo, hi with lo <= hi");
    else
      cfg.family.tilt_lo = t[0], cfg.family.tilt_hi = t[1];
  }
  if (detail::pipeline_uses_family(cfg.pipeline) && !cfg.seed)
    errors.push_back("seed: required by the " + cfg.pipeline + " pipeline (randomized test functions)");
  if (cfg.seed) cfg.family.seed = *cfg.seed;

  if (r.has("verify.k_list")) {
    cfg.k_list.clear();
    for (double k : r.reals("verify.k_list")) {
      if (k < 2 || k != std::floor(k)) {
        errors.push_back("verify.k_list: entries must be integers >= 2");
        break;
      }
      cfg.k_list.push_back(static_cast<int>(k));
    }
  }
  cfg.tau_list = r.reals("verify.tau_list");
  for (double t : cfg.tau_list)
    if (!(t > 0.0)) errors.push_back("verify.tau_list: entries must be > 0");
  cfg.t_list = r.reals("verify.t_list");
  r.real("verify.margin_allowance", cfg.margin_allowance);
  r.real("verify.overweight_factor", cfg.overweight_factor);
  if (!(cfg.margin_allowance >= 0.0)) errors.push_back("verify.margin_allowance must be >= 0");
  if (!(cfg.overweight_factor > 1.0)) errors.push_back("verify.overweight_factor must exceed 1");
  if (r.has("verify.checks")) {
    for (const auto& c : detail::split(cfg.entries["verify.checks"], ','))
      if (std::find(known_checks().begin(), known_checks().end(), c) == known_checks().end())
        errors.push_back("verify.checks: unknown check '" + c + "'");
      else
        cfg.checks.push_back(c);
    if (cfg.pipeline != "verify_all") errors.push_back("verify.checks only applies to pipeline = verify_all");
  }
  r.text("output.dir", cfg.output_dir);
  if (cfg.output_dir.empty()) cfg.output_dir = "out/" + cfg.name;

  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " configuration error(s):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

inline ScenarioConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.stem().string());
}

// ---------------------------------------------------------------------------
// building blocks from a config

inline MeshPtr build_mesh(const ScenarioConfig& c) {
  switch (c.mesh_kind) {
    case MeshKind::radial: return build_radial_mesh(c.n_dim, c.x_min, c.x_max, c.cells, c.grading);
    case MeshKind::interval: return build_interval_mesh(c.x_min, c.x_max, c.cells, c.grading);
    case MeshKind::tensor2d: return build_tensor_mesh({c.x_min, c.x_max}, {c.y_min, c.y_max}, c.nx, c.ny, c.hole);
  }
  throw ConfigError("unknown mesh kind");
}

inline ProblemSpec build_spec(const ScenarioConfig& c, const MeshPtr& m) {
  MatrixField A = c.A.name == "diag"      ? MatrixField::diag(m, c.A.args[0], c.A.args[1])
                  : c.A.name == "rotdiag" ? MatrixField::rotated_diag(m, c.A.args[0], c.A.args[1], c.A.args[2])
                                          : MatrixField::identity(m);
  const auto& a = c.V.args;
  const std::string vn = c.V.name;
  auto radius = [&](double x, double y) { return m->one_dimensional() ? std::abs(x) : std::hypot(x, y); };
  CellField V = sample_cells(m, [&](double x, double y) {
    const double r = radius(x, y);
    if (vn == "constant") return a[0];
    if (vn == "power") return a[0] * std::pow(r, a[1]);
    if (vn == "annulus") {
      if (r <= a[1] || r >= a[2]) return 0.0;
      const double s = (r - 0.5 * (a[1] + a[2])) / (0.5 * (a[2] - a[1]));
      return a[0] * (1.0 - s * s) * (1.0 - s * s);
    }
    return 0.0;
  });
  return ProblemSpec::make(c.p, m, std::move(A), std::move(V), c.eps_reg);
}

// ---------------------------------------------------------------------------
// run

struct RunOutcome {
  int exit_code = 0;
  std::filesystem::path directory;
  nlohmann::json manifest;
};

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  template <class F>
  void write(const std::string& name, F&& body) {
    std::ofstream os(dir_ / name);
    if (!os) throw Error("cannot write " + (dir_ / name).string());
    body(os);
    paths_.push_back(name);
  }
  void json(const std::string& name, const nlohmann::json& j) {
    write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }
  const std::vector<std::string>& paths() const { return paths_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> paths_;
};

/// Levels between 0.5 min_{supp phi} G and two decades below (the sublevel threshold default).
inline double support_floor(const GreenPotential& gp) {
  const Mesh& m = gp.G.mesh();
  const auto sup = gp.support_cells();
  double lo = INFINITY;
  for (std::size_t c = 0; c < m.cell_count(); ++c)
    if (sup[c])
      for (int n : m.cell_nodes(c)) lo = std::min(lo, gp.G[n]);
  return lo;
}

inline std::vector<double> geometric_levels(double hi, double decades, int count) {
  std::vector<double> t;
  for (int i = 0; i < count; ++i) t.push_back(hi * std::pow(10.0, -decades * i / (count - 1)));
  return t;
}

/// Smooth positive closed-form profile for the chain-rule check.
inline ScalarField chain_rule_profile(const MeshPtr& m) {
  if (m->kind == MeshKind::radial) return sample_nodes(m, [](double r) { return 1.0 / r; });
  if (m->kind == MeshKind::interval) return sample_nodes(m, [](double x) { return 2.0 + std::sin(x); });
  return sample_nodes(m, [](double x, double y) { return 2.0 + std::sin(x) * std::cos(y); });
}

}  // namespace detail

/// Runs the configured pipeline. Output goes to <root>/<output.dir>, where root is
/// $HARDYLAB_OUTPUT_ROOT when set and the working directory otherwise.
inline RunOutcome run(const ScenarioConfig& cfg, std::ostream* log = nullptr) {
  namespace fs = std::filesystem;
  fs::path root = ".";
  if (const char* env = std::getenv("HARDYLAB_OUTPUT_ROOT"); env && *env) root = env;
  RunOutcome out;
  out.directory = root / cfg.output_dir;
  detail::ArtifactWriter w(out.directory);

  nlohmann::json manifest;
  manifest["config_hash"] = "fnv1a64:" + detail::hex64(cfg.hash());
  manifest["tool_version"] = kToolVersion;
  manifest["scenario"] = cfg.name;
  manifest["pipeline"] = cfg.pipeline;
  manifest["started"] = detail::utc_now();
  manifest["reports"] = nlohmann::json::array();
  w.write("config.cfg", [&](std::ostream& os) { os << cfg.canonical(); });

  int exit_code = 0;
  auto add_report = [&](const VerificationReport& r) {
    w.json(r.check_name + ".json", r.to_json());
    w.write(r.check_name + ".txt", [&](std::ostream& os) { os << r.to_text(); });
    if (!r.table.empty()) w.write(r.check_name + ".csv", [&](std::ostream& os) { r.table.write_csv(os); });
    manifest["reports"].push_back({{"check_name", r.check_name}, {"pass", r.pass}});
    if (log) *log << r.to_text(false);
    if (!r.pass) exit_code = 1;
  };

  try {
    const MeshPtr m = build_mesh(cfg);
    const ProblemSpec spec = build_spec(cfg, m);

    if (cfg.pipeline == "solve") {
      SolveOptions o;
      o.tol_residual = cfg.solve_tol;
      o.max_iters = cfg.max_iters;
      const SolveResult s = dirichlet_solve(spec, ScalarField::constant(m, cfg.load), {}, o);
      w.write("solution.csv", [&](std::ostream& os) { write_node_csv(os, *m, {{"u", s.u.values()}}); });
      nlohmann::json hist = nlohmann::json::array();
      for (const auto& h : s.history) hist.push_back({h.iter, h.residual, h.energy, h.step_size});
      w.json("solve.json", {{"converged", s.converged},
                            {"residual", s.residual_norm},
                            {"iterations", s.iterations},
                            {"roundoff_floor", s.roundoff_floor},
                            {"max_u", s.u.max()},
                            {"history", hist}});
      if (log) *log << "solve: converged in " << s.iterations << " iterations, max u = " << format_double(s.u.max()) << '\n';
    } else {
      // Green potential, assumptions and weight
      OptimalPair pair;
      if (cfg.green_source == "oracle") {
        const ScalarField G = sample_oracle(m, radial_green_oracle(cfg.p, cfg.n_dim));
        GreenPotential gp = GreenPotential::from_field(spec, G);
        AssumptionCheck chk = check_assumptions(spec, gp);
        HardyWeight hw = weight_from_green(spec, gp, &chk);
        pair = OptimalPair{spec, spec, std::move(gp), std::move(chk), std::move(hw)};
      } else {
        GreenOptions go;
        go.max_levels = cfg.max_levels;
        go.tol_change = cfg.tol_change;
        pair = optimal_pair(spec, *cfg.density, cfg.K, go);
      }
      const GreenPotential& gp = pair.green;
      w.write("green.csv", [&](std::ostream& os) {
        write_node_csv(os, *m, {{"G", gp.G.values()}, {"density", gp.density.values()}});
      });
      nlohmann::json side = gp.sidecar();
      side["assumptions"] = pair.check.to_json();
      w.json("green.json", side);
      if (log)
        *log << "green: " << gp.source << ", " << gp.trace.size() << " levels, sup G = " << format_double(gp.G.max())
             << '\n';

      if (cfg.pipeline != "green") {
        const HardyWeight& hw = pair.weight;
        std::vector<double> region(hw.closed_form_region.begin(), hw.closed_form_region.end());
        w.write("weight.csv", [&](std::ostream& os) {
          write_cell_csv(os, *m, {{"W", hw.W.values()}, {"closed_form", region}});
        });
        w.write("ground_state.csv", [&](std::ostream& os) {
          write_node_csv(os, *m, {{"G", gp.G.values()}, {"v", hw.ground_state.values()}});
        });
        w.json("weight.json", hw.sidecar());
      }

      if (cfg.pipeline.rfind("verify", 0) == 0) {
        const HardyWeight& hw = pair.weight;
        std::set<std::string> wanted;
        if (cfg.pipeline == "verify_all") {
          if (cfg.checks.empty()) {
            wanted = std::set<std::string>(known_checks().begin(), known_checks().end());
            if (cfg.green_source == "oracle") wanted.erase("exhaustion_monotonicity");
          } else {
            wanted = std::set<std::string>(cfg.checks.begin(), cfg.checks.end());
          }
        } else {
          wanted.insert(cfg.pipeline.substr(7));
        }
        const bool oracle = cfg.green_source == "oracle";
        double gmin = INFINITY, gmax = 0.0;
        for (std::size_t i = 0; i < gp.G.size(); ++i)
          if (gp.G[i] > 0.0) gmin = std::min(gmin, gp.G[i]), gmax = std::max(gmax, gp.G[i]);
        const double l0 = std::log10(gmin), l1 = std::log10(gmax);

        for (const std::string& check : known_checks()) {
          if (!wanted.count(check)) continue;
          if (check == "hardy_margin") {
            HardyMarginOptions o;
            o.allowance = cfg.margin_allowance;
            add_report(hardy_margin(pair.spec_weighted, hw, cfg.family, o));
          } else if (check == "overweight_probe") {
            add_report(overweight_probe(pair.spec_weighted, hw, cfg.family, cfg.overweight_factor));
          } else if (check == "exhaustion_monotonicity") {
            detail::require(!oracle, "exhaustion_monotonicity needs green.source = exhaustion");
            add_report(exhaustion_monotonicity(gp));
          } else if (check == "coarea_flux") {
            std::vector<double> t = cfg.t_list;
            if (t.empty())
              t = oracle ? detail::geometric_levels(std::pow(10.0, l0 + 0.75 * (l1 - l0)), 0.5 * (l1 - l0), 5)
                         : detail::geometric_levels(0.5 * detail::support_floor(gp), 2.0, 5);
            add_report(oracle ? coarea_flux(gp.G, spec.A, cfg.p, t) : coarea_flux(gp, t));
          } else if (check == "null_criticality_growth") {
            const double t0 = oracle ? std::pow(10.0, l0 + 0.75 * (l1 - l0)) : 0.5 * detail::support_floor(gp);
            std::vector<double> tau = cfg.tau_list;
            if (tau.empty()) tau = {t0 * 1e-1, t0 * 1e-2, t0 * 1e-3, t0 * 1e-4};
            add_report(null_criticality_growth(hw, tau, t0));
          } else if (check == "null_sequence_decay") {
            // bounded G is rescaled so that f(G) <= 1 and the band {1/2 < f < 1} is fixed
            const ScalarField G = oracle ? gp.G : gp.G.scaled(1.0 / gmax);
            add_report(null_sequence_decay(critical_spec(pair.spec_weighted, hw), G, cfg.k_list));
          } else if (check == "chain_rule_residual") {
            add_report(chain_rule_residual(spec, detail::chain_rule_profile(m), power_transform((cfg.p - 1.0) / cfg.p)));
          } else if (check == "simp_equivalence") {
            // a genuine discrete positive solution: Q(v) = 0 inside, v = 1 on the boundary
            SolveOptions o;
            o.tol_residual = 1e-12;
            const std::vector<double> ones(m->boundary_nodes().size(), 1.0);
            const SolveResult v = dirichlet_solve(spec, ScalarField::zeros(m), ones, o);
            add_report(simp_equivalence(spec, v.u, cfg.family));
          }
        }
      }
    }
    manifest["status"] = "complete";
  } catch (const ConfigError& e) {
    exit_code = 3;
    manifest["status"] = "partial";
    manifest["error"] = {{"type", "config"}, {"message", e.what()}};
  } catch (const Error& e) {
    exit_code = 2;
    const std::string type = dynamic_cast<const CriticalitySuspected*>(&e) ? "criticality_suspected"
                             : dynamic_cast<const ConvergenceError*>(&e)   ? "convergence"
                                                                           : "construction";
    manifest["status"] = "partial";
    manifest["error"] = {{"type", type}, {"message", e.what()}};
    w.json("diagnostic.json", manifest["error"]);
    if (log) *log << "error (" << type << "): " << e.what() << '\n';
  }

  manifest["exit_code"] = exit_code;
  manifest["finished"] = detail::utc_now();
  manifest["artifacts"] = w.paths();
  const fs::path tmp = out.directory / "manifest.json.tmp";
  {
    std::ofstream os(tmp);
    os << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, out.directory / "manifest.json");
  out.exit_code = exit_code;
  out.manifest = std::move(manifest);
  return out;
}

/// Human-readable summary of a finished run.
inline void print_manifest(const std::filesystem::path& path, std::ostream& os) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path.string());
  const nlohmann::json m = nlohmann::json::parse(in);
  os << "scenario   " << m.value("scenario", "?") << '\n'
     << "pipeline   " << m.value("pipeline", "?") << '\n'
     << "status     " << m.value("status", "?") << " (exit " << m.value("exit_code", -1) << ")\n"
     << "config     " << m.value("config_hash", "?") << '\n'
     << "version    " << m.value("tool_version", "?") << '\n'
     << "started    " << m.value("started", "?") << '\n'
     << "finished   " << m.value("finished", "?") << '\n';
  if (m.contains("error")) os << "error      " << m["error"].value("message", "") << '\n';
  const auto dir = path.parent_path();
  for (const auto& r : m["reports"]) {
    const std::string name = r["check_name"];
    std::ifstream t(dir / (name + ".txt"));
    if (t)
      os << '\n' << t.rdbuf();
    else
      os << '\n' << name << ": " << (r["pass"].get<bool>() ? "PASS" : "FAIL") << '\n';
  }
  os << "\nartifacts:\n";
  for (const auto& a : m["artifacts"]) os << "  " << a.get<std::string>() << '\n';
}

}  // namespace hardylab
