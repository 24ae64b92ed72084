#include "zrp/experiments.hpp"
#include "zrp/observables.hpp"
#include "zrp/rng.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace zrp {

using nlohmann::json;

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Static: return "static";
    case ExperimentKind::Hydro: return "hydro";
    case ExperimentKind::Blocks: return "blocks";
    case ExperimentKind::Pde: return "pde";
    case ExperimentKind::Sample: return "sample";
    case ExperimentKind::Moments: return "moments";
  }
  return "unknown";
}

ExperimentKind parse_kind(std::string_view name) {
  for (auto k : {ExperimentKind::Static, ExperimentKind::Hydro, ExperimentKind::Blocks, ExperimentKind::Pde,
                 ExperimentKind::Sample, ExperimentKind::Moments})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown experiment kind '" + std::string(name) +
                              "' (expected static, hydro, blocks, pde, sample or moments)");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& target, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(where + "." + key + ": " + e.what());
  }
}

void read_hydro(const json& j, HydroSettings& h) {
  const std::string w = "hydro";
  reject_unknown(j, {"mode", "falsify", "tolerance", "ks_alpha", "slope_lo", "slope_hi", "min_r_squared", "pairs"}, w);
  read(j, "mode", h.mode, w);
  read(j, "falsify", h.falsify, w);
  read(j, "tolerance", h.tolerance, w);
  read(j, "ks_alpha", h.ks_alpha, w);
  read(j, "slope_lo", h.slope_lo, w);
  read(j, "slope_hi", h.slope_hi, w);
  read(j, "min_r_squared", h.min_r_squared, w);
  read(j, "pairs", h.pairs, w);
}

json write_hydro(const HydroSettings& h) {
  return {{"mode", h.mode},         {"falsify", h.falsify},       {"tolerance", h.tolerance},
          {"ks_alpha", h.ks_alpha}, {"slope_lo", h.slope_lo},     {"slope_hi", h.slope_hi},
          {"min_r_squared", h.min_r_squared}, {"pairs", h.pairs}};
}

void read_pde(const json& j, PdeSettings& p) {
  const std::string w = "pde";
  reject_unknown(j, {"dx", "length", "stationarity_tol", "mass_steps", "mass_dx", "mass_tol", "refine_dx0",
                     "refine_levels", "order_lo", "order_hi", "gauss_center", "gauss_width", "moment_tol",
                     "shape_tol", "shape_lo", "shape_hi", "comparison_tol"},
                 w);
  read(j, "dx", p.dx, w);
  read(j, "length", p.length, w);
  read(j, "stationarity_tol", p.stationarity_tol, w);
  read(j, "mass_steps", p.mass_steps, w);
  read(j, "mass_dx", p.mass_dx, w);
  read(j, "mass_tol", p.mass_tol, w);
  read(j, "refine_dx0", p.refine_dx0, w);
  read(j, "refine_levels", p.refine_levels, w);
  read(j, "order_lo", p.order_lo, w);
  read(j, "order_hi", p.order_hi, w);
  read(j, "gauss_center", p.gauss_center, w);
  read(j, "gauss_width", p.gauss_width, w);
  read(j, "moment_tol", p.moment_tol, w);
  read(j, "shape_tol", p.shape_tol, w);
  read(j, "shape_lo", p.shape_lo, w);
  read(j, "shape_hi", p.shape_hi, w);
  read(j, "comparison_tol", p.comparison_tol, w);
}

json write_pde(const PdeSettings& p) {
  return {{"dx", p.dx},
          {"length", p.length},
          {"stationarity_tol", p.stationarity_tol},
          {"mass_steps", p.mass_steps},
          {"mass_dx", p.mass_dx},
          {"mass_tol", p.mass_tol},
          {"refine_dx0", p.refine_dx0},
          {"refine_levels", p.refine_levels},
          {"order_lo", p.order_lo},
          {"order_hi", p.order_hi},
          {"gauss_center", p.gauss_center},
          {"gauss_width", p.gauss_width},
          {"moment_tol", p.moment_tol},
          {"shape_tol", p.shape_tol},
          {"shape_lo", p.shape_lo},
          {"shape_hi", p.shape_hi},
          {"comparison_tol", p.comparison_tol}};
}

void read_blocks(const json& j, BlockSettings& b) {
  const std::string w = "blocks";
  reject_unknown(j, {"half_widths", "particles", "center_frac", "two_block_offsets", "gap_particles",
                     "gap_half_widths", "gap_n", "slope_lo", "slope_hi", "compare_half_width",
                     "compare_particles", "compare_lo", "compare_hi", "ladder_offsets", "ladder_half_width",
                     "ladder_particles"},
                 w);
  read(j, "half_widths", b.half_widths, w);
  read(j, "particles", b.particles, w);
  read(j, "center_frac", b.center_frac, w);
  read(j, "two_block_offsets", b.two_block_offsets, w);
  read(j, "gap_particles", b.gap_particles, w);
  read(j, "gap_half_widths", b.gap_half_widths, w);
  read(j, "gap_n", b.gap_n, w);
  read(j, "slope_lo", b.slope_lo, w);
  read(j, "slope_hi", b.slope_hi, w);
  read(j, "compare_half_width", b.compare_half_width, w);
  read(j, "compare_particles", b.compare_particles, w);
  read(j, "compare_lo", b.compare_lo, w);
  read(j, "compare_hi", b.compare_hi, w);
  read(j, "ladder_offsets", b.ladder_offsets, w);
  read(j, "ladder_half_width", b.ladder_half_width, w);
  read(j, "ladder_particles", b.ladder_particles, w);
}

json write_blocks(const BlockSettings& b) {
  return {{"half_widths", b.half_widths},
          {"particles", b.particles},
          {"center_frac", b.center_frac},
          {"two_block_offsets", b.two_block_offsets},
          {"gap_particles", b.gap_particles},
          {"gap_half_widths", b.gap_half_widths},
          {"gap_n", b.gap_n},
          {"slope_lo", b.slope_lo},
          {"slope_hi", b.slope_hi},
          {"compare_half_width", b.compare_half_width},
          {"compare_particles", b.compare_particles},
          {"compare_lo", b.compare_lo},
          {"compare_hi", b.compare_hi},
          {"ladder_offsets", b.ladder_offsets},
          {"ladder_half_width", b.ladder_half_width},
          {"ladder_particles", b.ladder_particles}};
}

void read_moments(const json& j, MomentSettings& m) {
  const std::string w = "moments";
  reject_unknown(j, {"boundary_ladder", "entropy_slack", "boundary_ratio"}, w);
  read(j, "boundary_ladder", m.boundary_ladder, w);
  read(j, "entropy_slack", m.entropy_slack, w);
  read(j, "boundary_ratio", m.boundary_ratio, w);
}

void read_static(const json& j, StaticSettings& s) {
  reject_unknown(j, {"relative_tolerance"}, "static");
  read(j, "relative_tolerance", s.relative_tolerance, "static");
}

bool increasing(const std::vector<std::int64_t>& v) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i + 1] <= v[i]) return false;
  return true;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  const std::string w = "config";
  reject_unknown(j,
                 {"kind", "id", "regime", "beta", "u_id", "n_ladder", "c_frac", "boundary", "profile", "initial",
                  "t_macro", "replicas", "seed", "test_functions", "event_cap", "output_dir", "static", "hydro",
                  "pde", "blocks", "moments"},
                 w);
  ExperimentConfig c;
  if (!j.contains("kind")) throw std::invalid_argument("config: missing required key 'kind'");
  if (!j.contains("id")) throw std::invalid_argument("config: missing required key 'id'");
  std::string kind, regime = "beta0";
  read(j, "kind", kind, w);
  c.kind = parse_kind(kind);
  read(j, "id", c.id, w);
  read(j, "regime", regime, w);
  c.regime = parse_regime(regime);
  c.beta = EnergyRegime::default_beta(c.regime);
  read(j, "beta", c.beta, w);
  read(j, "u_id", c.u_id, w);
  read(j, "n_ladder", c.n_ladder, w);
  read(j, "c_frac", c.c_frac, w);
  read(j, "boundary", c.boundary, w);
  if (auto it = j.find("profile"); it != j.end()) {
    if (it->is_string()) {
      c.profile = it->get<std::string>();
    } else if (it->is_object() && it->contains("table") && (*it)["table"].is_string() && it->size() == 1) {
      c.profile = "table:" + (*it)["table"].get<std::string>();
    } else {
      throw std::invalid_argument("config.profile: expected a preset name or {\"table\": <path>}");
    }
  }
  read(j, "initial", c.initial, w);
  read(j, "t_macro", c.t_macro, w);
  read(j, "replicas", c.replicas, w);
  read(j, "seed", c.seed, w);
  read(j, "test_functions", c.test_functions, w);
  read(j, "event_cap", c.event_cap, w);
  read(j, "output_dir", c.output_dir, w);
  if (auto it = j.find("static"); it != j.end()) read_static(*it, c.statics);
  if (auto it = j.find("hydro"); it != j.end()) read_hydro(*it, c.hydro);
  if (auto it = j.find("pde"); it != j.end()) read_pde(*it, c.pde);
  if (auto it = j.find("blocks"); it != j.end()) read_blocks(*it, c.blocks);
  if (auto it = j.find("moments"); it != j.end()) read_moments(*it, c.moments);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  ExperimentConfig c = from_json(j);
  if (c.profile.starts_with("table:")) {
    std::filesystem::path table = c.profile.substr(6);
    if (table.is_relative()) c.profile = "table:" + (path.parent_path() / table).lexically_normal().string();
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["kind"] = std::string(zrp::to_string(kind));
  j["id"] = id;
  j["regime"] = std::string(zrp::to_string(regime));
  j["beta"] = beta;
  j["u_id"] = energy_regime().u_id();
  j["n_ladder"] = n_ladder;
  j["c_frac"] = c_frac;
  j["boundary"] = boundary;
  j["profile"] = profile;
  j["initial"] = initial;
  j["t_macro"] = t_macro;
  j["replicas"] = replicas;
  j["seed"] = seed;
  j["test_functions"] = test_functions;
  j["event_cap"] = event_cap;
  j["static"] = {{"relative_tolerance", statics.relative_tolerance}};
  j["hydro"] = write_hydro(hydro);
  j["pde"] = write_pde(pde);
  j["blocks"] = write_blocks(blocks);
  j["moments"] = {{"boundary_ladder", moments.boundary_ladder},
                  {"entropy_slack", moments.entropy_slack},
                  {"boundary_ratio", moments.boundary_ratio}};
  return j;
}

std::string ExperimentConfig::hash() const {
  std::ostringstream s;
  s << std::hex << fnv1a(to_json().dump());
  return s.str();
}

EnergyRegime ExperimentConfig::energy_regime() const { return EnergyRegime::make(regime, beta, u_id); }

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (id.empty()) fail("'id' must be nonempty");
  for (char ch : id)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
      fail("'id' may contain only letters, digits, '_', '-' and '.'");
  try {
    (void)energy_regime();
  } catch (const std::invalid_argument& e) {
    fail(std::string("regime parameters: ") + e.what());
  }
  if (!(c_frac >= 0.0 && c_frac <= 1.0)) fail("'c_frac' must lie in [0, 1]");
  if (c_frac == 1.0 && !boundary) fail("'c_frac' = 1 requires 'boundary': true");
  if (boundary && c_frac != 1.0) fail("'boundary': true requires 'c_frac' = 1");
  for (auto n : n_ladder)
    if (n < 2) fail("'n_ladder' entries must be >= 2");
  for (std::size_t i = 0; i < t_macro.size(); ++i) {
    if (!(t_macro[i] >= 0.0) || !std::isfinite(t_macro[i])) fail("'t_macro' entries must be finite and >= 0");
    if (i > 0 && t_macro[i] <= t_macro[i - 1]) fail("'t_macro' must be strictly increasing");
  }
  if (replicas < 1) fail("'replicas' must be >= 1");
  if (event_cap == 0) fail("'event_cap' must be positive");
  if (test_functions.empty()) fail("'test_functions' must be nonempty");
  for (const auto& g : test_functions) {
    try {
      (void)test_function(g);
    } catch (const std::invalid_argument&) {
      fail("unknown test function '" + g + "'");
    }
  }
  static const std::set<std::string> profiles{"phi_c_half", "phi_c", "bump", "zero"};
  if (!profiles.contains(profile) && !profile.starts_with("table:"))
    fail("unknown profile '" + profile + "' (expected phi_c_half, phi_c, bump, zero or {\"table\": path})");
  if (initial != "invariant" && initial != "local_equilibrium")
    fail("'initial' must be 'invariant' or 'local_equilibrium'");

  const bool needs_ladder = kind == ExperimentKind::Static || kind == ExperimentKind::Hydro ||
                            kind == ExperimentKind::Sample || kind == ExperimentKind::Moments ||
                            kind == ExperimentKind::Blocks;
  if (needs_ladder && n_ladder.empty()) fail("'n_ladder' must be nonempty for " + std::string(zrp::to_string(kind)));
  if (needs_ladder && !increasing(n_ladder)) fail("'n_ladder' must be strictly increasing");

  if (kind == ExperimentKind::Hydro) {
    static const std::set<std::string> modes{"convergence", "stationarity", "martingale", "coupled"};
    if (!modes.contains(hydro.mode)) fail("hydro.mode must be convergence, stationarity, martingale or coupled");
    if (t_macro.empty() || !(t_macro.back() > 0.0)) fail("hydro runs need a positive final 't_macro'");
    if ((hydro.mode == "stationarity" || hydro.mode == "martingale") && replicas < 2)
      fail("hydro." + hydro.mode + " needs 'replicas' >= 2");
    if (hydro.mode == "martingale" && n_ladder.size() < 2) fail("hydro.martingale needs at least two N values");
    if (hydro.mode == "coupled" && hydro.pairs < 2) fail("hydro.pairs must be >= 2");
    if (hydro.falsify && hydro.mode != "convergence") fail("hydro.falsify applies only to mode convergence");
    if (!(hydro.tolerance > 0.0)) fail("hydro.tolerance must be positive");
  }
  if (kind == ExperimentKind::Sample && t_macro.empty()) fail("sample needs 't_macro'");
  if (kind == ExperimentKind::Pde) {
    if (!(pde.dx > 0.0) || !(pde.length > pde.dx)) fail("pde needs 0 < dx < length");
    if (pde.refine_levels < 3) fail("pde.refine_levels must be >= 3");
    if (t_macro.empty() || !(t_macro.back() > 0.0)) fail("pde needs a positive final 't_macro'");
  }
  if (kind == ExperimentKind::Blocks) {
    if (!(blocks.center_frac > 0.0 && blocks.center_frac < 1.0)) fail("blocks.center_frac must lie in (0, 1)");
    for (auto l : blocks.half_widths)
      if (l < 1) fail("blocks.half_widths must be >= 1");
    for (auto p : blocks.particles)
      if (p < 0) fail("blocks.particles must be >= 0");
    if (!blocks.gap_half_widths.empty() && blocks.gap_half_widths.size() < 2)
      fail("blocks.gap_half_widths needs at least two entries for a slope");
  }
  if (kind == ExperimentKind::Moments && (moments.boundary_ladder.size() < 2 || !increasing(moments.boundary_ladder)))
    fail("moments.boundary_ladder must be strictly increasing with >= 2 entries");
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_line(const ResultRow& r) {
  std::string s;
  s += r.experiment + ',' + r.regime + ',' + std::to_string(r.n) + ',' + format_number(r.t) + ',' + r.observable +
       ',' + format_number(r.value) + ',' + format_number(r.stderr_value) + ',' + std::to_string(r.replicas) + ',' +
       format_number(r.target) + ',' + format_number(r.deviation) + ',' + r.flag;
  return s;
}

bool row_less(const ResultRow& a, const ResultRow& b) {
  // NaN times sort first.
  auto tkey = [](double t) { return std::isnan(t) ? -std::numeric_limits<double>::infinity() : t; };
  const auto ka = std::tie(a.experiment, a.regime, a.n);
  const auto kb = std::tie(b.experiment, b.regime, b.n);
  if (ka != kb) return ka < kb;
  if (tkey(a.t) != tkey(b.t)) return tkey(a.t) < tkey(b.t);
  if (a.observable != b.observable) return a.observable < b.observable;
  return csv_line(a) < csv_line(b);
}

void check_field(const std::string& s, const char* what) {
  if (s.find_first_of(",\n") != std::string::npos)
    throw std::invalid_argument(std::string("result ") + what + " must not contain commas: " + s);
}

}  // namespace

void ResultTable::add(ResultRow row) {
  check_field(row.experiment, "experiment");
  check_field(row.observable, "observable");
  check_field(row.flag, "flag");
  rows_.insert(std::upper_bound(rows_.begin(), rows_.end(), row, row_less), std::move(row));
}

bool ResultTable::add_check(const ResultRow& context, const std::string& name, bool passed, double measured,
                            double bound) {
  ResultRow r = context;
  r.observable = "check:" + name;
  r.value = passed ? 1.0 : 0.0;
  r.stderr_value = std::numeric_limits<double>::quiet_NaN();
  r.deviation = measured;
  r.target = bound;
  r.flag = passed ? "PASS" : "FAIL";
  add(std::move(r));
  return passed;
}

void ResultTable::merge(const ResultTable& other) {
  for (const auto& r : other.rows_) add(r);
}

const std::vector<ResultRow>& ResultTable::rows() const { return rows_; }

std::vector<ResultRow> ResultTable::checks() const {
  std::vector<ResultRow> out;
  for (const auto& r : rows_)
    if (r.is_check()) out.push_back(r);
  return out;
}

std::vector<ResultRow> ResultTable::failed_checks() const {
  std::vector<ResultRow> out;
  for (const auto& r : rows_)
    if (r.is_check() && !r.passed()) out.push_back(r);
  return out;
}

bool ResultTable::all_passed() const { return failed_checks().empty(); }

void ResultTable::write_csv(std::ostream& out) const {
  out << kCsvHeader << '\n';
  for (const auto& r : rows_) out << csv_line(r) << '\n';
}

RunOutput run_experiment(const ExperimentConfig& config, int workers) {
  config.validate();
  switch (config.kind) {
    case ExperimentKind::Static: return static_experiment(config, workers);
    case ExperimentKind::Hydro: return hydro_experiment(config, workers);
    case ExperimentKind::Blocks: return blocks_experiment(config, workers);
    case ExperimentKind::Pde: return pde_experiment(config);
    case ExperimentKind::Sample: return sample_experiment(config);
    case ExperimentKind::Moments: return moments_experiment(config);
  }
  throw std::logic_error("unhandled experiment kind");
}

int run(const ExperimentConfig& config, const std::filesystem::path& out_dir, int workers) {
  const RunOutput out = run_experiment(config, workers);
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  auto open = [&](const std::string& name) {
    std::ofstream f(out_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
    written.push_back(name);
    return f;
  };
  {
    auto f = open("results.csv");
    out.table.write_csv(f);
  }
  for (const auto& plot : out.plots) {
    auto f = open(plot.name + ".dat");
    f << '#';
    for (const auto& col : plot.columns) f << ' ' << col;
    f << '\n';
    for (const auto& row : plot.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) f << (i ? " " : "") << format_number(row[i]);
      f << '\n';
    }
  }
  for (const auto& [name, content] : out.files) {
    auto f = open(name);
    f << content;
  }
  const auto failed = out.table.failed_checks();
  json manifest;
  manifest["id"] = config.id;
  manifest["kind"] = std::string(to_string(config.kind));
  manifest["config_hash"] = config.hash();
  manifest["seed"] = config.seed;
  manifest["version"] = ZRP_VERSION;
  manifest["compiler"] = __VERSION__;
  manifest["files"] = written;
  manifest["checks"] = out.table.checks().size();
  manifest["failed_checks"] = failed.size();
  manifest["config"] = config.to_json();
  {
    auto f = open("manifest.json");
    f << manifest.dump(2) << '\n';
  }
  return failed.empty() ? 0 : 1;
}

}  // namespace zrp
