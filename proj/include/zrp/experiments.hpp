#pragma once

#include "zrp/energy_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zrp {

enum class ExperimentKind { Static, Hydro, Blocks, Pde, Sample, Moments };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_kind(std::string_view name);

/// Hydrodynamic runs: "convergence" against the PDE, "stationarity" (KS at
/// two times from the invariant measure), "martingale" (variance scaling of
/// the Dynkin residual) or "coupled" (basic-coupling order preservation).
struct HydroSettings {
  std::string mode = "convergence";
  /// Also compare against the PDE with the drift negated; the check passes
  /// iff that comparison fails.
  bool falsify = false;
  double tolerance = 0.05;
  double ks_alpha = 1e-3;
  double slope_lo = 0.7;
  double slope_hi = 1.3;
  double min_r_squared = 0.9;
  std::size_t pairs = 1000;
};

struct PdeSettings {
  double dx = 0.005;
  double length = 24.0;
  double stationarity_tol = 1e-12;
  std::size_t mass_steps = 100000;
  double mass_dx = 0.05;
  double mass_tol = 1e-9;
  double refine_dx0 = 0.04;
  std::size_t refine_levels = 4;
  double order_lo = 1.5;
  double order_hi = 2.2;
  double gauss_center = 3.0;
  double gauss_width = 0.25;
  double moment_tol = 0.02;
  double shape_tol = 1e-3;
  double shape_lo = 0.2;
  double shape_hi = 3.0;
  double comparison_tol = 1e-10;
};

struct BlockSettings {
  std::vector<std::int64_t> half_widths{1, 2, 3};
  std::vector<std::int64_t> particles{0, 1, 2, 3, 4, 5};
  double center_frac = 0.5;
  /// Second-block offsets k' - k; 0 encodes the adjacent offset 2l + 1.
  std::vector<std::int64_t> two_block_offsets{0, 10};
  std::int64_t gap_particles = 4;
  std::vector<std::int64_t> gap_half_widths{2, 3, 4, 5, 6};
  std::int64_t gap_n = 1000;
  double slope_lo = -2.4;
  double slope_hi = -1.6;
  std::int64_t compare_half_width = 2;
  std::int64_t compare_particles = 4;
  double compare_lo = 0.25;
  double compare_hi = 4.0;
  std::vector<std::int64_t> ladder_offsets{3, 10, 30};
  std::int64_t ladder_half_width = 1;
  std::int64_t ladder_particles = 2;
};

struct MomentSettings {
  std::vector<std::int64_t> boundary_ladder{100, 1000, 10000};
  double entropy_slack = 1.1;
  double boundary_ratio = 2.0;
};

struct StaticSettings {
  double relative_tolerance = 0.02;
};

/// Validated experiment description. Every run is a pure function of the
/// config (including its seed).
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Static;
  std::string id;
  Regime regime = Regime::Beta0;
  double beta = 0.0;
  std::string u_id;
  std::vector<std::int64_t> n_ladder;
  double c_frac = 0.5;
  bool boundary = false;
  /// "phi_c_half", "phi_c", "bump", "zero", or "table:<path>".
  std::string profile = "phi_c_half";
  /// "invariant" or "local_equilibrium".
  std::string initial = "invariant";
  std::vector<double> t_macro;
  std::size_t replicas = 1;
  std::uint64_t seed = 1;
  std::vector<std::string> test_functions{"g1", "g2", "g3"};
  std::uint64_t event_cap = std::numeric_limits<std::uint64_t>::max();
  std::string output_dir = "out";

  StaticSettings statics;
  HydroSettings hydro;
  PdeSettings pde;
  BlockSettings blocks;
  MomentSettings moments;

  /// Throws std::invalid_argument with the offending key on any error.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Hex FNV-1a of the canonical JSON dump.
  std::string hash() const;

  EnergyRegime energy_regime() const;
  void validate() const;
};

/// One table row. `n` = 0 and t = NaN mark rows not indexed by scale or time.
/// Check rows carry observable "check:<name>", value 1 or 0 and flag PASS/FAIL.
struct ResultRow {
  std::string experiment;
  std::string regime;
  std::int64_t n = 0;
  double t = std::numeric_limits<double>::quiet_NaN();
  std::string observable;
  double value = std::numeric_limits<double>::quiet_NaN();
  double stderr_value = std::numeric_limits<double>::quiet_NaN();
  std::size_t replicas = 0;
  double target = std::numeric_limits<double>::quiet_NaN();
  double deviation = std::numeric_limits<double>::quiet_NaN();
  std::string flag;

  bool is_check() const { return observable.starts_with("check:"); }
  bool passed() const { return flag == "PASS"; }
};

inline constexpr std::string_view kCsvHeader =
    "experiment,regime,N,t,observable,value,stderr,replicas,target,deviation,flag";

/// Rows are kept in a canonical order, so merging is order-independent.
class ResultTable {
 public:
  void add(ResultRow row);
  /// Appends a check row built from `context` with the measured quantity in
  /// the deviation column and its bound in the target column; returns `passed`.
  bool add_check(const ResultRow& context, const std::string& name, bool passed,
                 double measured = std::numeric_limits<double>::quiet_NaN(),
                 double bound = std::numeric_limits<double>::quiet_NaN());
  void merge(const ResultTable& other);

  /// Rows in canonical order.
  const std::vector<ResultRow>& rows() const;
  std::vector<ResultRow> checks() const;
  std::vector<ResultRow> failed_checks() const;
  bool all_passed() const;

  void write_csv(std::ostream& out) const;

 private:
  std::vector<ResultRow> rows_;
};

/// Whitespace-separated plot columns written as <name>.dat.
struct PlotData {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct RunOutput {
  ResultTable table;
  std::vector<PlotData> plots;
  /// Extra artefacts (file name, content).
  std::vector<std::pair<std::string, std::string>> files;
};

RunOutput static_experiment(const ExperimentConfig& config, int workers);
RunOutput hydro_experiment(const ExperimentConfig& config, int workers);
RunOutput blocks_experiment(const ExperimentConfig& config, int workers);
RunOutput pde_experiment(const ExperimentConfig& config);
RunOutput sample_experiment(const ExperimentConfig& config);
RunOutput moments_experiment(const ExperimentConfig& config);

/// Dispatches on config.kind.
RunOutput run_experiment(const ExperimentConfig& config, int workers);

/// Runs the experiment and writes results.csv, the plot files, extra files
/// and manifest.json into `out_dir`. Returns 0 if every check passed, 1 otherwise.
int run(const ExperimentConfig& config, const std::filesystem::path& out_dir, int workers);

/// Shortest round-trip decimal form used in CSV and plot files.
std::string format_number(double x);

}  // namespace zrp
