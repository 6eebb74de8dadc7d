#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbgopt/capacitor.hpp"
#include "cbgopt/objective.hpp"
#include "cbgopt/robustness.hpp"
#include "cbgopt/toy_cavity.hpp"

namespace cbgopt::app {

using json = nlohmann::json;

/// Optimization coordinates. Parameters given as [lo, hi] are free, plain numbers are
/// fixed. "t_HSQ-t_CBG" replaces t_HSQ by its offset above the slab.
struct DesignSpace {
  std::vector<std::string> names;
  std::vector<double> lower, upper;
  std::array<double, DesignPoint::kDim> fixed{};
  std::array<int, DesignPoint::kDim> slot{};  // coordinate index or -1
  bool hsq_offset = false;

  BoxDomain box() const;
  DesignPoint to_design(std::span<const double> x) const;
};

/// Precomputed evaluations keyed by the exact parameter row.
class ExternalTable {
 public:
  static ExternalTable load(const std::string& path);
  std::optional<robust::OracleOutput> lookup(const DesignPoint& p) const;
  const std::vector<DesignPoint>& rows() const { return rows_; }
  const std::vector<robust::OracleOutput>& outputs() const { return outputs_; }

 private:
  std::map<std::array<double, DesignPoint::kDim>, std::size_t> index_;
  std::vector<DesignPoint> rows_;
  std::vector<robust::OracleOutput> outputs_;
};

struct OracleConfig {
  std::string type = "toy-cavity";  // toy-cavity | two-peak | external-table
  std::string table_path;
  device::ToyConfig toy;
  device::TwoPeakConfig two_peak;
};

struct OptimizeConfig {
  DesignSpace space;
  std::size_t budget = 300;
  std::size_t init_count = 32;
  std::size_t refit_every = 10;
  std::size_t acquisition_starts = 64;
};

struct TrainingConfig {
  std::size_t count = 1024;
  std::vector<double> scale;  // empty = default
  std::string load;           // model file to reuse instead of training
  int gp_starts = 8;
};

struct AnalyzeConfig {
  std::size_t n_samples = 50000;
  std::size_t bootstrap = 200;
  std::size_t bins = 60;
};

struct RobustConfig {
  std::size_t n_samples = 5000;
  std::size_t budget = 100;
  std::size_t init_count = 32;
  std::vector<double> mu_bounds_sigma;
};

struct CapacitorConfig {
  DesignPoint design;
  device::Permittivities eps;
  double radius_um = 7.0;
  device::GridSpec grid;
  std::vector<double> volts;
  double map_volts = 20.0;
  double map_r_max = 3000.0;  // nm
};

struct RunConfig {
  json raw;
  std::uint64_t seed = 0;
  std::uint64_t hash = 0;
  std::string output_dir;
  OracleConfig oracle;
  objective::ObjectiveSpec objective;
  std::optional<OptimizeConfig> optimize;
  ToleranceSpec tolerances;
  DesignPoint center;
  TrainingConfig training;
  AnalyzeConfig analyze;
  RobustConfig robust;
  std::size_t verify_count = 512;
  CapacitorConfig capacitor;
  std::vector<DesignPoint> toy_points;
  std::size_t toy_sobol = 0;

  /// "config_hash=<16 hex> seed=<n>"
  std::string tag() const;
};

/// FNV-1a 64 of the compact, key-sorted JSON text.
std::uint64_t config_hash(const json& j);

/// Parses and validates the config for one subcommand. Relative paths are resolved
/// against base_dir. Throws ConfigError (3-sigma violations: ExtrapolationError).
RunConfig parse_config(const json& j, const std::string& command,
                       std::optional<std::uint64_t> seed_override, const std::string& base_dir);
RunConfig load_config(const std::string& path, const std::string& command,
                      std::optional<std::uint64_t> seed_override);

DesignPoint parse_design(const json& j);

/// Sobol training box of the robustness commands.
BoxDomain training_box(const RunConfig& c);

}  // namespace cbgopt::app
