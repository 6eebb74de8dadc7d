#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbgopt/design.hpp"
#include "cbgopt/gp.hpp"
#include "cbgopt/objective.hpp"
#include "cbgopt/sampling.hpp"
#include "cbgopt/warp.hpp"

namespace cbgopt::robust {

struct OracleOutput {
  double lambda_c = 0.0;
  double fp = 0.0;
  double eta_smf = 0.0;
};

/// Expensive black box. nullopt marks a failed evaluation.
using Oracle = std::function<std::optional<OracleOutput>(const DesignPoint&)>;

enum class Quantity { LambdaC = 0, Purcell = 1, Efficiency = 2 };
inline constexpr std::array<Quantity, 3> kQuantities = {Quantity::LambdaC, Quantity::Purcell,
                                                        Quantity::Efficiency};
std::string quantity_name(Quantity q);

/// Surrogates of the three target-function inputs on a common Sobol training set.
struct SurrogateBundle {
  gp::GPModel lambda_model;
  warp::WarpedGPModel fp_model;   // lower bound 0
  warp::WarpedGPModel eta_model;  // bounds (0, 1)
  BoxDomain domain;

  struct Prediction {
    double median = 0.0;
    double p16 = 0.0;
    double p84 = 0.0;
  };
  /// Median and 16/84 quantiles of the predictive distribution of one quantity.
  Prediction predict(Quantity q, const DesignPoint& p) const;
  /// Medians only, for a batch of rows.
  Eigen::VectorXd predict_median_batch(Quantity q, const Eigen::MatrixXd& x) const;
};

struct TrainOptions {
  std::vector<double> scale;  // half-widths in sigma; empty = default (5, 25 for P)
  std::optional<BoxDomain> domain;  // explicit domain overrides the scale
  double max_failure_fraction = 0.05;
  int gp_starts = 8;
};

/// Sobol training set over the box around `center`, oracle evaluations, and three fits.
/// Throws NumericalError when more than 5% of the oracle calls fail.
SurrogateBundle train_bundle(const Oracle& oracle, const DesignPoint& center,
                             const ToleranceSpec& tol, std::size_t count, std::uint64_t seed,
                             const TrainOptions& options = {});

/// The three fits on given evaluations (rows of `points`, 7 columns).
SurrogateBundle fit_bundle(const Eigen::MatrixXd& points, const std::vector<OracleOutput>& outputs,
                           const BoxDomain& domain, std::uint64_t seed,
                           const TrainOptions& options = {});

struct QuantityStats {
  double median = 0.0;        // P50
  double p16 = 0.0;
  double p84 = 0.0;
  double sigma_plus = 0.0;    // P84 - P50
  double sigma_minus = 0.0;   // P50 - P16
  double mc_error = 0.0;      // bootstrap standard error of the median
  double predictive_sd = 0.0; // median predictive half-width on the bounded scale
  double sigma_median = 0.0;  // sqrt(mc_error^2 + predictive_sd^2)
  double sigma_plus_error = 0.0;   // bootstrap standard error of sigma_plus
  double sigma_minus_error = 0.0;  // bootstrap standard error of sigma_minus
  std::size_t sample_count = 0;
  std::vector<double> distribution;  // sampled medians, sorted ascending
};

struct RobustnessReport {
  DesignPoint mean;
  ToleranceSpec tolerances;
  std::uint64_t seed = 0;
  std::array<QuantityStats, 3> stats;

  const QuantityStats& operator[](Quantity q) const { return stats[static_cast<int>(q)]; }
};

struct AnalyzeOptions {
  std::size_t bootstrap_resamples = 200;
  std::size_t threads = 1;
};

/// Throws ExtrapolationError unless mean +- 3 sigma lies inside bundle.domain,
/// naming the offending parameters.
void check_inside(const BoxDomain& domain, const DesignPoint& mean, const ToleranceSpec& tol,
                  double sigmas = 3.0);

/// Monte Carlo propagation of N(mean, diag(tol^2)) through the surrogates.
RobustnessReport analyze(const SurrogateBundle& bundle, const DesignPoint& mean,
                         const ToleranceSpec& tol, std::size_t n_samples, std::uint64_t seed,
                         const AnalyzeOptions& options = {});

/// "(P50 ± sigma_median)_{-sigma_minus}^{+sigma_plus}" with values multiplied by `scale`.
std::string format_triple(const QuantityStats& s, double scale = 1.0, int precision = 1,
                          const std::string& unit = "");

/// Linear-interpolated percentile of sorted data, q in [0, 100].
double percentile_sorted(const std::vector<double>& sorted, double q);

struct RobustOptions {
  std::vector<double> mu_bounds_sigma;  // empty = default (2, 22 for P)
  std::size_t n_samples = 5000;
  std::size_t budget = 100;
  std::size_t init_count = 32;
  std::uint64_t seed = 0;
};

struct RobustResult {
  DesignPoint mu;
  double target = 0.0;
  std::array<double, 3> medians{};  // lambda_c, fp, eta at mu
  BoxDomain mu_domain;
  std::vector<double> trace;  // best-so-far target per evaluation
};

/// Median-based target of a distribution centered at mu, computed from a fixed set of
/// standard-normal draws.
double robust_target(const SurrogateBundle& bundle, const DesignPoint& mu,
                     const ToleranceSpec& tol, const objective::ObjectiveSpec& spec,
                     const Eigen::MatrixXd& standard_normals,
                     std::array<double, 3>* medians = nullptr);

/// Bayesian optimization of the distribution mean over the robust target.
RobustResult robust_optimize(const SurrogateBundle& bundle, const ToleranceSpec& tol,
                             const objective::ObjectiveSpec& spec, const RobustOptions& options);

/// Box of allowed means: center +- mu_bounds_sigma * sigma. Throws ExtrapolationError when
/// mu +- 3 sigma can leave the bundle domain.
BoxDomain robust_mean_domain(const BoxDomain& bundle_domain, const ToleranceSpec& tol,
                             const std::vector<double>& mu_bounds_sigma);
inline BoxDomain robust_mean_domain(const SurrogateBundle& bundle, const ToleranceSpec& tol,
                                    const std::vector<double>& mu_bounds_sigma) {
  return robust_mean_domain(bundle.domain, tol, mu_bounds_sigma);
}

struct QuantityVerification {
  double oracle_median = 0.0;
  double surrogate_median = 0.0;
  double median_discrepancy = 0.0;  // |oracle - surrogate|
  double band_coverage = 0.0;       // fraction of oracle values in [p16, p84]
  std::vector<double> oracle_values;
  std::vector<double> surrogate_values;
};

struct VerificationSummary {
  std::size_t requested = 0;
  std::size_t evaluated = 0;
  std::array<QuantityVerification, 3> quantities;

  const QuantityVerification& operator[](Quantity q) const {
    return quantities[static_cast<int>(q)];
  }
};

/// Compares the true oracle with the surrogates on `count` fresh draws.
VerificationSummary verify(const SurrogateBundle& bundle, const Oracle& oracle,
                           const DesignPoint& mean, const ToleranceSpec& tol,
                           std::size_t count, std::uint64_t seed);

}  // namespace cbgopt::robust
