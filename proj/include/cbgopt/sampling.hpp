#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cbgopt/design.hpp"

namespace cbgopt {

/// Axis-aligned box in parameter space.
struct BoxDomain {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> names;

  std::size_t dim() const { return lower.size(); }
  double width(std::size_t i) const { return upper[i] - lower[i]; }
  std::vector<double> center() const;
  bool contains(std::span<const double> x, double rel_tol = 0.0) const;
  /// Throws InvalidArgument unless lower_i < upper_i for all i and sizes agree.
  void validate() const;
};

/// Per-parameter fabrication standard deviations (nm), diagonal covariance.
struct ToleranceSpec {
  std::vector<double> sigma;

  std::size_t dim() const { return sigma.size(); }
  void validate() const;
  ToleranceSpec scaled(double factor) const;

  /// Default fabrication tolerances: R, W 10 nm; P 1 nm; t_CBG 5 nm;
  /// t_SiO2, t_HSQ 10 nm; t_ITO 5 nm.
  static ToleranceSpec fabrication_default();
};

namespace sampling {

/// Largest dimension supported by the direction-number table.
std::size_t sobol_max_dimension();

/// Unit-cube Sobol points, one per row. The sequence starts at index 1 (the origin is
/// skipped) unless include_origin is set, in which case row 0 is the origin.
Eigen::MatrixXd sobol_unit(std::size_t dim, std::size_t count, bool include_origin = false);

/// Sobol points scaled into the box.
std::vector<std::vector<double>> sobol(std::size_t dim, std::size_t count,
                                       const BoxDomain& domain);

/// Default per-parameter half-widths in units of sigma: 5 everywhere, 25 for P.
std::vector<double> default_training_scale();

/// [center_i - scale_i*sigma_i, center_i + scale_i*sigma_i].
BoxDomain training_domain(const DesignPoint& center, const ToleranceSpec& tol,
                          std::span<const double> scale);
BoxDomain training_domain(const DesignPoint& center, const ToleranceSpec& tol);

/// Counter-based generator: every value is a pure function of (seed, stream, counter).
/// Used so parallel fills and bootstrap resamples reproduce independently of order.
std::uint64_t hash_u64(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);
/// Uniform in (0, 1].
double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);
/// Standard normal, Box–Muller on two counter uniforms.
double standard_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// count x dim standard normals; row i depends only on (seed, i).
Eigen::MatrixXd standard_normal_matrix(std::size_t count, std::size_t dim, std::uint64_t seed);

/// Independent draws from N(mean, diag(sigma^2)), one per row.
Eigen::MatrixXd mvn_sample(std::span<const double> mean, std::span<const double> sigma,
                           std::size_t count, std::uint64_t seed);
std::vector<DesignPoint> mvn_sample(const DesignPoint& mean, const ToleranceSpec& tol,
                                    std::size_t count, std::uint64_t seed);

}  // namespace sampling
}  // namespace cbgopt
