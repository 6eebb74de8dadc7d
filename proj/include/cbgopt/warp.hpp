#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>

#include "cbgopt/gp.hpp"

namespace cbgopt::warp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Piecewise output warp. The inverse map g^-1 from the latent (unbounded) axis to the
/// bounded axis is
///
///   lower_bound + exp(a_lower (y - b_lower))      below the lower cutoff
///   y + b_linear                                  between the cutoffs
///   upper_bound - exp(-a_upper (y - b_upper))     above the upper cutoff
///
/// The cutoffs are given on the bounded axis. a_* and b_* follow from value and slope
/// matching at the cutoffs; the affine slope is fixed to 1. `position` is the offset
/// b_linear. Segments are present only for finite bounds.
class WarpSpec {
 public:
  WarpSpec() = default;
  /// Throws InvalidArgument unless lower_bound < lower_cutoff < upper_cutoff < upper_bound
  /// (infinite cutoffs for infinite bounds).
  WarpSpec(double lower_bound, double upper_bound, double lower_cutoff, double upper_cutoff,
           double position = 0.0);

  /// No bounds: the identity map shifted by position.
  static WarpSpec identity(double position = 0.0) { return {-kInf, kInf, -kInf, kInf, position}; }

  double lower_bound() const { return lower_bound_; }
  double upper_bound() const { return upper_bound_; }
  double lower_cutoff() const { return lower_cutoff_; }
  double upper_cutoff() const { return upper_cutoff_; }
  double position() const { return b_linear_; }
  bool has_lower() const { return lower_bound_ > -kInf; }
  bool has_upper() const { return upper_bound_ < kInf; }

  double a_lower() const { return a_lower_; }
  double b_lower() const { return b_lower_; }
  double a_upper() const { return a_upper_; }
  double b_upper() const { return b_upper_; }
  double m_linear() const { return 1.0; }
  double b_linear() const { return b_linear_; }

  /// Latent coordinates of the cutoffs.
  double latent_lower_cutoff() const { return lower_cutoff_ - b_linear_; }
  double latent_upper_cutoff() const { return upper_cutoff_ - b_linear_; }

 private:
  double lower_bound_ = -kInf;
  double upper_bound_ = kInf;
  double lower_cutoff_ = -kInf;
  double upper_cutoff_ = kInf;
  double b_linear_ = 0.0;
  double a_lower_ = 0.0, b_lower_ = 0.0;
  double a_upper_ = 0.0, b_upper_ = 0.0;
};

/// g^-1: latent -> bounded. Strictly increasing, C1, total on the reals.
double inverse_transform(const WarpSpec& warp, double y);
/// d g^-1 / dy
double inverse_transform_derivative(const WarpSpec& warp, double y);
/// g: bounded -> latent. Throws DomainError outside the open interval.
double transform(const WarpSpec& warp, double y_bounded);
/// dg / d(y_bounded), positive inside the bounds.
double transform_derivative(const WarpSpec& warp, double y_bounded);

/// A GP trained on warped values g(Y).
struct WarpedGPModel {
  WarpSpec warp;
  gp::GPModel gp;
};

struct BoundedPrediction {
  double median = 0.0;
  double p16 = 0.0;
  double p84 = 0.0;
  double latent_mean = 0.0;
  double latent_variance = 0.0;
};

/// Quantiles of the latent normal mapped through g^-1.
BoundedPrediction predict_bounded(const WarpedGPModel& model, std::span<const double> x);
/// Row-wise medians and, when requested, the 16th/84th percentiles.
void predict_bounded_batch(const WarpedGPModel& model, const gp::Matrix& x, gp::Vector& median,
                           gp::Vector* p16 = nullptr, gp::Vector* p84 = nullptr);

struct WarpFitOptions {
  gp::FitOptions gp;
  double noise_sq = 0.0;
  /// Alternations of (warp search, GP refit) after the initial GP fit.
  int rounds = 2;
  /// Iteration cap for the warm GP refits.
  int refit_iterations = 40;
  /// Likelihood cost of each exponential segment that holds data. Defaults to
  /// 0.5 * log(M).
  std::optional<double> segment_penalty;
};

/// Joint fit of warp cutoffs and GP hyperparameters on bounded observations.
/// Throws DomainError listing every value on or outside the bounds.
WarpedGPModel fit_warped_gp(const gp::TrainingSet& bounded, double lower_bound,
                            double upper_bound, const WarpFitOptions& options = {});

/// The warp found by fit_warped_gp.
WarpSpec fit_warp(const gp::TrainingSet& bounded, double lower_bound, double upper_bound,
                  const WarpFitOptions& options = {});

/// Log marginal likelihood of the warped data including the Jacobian term
/// sum_i log g'(y_i).
double warped_log_likelihood(const gp::TrainingSet& bounded, const WarpSpec& warp,
                             const gp::KernelParams& params);

}  // namespace cbgopt::warp
