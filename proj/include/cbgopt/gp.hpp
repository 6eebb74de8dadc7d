#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace cbgopt::gp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Observations of one scalar quantity. Row i of `points` produced `values[i]`.
struct TrainingSet {
  Matrix points;
  Vector values;

  std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
  std::size_t count() const { return static_cast<std::size_t>(points.rows()); }

  /// Throws InvalidArgument on size mismatch, empty sets, non-finite entries or
  /// duplicate points.
  void validate() const;

  static TrainingSet from_rows(const std::vector<std::vector<double>>& points,
                               std::span<const double> values);
};

/// Constant mean mu0, Matérn 5/2 amplitude sigma0_sq, per-dimension length scales,
/// observation noise variance.
struct KernelParams {
  double mu0 = 0.0;
  double sigma0_sq = 1.0;
  Vector length_scales;
  double noise_sq = 0.0;

  void validate(std::size_t dim) const;
};

/// Scaled distance r = sqrt(sum(((p_i - q_i) / l_i)^2)).
double scaled_distance(std::span<const double> p, std::span<const double> q,
                       const Vector& length_scales);
/// sigma0_sq * (1 + sqrt5 r + 5/3 r^2) * exp(-sqrt5 r)
double matern52_from_distance(double r, double sigma0_sq);
double matern52(std::span<const double> p, std::span<const double> q, const KernelParams& params);

/// Kernel matrix between the rows of a and b (no noise term).
Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelParams& params);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// A fitted Gaussian process. Immutable; concurrent predict() calls are safe.
class GPModel {
 public:
  /// Factorizes K + noise_sq*I, escalating diagonal jitter on failure.
  /// Throws NumericalError when the factorization still fails.
  GPModel(TrainingSet training, KernelParams params);

  const TrainingSet& training() const { return training_; }
  const KernelParams& params() const { return params_; }
  std::size_t dim() const { return training_.dim(); }
  /// Lower-triangular factor of K + (noise_sq + jitter)*I.
  Matrix chol() const { return llt_.matrixL(); }
  const Vector& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }
  double log_likelihood() const { return log_likelihood_; }

  Prediction predict(std::span<const double> x) const;

  /// Row-wise predictions. `variances` may be null when only means are needed.
  void predict_batch(const Matrix& x, Vector& means, Vector* variances) const;

 private:
  TrainingSet training_;
  KernelParams params_;
  Eigen::LLT<Matrix> llt_;
  Vector alpha_;
  double jitter_ = 0.0;
  double log_likelihood_ = 0.0;
};

/// -1/2 r^T C^-1 r - 1/2 log det C - M/2 log 2pi with C = K + noise_sq*I, r = Y - mu0.
double log_marginal_likelihood(const TrainingSet& training, const KernelParams& params);

struct LikelihoodGradient {
  double value = 0.0;
  /// d/d(mu0), d/d(log sigma0_sq), d/d(log l_1) ... d/d(log l_N)
  Vector gradient;
};
LikelihoodGradient log_marginal_likelihood_gradient(const TrainingSet& training,
                                                    const KernelParams& params);

struct FitOptions {
  int starts = 8;
  int max_iterations = 100;
  std::uint64_t seed = 0;
  /// Parameter-space widths that scale the length-scale box. Defaults to the bounding
  /// box of the training points.
  std::optional<Vector> reference_widths;
  /// Previous optimum used as an extra start point.
  std::optional<KernelParams> warm_start;
  /// Only run the warm start (refits inside optimization loops).
  bool warm_only = false;
};

/// Maximizes the log marginal likelihood over (mu0, sigma0_sq, l_i) with noise fixed.
GPModel fit(const TrainingSet& training, double noise_sq = 0.0, const FitOptions& options = {});

/// Generalized least squares constant mean for fixed kernel parameters.
double profiled_mean(const TrainingSet& training, const KernelParams& params);

}  // namespace cbgopt::gp
