#include "cbgopt/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "cbgopt/errors.hpp"
#include "cbgopt/local_search.hpp"
#include "cbgopt/sampling.hpp"

namespace cbgopt::gp {

namespace {

constexpr double kSqrt5 = 2.2360679774997896964;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw InvalidArgument(fmt::format("{}: dimension mismatch ({} vs {})", what, expected, got));
  }
}

}  // namespace

void TrainingSet::validate() const {
  if (points.rows() == 0 || points.cols() == 0) {
    throw InvalidArgument("training set is empty");
  }
  if (points.rows() != values.size()) {
    throw InvalidArgument(fmt::format("training set has {} points but {} values", points.rows(),
                                      values.size()));
  }
  if (!points.allFinite() || !values.allFinite()) {
    throw InvalidArgument("training set contains non-finite entries");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < points.cols(); ++d) {
      if (points(a, d) != points(b, d)) return points(a, d) < points(b, d);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (points.row(order[k]) == points.row(order[k - 1])) {
      throw InvalidArgument(fmt::format("training points {} and {} are identical",
                                        std::min(order[k], order[k - 1]),
                                        std::max(order[k], order[k - 1])));
    }
  }
}

TrainingSet TrainingSet::from_rows(const std::vector<std::vector<double>>& rows,
                                   std::span<const double> values) {
  if (rows.empty()) throw InvalidArgument("training set is empty");
  if (rows.size() != values.size()) {
    throw InvalidArgument(fmt::format("training set has {} points but {} values", rows.size(),
                                      values.size()));
  }
  TrainingSet t;
  const std::size_t n = rows.front().size();
  t.points.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  t.values.resize(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check_dim(n, rows[i].size(), "training point");
    for (std::size_t d = 0; d < n; ++d) t.points(i, d) = rows[i][d];
    t.values[i] = values[i];
  }
  return t;
}

void KernelParams::validate(std::size_t dim) const {
  check_dim(dim, static_cast<std::size_t>(length_scales.size()), "length scales");
  if (!(sigma0_sq > 0.0) || !std::isfinite(sigma0_sq)) {
    throw InvalidArgument(fmt::format("sigma0_sq must be positive, got {}", sigma0_sq));
  }
  for (Eigen::Index i = 0; i < length_scales.size(); ++i) {
    if (!(length_scales[i] > 0.0) || !std::isfinite(length_scales[i])) {
      throw InvalidArgument(fmt::format("length scale {} must be positive, got {}", i,
                                        length_scales[i]));
    }
  }
  if (!(noise_sq >= 0.0)) {
    throw InvalidArgument(fmt::format("noise_sq must be non-negative, got {}", noise_sq));
  }
  if (!std::isfinite(mu0)) throw InvalidArgument("mu0 must be finite");
}

double scaled_distance(std::span<const double> p, std::span<const double> q,
                       const Vector& length_scales) {
  check_dim(p.size(), q.size(), "matern52");
  check_dim(p.size(), static_cast<std::size_t>(length_scales.size()), "matern52");
  double r2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = (p[i] - q[i]) / length_scales[static_cast<Eigen::Index>(i)];
    r2 += d * d;
  }
  return std::sqrt(r2);
}

double matern52_from_distance(double r, double sigma0_sq) {
  const double s5r = kSqrt5 * r;
  return sigma0_sq * (1.0 + s5r + (5.0 / 3.0) * r * r) * std::exp(-s5r);
}

double matern52(std::span<const double> p, std::span<const double> q, const KernelParams& params) {
  return matern52_from_distance(scaled_distance(p, q, params.length_scales), params.sigma0_sq);
}

namespace {

Matrix scaled_points(const Matrix& x, const Vector& length_scales) {
  return x * length_scales.cwiseInverse().asDiagonal();
}

// Kernel between the rows of already scaled point sets.
Matrix kernel_scaled(const Matrix& a, const Matrix& b, double sigma0_sq) {
  Matrix k(a.rows(), b.rows());
  const Eigen::Index n = a.cols();
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      double r2 = 0.0;
      for (Eigen::Index d = 0; d < n; ++d) {
        const double diff = a(i, d) - b(j, d);
        r2 += diff * diff;
      }
      k(i, j) = matern52_from_distance(std::sqrt(r2), sigma0_sq);
    }
  }
  return k;
}

Matrix kernel_symmetric_scaled(const Matrix& a, double sigma0_sq) {
  const Eigen::Index m = a.rows(), n = a.cols();
  Matrix k(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    k(j, j) = sigma0_sq;
    for (Eigen::Index i = j + 1; i < m; ++i) {
      double r2 = 0.0;
      for (Eigen::Index d = 0; d < n; ++d) {
        const double diff = a(i, d) - a(j, d);
        r2 += diff * diff;
      }
      const double v = matern52_from_distance(std::sqrt(r2), sigma0_sq);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

struct Factor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

// Cholesky of c, adding jitter 1e-12 * trace/M escalated x10 up to 1e-6 * trace/M.
std::optional<Factor> try_factorize(const Matrix& c) {
  Factor f;
  f.llt.compute(c);
  if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().allFinite()) return f;
  const double scale = c.trace() / static_cast<double>(c.rows());
  for (double rel = 1e-12; rel <= 1e-6 * (1.0 + 1e-9); rel *= 10.0) {
    Matrix cj = c;
    cj.diagonal().array() += rel * scale;
    f.llt.compute(cj);
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().allFinite()) {
      f.jitter = rel * scale;
      return f;
    }
  }
  return std::nullopt;
}

Factor factorize_or_throw(const Matrix& c) {
  if (auto f = try_factorize(c)) return std::move(*f);
  Eigen::LDLT<Matrix> ldlt(c);
  const double smallest = ldlt.vectorD().minCoeff();
  throw NumericalError(fmt::format(
      "kernel matrix ({}x{}) is not positive definite even with jitter 1e-6*trace/M; "
      "smallest eigenvalue estimate {:.3e}",
      c.rows(), c.rows(), smallest));
}

Matrix covariance(const TrainingSet& t, const KernelParams& p) {
  Matrix c = kernel_symmetric_scaled(scaled_points(t.points, p.length_scales), p.sigma0_sq);
  c.diagonal().array() += p.noise_sq;
  return c;
}

double log_det(const Factor& f) {
  return 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
}

struct Evaluation {
  double value = -std::numeric_limits<double>::infinity();
  double mu0 = 0.0;
  Vector gradient;  // mu0, log sigma0_sq, log l_i
};

// Likelihood and gradient; the constant mean is profiled out when `profile` is set.
Evaluation evaluate(const TrainingSet& t, const KernelParams& p, bool profile, bool with_gradient) {
  Evaluation e;
  const Eigen::Index m = t.points.rows(), n = t.points.cols();
  const Matrix scaled = scaled_points(t.points, p.length_scales);
  Matrix k = kernel_symmetric_scaled(scaled, p.sigma0_sq);
  Matrix c = k;
  c.diagonal().array() += p.noise_sq;
  auto factor = try_factorize(c);
  if (!factor) return e;

  e.mu0 = p.mu0;
  Vector alpha;
  if (profile) {
    const Vector ci1 = factor->llt.solve(Vector::Ones(m));
    const Vector ciy = factor->llt.solve(t.values);
    e.mu0 = ci1.sum() != 0.0 ? ciy.sum() / ci1.sum() : t.values.mean();
    alpha = ciy - e.mu0 * ci1;
  } else {
    alpha = factor->llt.solve((t.values.array() - e.mu0).matrix());
  }
  const Vector residual = (t.values.array() - e.mu0).matrix();
  e.value = -0.5 * residual.dot(alpha) - 0.5 * log_det(*factor) -
            0.5 * static_cast<double>(m) * kLog2Pi;
  if (!with_gradient) return e;

  // Lower triangle of C^-1 = L^-T L^-1.
  Matrix l_inv = Matrix::Identity(m, m);
  factor->llt.matrixL().solveInPlace(l_inv);
  Matrix c_inv = Matrix::Zero(m, m);
  c_inv.selfadjointView<Eigen::Lower>().rankUpdate(l_inv.transpose());
  e.gradient = Vector::Zero(n + 2);
  e.gradient[0] = alpha.sum();
  // W = alpha alpha^T - C^-1; dL/dtheta = 1/2 sum(W .* dK/dtheta)
  double g_sigma = 0.0;
  Vector g_len = Vector::Zero(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    g_sigma += 0.5 * (alpha[j] * alpha[j] - c_inv(j, j)) * k(j, j);
    for (Eigen::Index i = j + 1; i < m; ++i) {
      const double w = alpha[i] * alpha[j] - c_inv(i, j);
      g_sigma += w * k(i, j);  // both triangles: 2 * 1/2
      double r2 = 0.0;
      for (Eigen::Index d = 0; d < n; ++d) {
        const double diff = scaled(i, d) - scaled(j, d);
        r2 += diff * diff;
      }
      const double r = std::sqrt(r2);
      // dk/dlog(l_d) = 5/3 s (1 + sqrt5 r) exp(-sqrt5 r) ((x_id - x_jd)/l_d)^2
      const double b = w * (5.0 / 3.0) * p.sigma0_sq * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
      for (Eigen::Index d = 0; d < n; ++d) {
        const double diff = scaled(i, d) - scaled(j, d);
        g_len[d] += b * diff * diff;
      }
    }
  }
  e.gradient[1] = g_sigma;
  e.gradient.tail(n) = g_len;
  return e;
}

}  // namespace

Matrix kernel_matrix(const Matrix& a, const Matrix& b, const KernelParams& params) {
  check_dim(static_cast<std::size_t>(a.cols()), static_cast<std::size_t>(b.cols()),
            "kernel_matrix");
  check_dim(static_cast<std::size_t>(a.cols()), static_cast<std::size_t>(params.length_scales.size()),
            "kernel_matrix");
  return kernel_scaled(scaled_points(a, params.length_scales),
                       scaled_points(b, params.length_scales), params.sigma0_sq);
}

GPModel::GPModel(TrainingSet training, KernelParams params)
    : training_(std::move(training)), params_(std::move(params)) {
  training_.validate();
  params_.validate(training_.dim());
  Factor f = factorize_or_throw(covariance(training_, params_));
  llt_ = std::move(f.llt);
  jitter_ = f.jitter;
  const Vector residual = (training_.values.array() - params_.mu0).matrix();
  alpha_ = llt_.solve(residual);
  log_likelihood_ = -0.5 * residual.dot(alpha_) -
                    llt_.matrixLLT().diagonal().array().log().sum() -
                    0.5 * static_cast<double>(training_.count()) * kLog2Pi;
}

Prediction GPModel::predict(std::span<const double> x) const {
  check_dim(dim(), x.size(), "predict");
  const Eigen::Index m = training_.points.rows();
  Vector k(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double r2 = 0.0;
    for (Eigen::Index d = 0; d < training_.points.cols(); ++d) {
      const double diff = (training_.points(i, d) - x[static_cast<std::size_t>(d)]) /
                          params_.length_scales[d];
      r2 += diff * diff;
    }
    k[i] = matern52_from_distance(std::sqrt(r2), params_.sigma0_sq);
  }
  Prediction out;
  out.mean = params_.mu0 + k.dot(alpha_);
  llt_.matrixL().solveInPlace(k);
  out.variance = std::clamp(params_.sigma0_sq - k.squaredNorm(), 0.0, params_.sigma0_sq);
  return out;
}

void GPModel::predict_batch(const Matrix& x, Vector& means, Vector* variances) const {
  check_dim(dim(), static_cast<std::size_t>(x.cols()), "predict_batch");
  const Eigen::Index n = x.rows();
  means.resize(n);
  if (variances) variances->resize(n);
  const Matrix train_scaled = scaled_points(training_.points, params_.length_scales);
  constexpr Eigen::Index kChunk = 512;
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const Matrix q = scaled_points(x.middleRows(start, len), params_.length_scales);
    Matrix ks = kernel_scaled(train_scaled, q, params_.sigma0_sq);  // M x len
    means.segment(start, len) = (ks.transpose() * alpha_).array() + params_.mu0;
    if (variances) {
      llt_.matrixL().solveInPlace(ks);
      variances->segment(start, len) =
          (params_.sigma0_sq - ks.colwise().squaredNorm().transpose().array())
              .max(0.0)
              .min(params_.sigma0_sq)
              .matrix();
    }
  }
}

double log_marginal_likelihood(const TrainingSet& training, const KernelParams& params) {
  training.validate();
  params.validate(training.dim());
  const Factor f = factorize_or_throw(covariance(training, params));
  const Vector residual = (training.values.array() - params.mu0).matrix();
  const Vector alpha = f.llt.solve(residual);
  return -0.5 * residual.dot(alpha) - 0.5 * log_det(f) -
         0.5 * static_cast<double>(training.count()) * kLog2Pi;
}

LikelihoodGradient log_marginal_likelihood_gradient(const TrainingSet& training,
                                                    const KernelParams& params) {
  training.validate();
  params.validate(training.dim());
  Evaluation e = evaluate(training, params, false, true);
  if (!std::isfinite(e.value)) {
    factorize_or_throw(covariance(training, params));  // throws with the diagnostic
  }
  return {e.value, std::move(e.gradient)};
}

double profiled_mean(const TrainingSet& training, const KernelParams& params) {
  const Factor f = factorize_or_throw(covariance(training, params));
  const Eigen::Index m = training.points.rows();
  const Vector ci1 = f.llt.solve(Vector::Ones(m));
  const Vector ciy = f.llt.solve(training.values);
  return ci1.sum() != 0.0 ? ciy.sum() / ci1.sum() : training.values.mean();
}

namespace {

// Above this size the multi-start runs on an evenly spread subset and only the winner is
// polished on the full data.
constexpr Eigen::Index kSubsetSize = 256;

struct Search {
  const TrainingSet& training;
  double noise_sq;
  Vector lower, upper;

  KernelParams params_of(const Vector& x) const {
    KernelParams p;
    p.sigma0_sq = std::exp(x[0]);
    p.length_scales = x.tail(x.size() - 1).array().exp().matrix();
    p.noise_sq = noise_sq;
    return p;
  }

  double value(const Vector& x) const { return evaluate(training, params_of(x), true, false).value; }

  local_search::Result ascend(const Vector& x0, int max_iterations) const {
    const Eigen::Index n = x0.size() - 1;
    auto objective = [&](const Vector& x, Vector* grad) {
      const Evaluation e = evaluate(training, params_of(x), true, grad != nullptr);
      if (!std::isfinite(e.value)) return -std::numeric_limits<double>::infinity();
      if (grad) *grad = e.gradient.tail(n + 1);
      return e.value;
    };
    return local_search::maximize_lbfgs_box(objective, x0, lower, upper, max_iterations, 1e-10);
  }
};

TrainingSet spread_subset(const TrainingSet& t, Eigen::Index size) {
  TrainingSet sub;
  sub.points.resize(size, t.points.cols());
  sub.values.resize(size);
  const Eigen::Index m = t.points.rows();
  for (Eigen::Index i = 0; i < size; ++i) {
    const Eigen::Index k = i * m / size;
    sub.points.row(i) = t.points.row(k);
    sub.values[i] = t.values[k];
  }
  return sub;
}

}  // namespace

GPModel fit(const TrainingSet& training, double noise_sq, const FitOptions& options) {
  training.validate();
  if (!(noise_sq >= 0.0)) throw InvalidArgument("noise_sq must be non-negative");
  const Eigen::Index m = training.points.rows(), n = training.points.cols();

  Vector widths = options.reference_widths.value_or(
      training.points.colwise().maxCoeff() - training.points.colwise().minCoeff());
  check_dim(static_cast<std::size_t>(n), static_cast<std::size_t>(widths.size()),
            "reference widths");
  for (Eigen::Index d = 0; d < n; ++d) {
    if (!(widths[d] > 0.0) || !std::isfinite(widths[d])) widths[d] = 1.0;
  }

  if (m == 1) {
    KernelParams p{training.values[0], 1.0, widths, noise_sq};
    return GPModel(training, p);
  }

  const double mean = training.values.mean();
  double variance = (training.values.array() - mean).square().mean();
  const double floor = 1e-14 * std::max(1.0, mean * mean);
  variance = std::max(variance, floor);

  // Optimization variables: log sigma0_sq, log l_1..l_N. mu0 is profiled.
  Vector lower(n + 1), upper(n + 1), start_lo(n + 1), start_hi(n + 1);
  lower[0] = std::log(1e-6 * variance);
  upper[0] = std::log(1e3 * variance);
  start_lo[0] = std::log(0.1 * variance);
  start_hi[0] = std::log(10.0 * variance);
  for (Eigen::Index d = 0; d < n; ++d) {
    lower[d + 1] = std::log(1e-3 * widths[d]);
    upper[d + 1] = std::log(1e3 * widths[d]);
    start_lo[d + 1] = std::log(0.05 * widths[d]);
    start_hi[d + 1] = std::log(5.0 * widths[d]);
  }

  const Search full{training, noise_sq, lower, upper};
  std::vector<Vector> starts;
  if (options.warm_start) {
    const KernelParams& w = *options.warm_start;
    if (w.length_scales.size() == n && w.sigma0_sq > 0.0) {
      Vector x(n + 1);
      x[0] = std::log(w.sigma0_sq);
      x.tail(n) = w.length_scales.array().log().matrix();
      starts.push_back(x.cwiseMax(lower).cwiseMin(upper));
    }
  }
  if (!options.warm_only || starts.empty()) {
    const Eigen::MatrixXd unit =
        sampling::sobol_unit(static_cast<std::size_t>(n + 1),
                             static_cast<std::size_t>(std::max(options.starts, 1)));
    for (Eigen::Index s = 0; s < unit.rows(); ++s) {
      Vector x(n + 1);
      for (Eigen::Index d = 0; d <= n; ++d) {
        double u = unit(s, d);
        if (options.seed != 0) {
          u += sampling::uniform(options.seed, 0x5eed, static_cast<std::uint64_t>(d));
          u -= std::floor(u);
        }
        x[d] = start_lo[d] + u * (start_hi[d] - start_lo[d]);
      }
      starts.push_back(x);
    }
  }

  Vector best_x;
  double best_value = -std::numeric_limits<double>::infinity();
  auto consider = [&](const local_search::Result& r) {
    if (r.value > best_value) {
      best_value = r.value;
      best_x = r.x;
    }
  };
  if (m <= kSubsetSize || (options.warm_only && options.warm_start)) {
    for (const Vector& x0 : starts) consider(full.ascend(x0, options.max_iterations));
  } else {
    const TrainingSet sub = spread_subset(training, kSubsetSize);
    const Search coarse{sub, noise_sq, lower, upper};
    Vector sub_best;
    double sub_value = -std::numeric_limits<double>::infinity();
    for (const Vector& x0 : starts) {
      const auto r = coarse.ascend(x0, options.max_iterations);
      if (r.value > sub_value) {
        sub_value = r.value;
        sub_best = r.x;
      }
    }
    // Screen the subset optimum against the raw starts on the full data, then polish.
    Vector x0 = sub_value > -std::numeric_limits<double>::infinity() ? sub_best : starts.front();
    double v0 = full.value(x0);
    for (const Vector& x : starts) {
      const double v = full.value(x);
      if (v > v0) {
        v0 = v;
        x0 = x;
      }
    }
    consider(full.ascend(x0, options.max_iterations));
  }
  if (!std::isfinite(best_value)) {
    // Every start failed to factorize: report the diagnostic of the first one.
    factorize_or_throw(covariance(training, full.params_of(starts.front())));
    throw NumericalError("hyperparameter optimization found no feasible start");
  }
  KernelParams best = full.params_of(best_x);
  best.mu0 = evaluate(training, best, true, false).mu0;
  return GPModel(training, best);
}

}  // namespace cbgopt::gp
