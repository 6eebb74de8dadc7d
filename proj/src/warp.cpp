#include "cbgopt/warp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <fmt/format.h>

#include "cbgopt/errors.hpp"
#include "cbgopt/local_search.hpp"

namespace cbgopt::warp {

WarpSpec::WarpSpec(double lower_bound, double upper_bound, double lower_cutoff,
                   double upper_cutoff, double position)
    : lower_bound_(lower_bound),
      upper_bound_(upper_bound),
      lower_cutoff_(lower_cutoff),
      upper_cutoff_(upper_cutoff),
      b_linear_(position) {
  if (std::isnan(lower_bound) || std::isnan(upper_bound) || !(lower_bound < upper_bound)) {
    throw InvalidArgument(fmt::format("warp bounds must satisfy lower < upper, got ({}, {})",
                                      lower_bound, upper_bound));
  }
  if (!std::isfinite(position)) throw InvalidArgument("warp position must be finite");
  if (has_lower()) {
    if (!(lower_bound < lower_cutoff) || !std::isfinite(lower_cutoff)) {
      throw InvalidArgument(fmt::format("lower cutoff {} must be finite and above the bound {}",
                                        lower_cutoff, lower_bound));
    }
  } else {
    lower_cutoff_ = -kInf;
  }
  if (has_upper()) {
    if (!(upper_cutoff < upper_bound) || !std::isfinite(upper_cutoff)) {
      throw InvalidArgument(fmt::format("upper cutoff {} must be finite and below the bound {}",
                                        upper_cutoff, upper_bound));
    }
  } else {
    upper_cutoff_ = kInf;
  }
  if (!(lower_cutoff_ < upper_cutoff_)) {
    throw InvalidArgument(fmt::format("warp cutoffs must be ordered, got {} and {}", lower_cutoff,
                                      upper_cutoff));
  }
  if (has_lower()) {
    const double d = lower_cutoff_ - lower_bound_;
    a_lower_ = 1.0 / d;
    b_lower_ = latent_lower_cutoff() - d * std::log(d);
  }
  if (has_upper()) {
    const double d = upper_bound_ - upper_cutoff_;
    a_upper_ = 1.0 / d;
    b_upper_ = latent_upper_cutoff() + d * std::log(d);
  }
}

double inverse_transform(const WarpSpec& w, double y) {
  if (w.has_lower() && y < w.latent_lower_cutoff()) {
    const double x = w.lower_bound() + std::exp(w.a_lower() * (y - w.b_lower()));
    // Keep the result strictly inside the bound when the exponential underflows.
    return std::max(x, std::nextafter(w.lower_bound(), kInf));
  }
  if (w.has_upper() && y > w.latent_upper_cutoff()) {
    const double x = w.upper_bound() - std::exp(-w.a_upper() * (y - w.b_upper()));
    return std::min(x, std::nextafter(w.upper_bound(), -kInf));
  }
  return y + w.b_linear();
}

double inverse_transform_derivative(const WarpSpec& w, double y) {
  if (w.has_lower() && y < w.latent_lower_cutoff()) {
    return w.a_lower() * std::exp(w.a_lower() * (y - w.b_lower()));
  }
  if (w.has_upper() && y > w.latent_upper_cutoff()) {
    return w.a_upper() * std::exp(-w.a_upper() * (y - w.b_upper()));
  }
  return 1.0;
}

namespace {

void check_inside(const WarpSpec& w, double x) {
  if (!(x > w.lower_bound() && x < w.upper_bound())) {
    throw DomainError(fmt::format("value {} is outside the open interval ({}, {})", x,
                                  w.lower_bound(), w.upper_bound()));
  }
}

}  // namespace

double transform(const WarpSpec& w, double x) {
  check_inside(w, x);
  if (x < w.lower_cutoff()) return w.b_lower() + std::log(x - w.lower_bound()) / w.a_lower();
  if (x > w.upper_cutoff()) return w.b_upper() - std::log(w.upper_bound() - x) / w.a_upper();
  return x - w.b_linear();
}

double transform_derivative(const WarpSpec& w, double x) {
  check_inside(w, x);
  if (x < w.lower_cutoff()) return (w.lower_cutoff() - w.lower_bound()) / (x - w.lower_bound());
  if (x > w.upper_cutoff()) return (w.upper_bound() - w.upper_cutoff()) / (w.upper_bound() - x);
  return 1.0;
}

BoundedPrediction predict_bounded(const WarpedGPModel& model, std::span<const double> x) {
  const gp::Prediction p = model.gp.predict(x);
  const double sd = std::sqrt(p.variance);
  BoundedPrediction out;
  out.latent_mean = p.mean;
  out.latent_variance = p.variance;
  out.median = inverse_transform(model.warp, p.mean);
  out.p16 = inverse_transform(model.warp, p.mean - sd);
  out.p84 = inverse_transform(model.warp, p.mean + sd);
  return out;
}

void predict_bounded_batch(const WarpedGPModel& model, const gp::Matrix& x, gp::Vector& median,
                           gp::Vector* p16, gp::Vector* p84) {
  gp::Vector means, variances;
  const bool spread = p16 != nullptr || p84 != nullptr;
  model.gp.predict_batch(x, means, spread ? &variances : nullptr);
  median.resize(means.size());
  if (p16) p16->resize(means.size());
  if (p84) p84->resize(means.size());
  for (Eigen::Index i = 0; i < means.size(); ++i) {
    median[i] = inverse_transform(model.warp, means[i]);
    if (spread) {
      const double sd = std::sqrt(variances[i]);
      if (p16) (*p16)[i] = inverse_transform(model.warp, means[i] - sd);
      if (p84) (*p84)[i] = inverse_transform(model.warp, means[i] + sd);
    }
  }
}

namespace {

void check_values(const gp::Vector& y, double lower, double upper) {
  std::vector<std::string> bad;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!(y[i] > lower && y[i] < upper)) bad.push_back(fmt::format("#{}={}", i, y[i]));
  }
  if (!bad.empty()) {
    const std::size_t shown = std::min<std::size_t>(bad.size(), 20);
    throw DomainError(fmt::format("{} value(s) outside ({}, {}): {}{}", bad.size(), lower, upper,
                                  fmt::join(bad.begin(), bad.begin() + static_cast<long>(shown), ", "),
                                  bad.size() > shown ? ", ..." : ""));
  }
}

gp::TrainingSet warped(const gp::TrainingSet& t, const WarpSpec& w) {
  gp::TrainingSet out{t.points, gp::Vector(t.values.size())};
  for (Eigen::Index i = 0; i < t.values.size(); ++i) out.values[i] = transform(w, t.values[i]);
  return out;
}

double log_jacobian(const gp::Vector& y, const WarpSpec& w) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += std::log(transform_derivative(w, y[i]));
  return s;
}

// Warped likelihood at a fixed kernel with the constant mean profiled out. The factor of
// the kernel matrix does not depend on the warp, so each evaluation is O(M^2).
class FixedKernelObjective {
 public:
  FixedKernelObjective(const gp::GPModel& model, const gp::Vector& y) : y_(y) {
    l_ = model.chol();
    u_ = gp::Vector::Ones(y.size());
    l_.triangularView<Eigen::Lower>().solveInPlace(u_);
    constant_ = -l_.diagonal().array().log().sum() -
                0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
  }

  double operator()(const WarpSpec& w) const {
    gp::Vector z(y_.size());
    double jac = 0.0;
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      z[i] = transform(w, y_[i]);
      jac += std::log(transform_derivative(w, y_[i]));
    }
    l_.triangularView<Eigen::Lower>().solveInPlace(z);
    const double mu = u_.dot(z) / u_.squaredNorm();
    return -0.5 * (z - mu * u_).squaredNorm() + constant_ + jac;
  }

 private:
  const gp::Vector& y_;
  gp::Matrix l_;
  gp::Vector u_;
  double constant_ = 0.0;
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// Unconstrained coordinates for the cutoffs of a warp with the given bounds.
struct CutoffCoordinates {
  double lower, upper;
  double spread;  // scale for one-sided maps

  bool two_sided() const { return std::isfinite(lower) && std::isfinite(upper); }

  WarpSpec decode(const Eigen::VectorXd& z) const {
    if (two_sided()) {
      const double cl = lower + (upper - lower) * sigmoid(z[0]);
      const double cu = cl + (upper - cl) * sigmoid(z[1]);
      return {lower, upper, cl, cu};
    }
    if (std::isfinite(lower)) return {lower, kInf, lower + spread * std::exp(z[0]), kInf};
    return {-kInf, upper, -kInf, upper - spread * std::exp(z[0])};
  }

  Eigen::VectorXd encode(double cl, double cu) const {
    if (two_sided()) {
      Eigen::VectorXd z(2);
      z[0] = logit((cl - lower) / (upper - lower));
      z[1] = logit((cu - cl) / (upper - cl));
      return z;
    }
    Eigen::VectorXd z(1);
    z[0] = std::isfinite(lower) ? std::log((cl - lower) / spread) : std::log((upper - cu) / spread);
    return z;
  }
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(h));
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (h - static_cast<double>(k)) * (v[k + 1] - v[k]);
}

WarpSpec search_warp(const FixedKernelObjective& objective, const gp::Vector& y,
                     const CutoffCoordinates& coords, const WarpSpec& current, double penalty) {
  const std::vector<double> v(y.data(), y.data() + y.size());
  const double lo = *std::min_element(v.begin(), v.end());
  const double hi = *std::max_element(v.begin(), v.end());

  // Segments holding data cost `penalty` each.
  auto score = [&](const WarpSpec& w) {
    double s = objective(w);
    if (w.has_lower() && lo < w.lower_cutoff()) s -= penalty;
    if (w.has_upper() && hi > w.upper_cutoff()) s -= penalty;
    return s;
  };
  auto score_z = [&](const Eigen::VectorXd& z) {
    try {
      const double s = score(coords.decode(z));
      return std::isfinite(s) ? s : -kInf;
    } catch (const InvalidArgument&) {
      return -kInf;
    }
  };

  std::vector<double> lower_candidates, upper_candidates;
  if (current.has_lower()) {
    const double idle = coords.lower + 0.5 * (lo - coords.lower);
    lower_candidates = {idle, quantile(v, 0.1), quantile(v, 0.25), quantile(v, 0.5),
                        current.lower_cutoff()};
  } else {
    lower_candidates = {-kInf};
  }
  if (current.has_upper()) {
    const double idle = hi + 0.5 * (coords.upper - hi);
    upper_candidates = {idle, quantile(v, 0.9), quantile(v, 0.75), quantile(v, 0.5),
                        current.upper_cutoff()};
  } else {
    upper_candidates = {kInf};
  }

  Eigen::VectorXd best_z;
  double best = -kInf;
  for (double cl : lower_candidates) {
    for (double cu : upper_candidates) {
      if (!(cl < cu)) continue;
      if (current.has_lower() && !(cl > coords.lower)) continue;
      if (current.has_upper() && !(cu < coords.upper)) continue;
      const Eigen::VectorXd z = coords.encode(cl, cu);
      if (!z.allFinite()) continue;
      const double s = score_z(z);
      if (s > best) {
        best = s;
        best_z = z;
      }
    }
  }
  if (!std::isfinite(best)) return current;
  const auto r = local_search::maximize_nelder_mead(score_z, best_z, 0.5, 300, 1e-10);
  return coords.decode(r.value >= best ? r.x : best_z);
}

}  // namespace

double warped_log_likelihood(const gp::TrainingSet& bounded, const WarpSpec& warp,
                             const gp::KernelParams& params) {
  check_values(bounded.values, warp.lower_bound(), warp.upper_bound());
  return gp::log_marginal_likelihood(warped(bounded, warp), params) +
         log_jacobian(bounded.values, warp);
}

WarpedGPModel fit_warped_gp(const gp::TrainingSet& bounded, double lower_bound,
                            double upper_bound, const WarpFitOptions& options) {
  bounded.validate();
  if (!(lower_bound < upper_bound)) {
    throw InvalidArgument(fmt::format("warp bounds must satisfy lower < upper, got ({}, {})",
                                      lower_bound, upper_bound));
  }
  check_values(bounded.values, lower_bound, upper_bound);
  if (!std::isfinite(lower_bound) && !std::isfinite(upper_bound)) {
    return {WarpSpec::identity(), gp::fit(bounded, options.noise_sq, options.gp)};
  }
  if (bounded.count() < 16) {
    throw InvalidArgument(fmt::format("warp fitting needs at least 16 values, got {}",
                                      bounded.count()));
  }

  const gp::Vector& y = bounded.values;
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  CutoffCoordinates coords{lower_bound, upper_bound, 1.0};
  if (std::isfinite(lower_bound) && !std::isfinite(upper_bound)) {
    coords.spread = std::max(hi - lower_bound, 1e-300);
  } else if (!std::isfinite(lower_bound)) {
    coords.spread = std::max(upper_bound - lo, 1e-300);
  }

  // Start with every data point on the affine segment.
  const double cl0 = std::isfinite(lower_bound) ? lower_bound + 0.5 * (lo - lower_bound) : -kInf;
  const double cu0 = std::isfinite(upper_bound) ? hi + 0.5 * (upper_bound - hi) : kInf;
  WarpSpec w(lower_bound, upper_bound, cl0, cu0);

  const double penalty = options.segment_penalty.value_or(
      0.5 * std::log(static_cast<double>(bounded.count())));
  gp::GPModel model = gp::fit(warped(bounded, w), options.noise_sq, options.gp);
  for (int round = 0; round < options.rounds; ++round) {
    const FixedKernelObjective objective(model, y);
    const WarpSpec next = search_warp(objective, y, coords, w, penalty);
    const bool moved = next.lower_cutoff() != w.lower_cutoff() ||
                       next.upper_cutoff() != w.upper_cutoff();
    w = next;
    if (!moved && round > 0) break;
    gp::FitOptions refit = options.gp;
    refit.warm_start = model.params();
    refit.warm_only = true;
    refit.max_iterations = std::min(options.gp.max_iterations, options.refit_iterations);
    gp::GPModel candidate = gp::fit(warped(bounded, w), options.noise_sq, refit);
    model = std::move(candidate);
  }
  return {w, std::move(model)};
}

WarpSpec fit_warp(const gp::TrainingSet& bounded, double lower_bound, double upper_bound,
                  const WarpFitOptions& options) {
  return fit_warped_gp(bounded, lower_bound, upper_bound, options).warp;
}

}  // namespace cbgopt::warp
