#include "cbgopt/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <thread>

#include <fmt/format.h>

#include "cbgopt/bayes_opt.hpp"
#include "cbgopt/errors.hpp"

namespace cbgopt::robust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd rows_to_matrix(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  Eigen::MatrixXd m(rows.size(), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) m(i, d) = rows[i][d];
  }
  return m;
}

double value_of(const OracleOutput& o, Quantity q) {
  switch (q) {
    case Quantity::LambdaC: return o.lambda_c;
    case Quantity::Purcell: return o.fp;
    case Quantity::Efficiency: return o.eta_smf;
  }
  return 0.0;
}

// Splits rows [0, n) into contiguous chunks, one per thread.
template <class F>
void parallel_chunks(std::size_t n, std::size_t threads, F&& body) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t step = (n + threads - 1) / threads;
  for (std::size_t begin = 0; begin < n; begin += step) {
    pool.emplace_back([&body, begin, end = std::min(n, begin + step)] { body(begin, end); });
  }
  for (auto& t : pool) t.join();
}

// Surrogate median and 16/84 predictive band per row.
struct Spread {
  Eigen::VectorXd median, p16, p84;
};

Spread predict_spread(const SurrogateBundle& b, Quantity q, const Eigen::MatrixXd& x,
                      std::size_t threads) {
  const auto n = static_cast<std::size_t>(x.rows());
  Spread s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
    const auto len = static_cast<Eigen::Index>(end - begin);
    const Eigen::MatrixXd rows = x.middleRows(static_cast<Eigen::Index>(begin), len);
    gp::Vector median, lo, hi;
    if (q == Quantity::LambdaC) {
      gp::Vector var;
      b.lambda_model.predict_batch(rows, median, &var);
      const gp::Vector sd = var.cwiseMax(0.0).cwiseSqrt();
      lo = median - sd;
      hi = median + sd;
    } else {
      const auto& model = q == Quantity::Purcell ? b.fp_model : b.eta_model;
      warp::predict_bounded_batch(model, rows, median, &lo, &hi);
    }
    s.median.segment(begin, len) = median;
    s.p16.segment(begin, len) = lo;
    s.p84.segment(begin, len) = hi;
  });
  return s;
}

double sorted_median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return percentile_sorted(v, 50.0);
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

QuantityStats summarize(const Eigen::VectorXd& values, const Eigen::VectorXd& half_widths,
                        std::size_t resamples, std::uint64_t seed, std::uint64_t stream) {
  QuantityStats s;
  const auto n = static_cast<std::size_t>(values.size());
  s.sample_count = n;
  s.distribution.assign(values.data(), values.data() + n);
  std::sort(s.distribution.begin(), s.distribution.end());
  s.median = percentile_sorted(s.distribution, 50.0);
  s.p16 = percentile_sorted(s.distribution, 16.0);
  s.p84 = percentile_sorted(s.distribution, 84.0);
  s.sigma_plus = s.p84 - s.median;
  s.sigma_minus = s.median - s.p16;

  std::vector<double> medians(resamples), plus(resamples), minus(resamples);
  std::vector<double> draw(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    const std::uint64_t rs = (stream << 32) | b;
    for (std::size_t i = 0; i < n; ++i) {
      draw[i] = values[static_cast<Eigen::Index>(sampling::hash_u64(seed, rs, i) % n)];
    }
    std::sort(draw.begin(), draw.end());
    medians[b] = percentile_sorted(draw, 50.0);
    plus[b] = percentile_sorted(draw, 84.0) - medians[b];
    minus[b] = medians[b] - percentile_sorted(draw, 16.0);
  }
  s.mc_error = standard_error(medians);
  s.sigma_plus_error = standard_error(plus);
  s.sigma_minus_error = standard_error(minus);
  s.predictive_sd =
      sorted_median_of(std::vector<double>(half_widths.data(), half_widths.data() + n));
  s.sigma_median = std::hypot(s.mc_error, s.predictive_sd);
  return s;
}

std::vector<double> mu_scale_or_default(const std::vector<double>& given) {
  if (!given.empty()) return given;
  std::vector<double> s(DesignPoint::kDim, 2.0);
  s[2] = 22.0;
  return s;
}

Eigen::MatrixXd design_rows(const std::vector<DesignPoint>& points) {
  Eigen::MatrixXd m(points.size(), DesignPoint::kDim);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto a = points[i].to_array();
    for (std::size_t d = 0; d < DesignPoint::kDim; ++d) m(i, d) = a[d];
  }
  return m;
}

}  // namespace

std::string quantity_name(Quantity q) {
  switch (q) {
    case Quantity::LambdaC: return "lambda_c";
    case Quantity::Purcell: return "fp";
    case Quantity::Efficiency: return "eta_smf";
  }
  return "";
}

SurrogateBundle::Prediction SurrogateBundle::predict(Quantity q, const DesignPoint& p) const {
  const auto a = p.to_array();
  if (q == Quantity::LambdaC) {
    const auto g = lambda_model.predict(a);
    const double sd = std::sqrt(std::max(g.variance, 0.0));
    return {g.mean, g.mean - sd, g.mean + sd};
  }
  const auto w = warp::predict_bounded(q == Quantity::Purcell ? fp_model : eta_model, a);
  return {w.median, w.p16, w.p84};
}

Eigen::VectorXd SurrogateBundle::predict_median_batch(Quantity q, const Eigen::MatrixXd& x) const {
  gp::Vector out;
  if (q == Quantity::LambdaC) {
    lambda_model.predict_batch(x, out, nullptr);
  } else {
    warp::predict_bounded_batch(q == Quantity::Purcell ? fp_model : eta_model, x, out);
  }
  return out;
}

SurrogateBundle train_bundle(const Oracle& oracle, const DesignPoint& center,
                             const ToleranceSpec& tol, std::size_t count, std::uint64_t seed,
                             const TrainOptions& options) {
  if (count < 64 || (count & (count - 1)) != 0) {
    throw InvalidArgument(fmt::format("training count must be a power of two >= 64, got {}", count));
  }
  BoxDomain domain;
  if (options.domain) {
    domain = *options.domain;
    domain.validate();
  } else if (options.scale.empty()) {
    domain = sampling::training_domain(center, tol);
  } else {
    domain = sampling::training_domain(center, tol, options.scale);
  }
  if (domain.dim() != DesignPoint::kDim) {
    throw InvalidArgument("bundle domain must have 7 dimensions");
  }

  const auto points = sampling::sobol(DesignPoint::kDim, count, domain);
  std::vector<std::vector<double>> kept;
  std::vector<OracleOutput> outputs;
  std::size_t failures = 0;
  for (const auto& x : points) {
    std::optional<OracleOutput> out;
    try {
      out = oracle(DesignPoint::from_span(x));
    } catch (const std::exception&) {
      out.reset();
    }
    if (!out || !std::isfinite(out->lambda_c) || !std::isfinite(out->fp) ||
        !std::isfinite(out->eta_smf)) {
      ++failures;
      continue;
    }
    kept.push_back(x);
    outputs.push_back(*out);
  }
  if (static_cast<double>(failures) > options.max_failure_fraction * static_cast<double>(count)) {
    throw NumericalError(fmt::format("{} of {} oracle evaluations failed", failures, count));
  }
  if (failures > 0) {
    std::cerr << fmt::format("warning: dropped {} failed oracle evaluations of {}\n", failures,
                             count);
  }

  return fit_bundle(rows_to_matrix(kept, DesignPoint::kDim), outputs, domain, seed, options);
}

SurrogateBundle fit_bundle(const Eigen::MatrixXd& x, const std::vector<OracleOutput>& outputs,
                           const BoxDomain& domain, std::uint64_t seed,
                           const TrainOptions& options) {
  if (static_cast<std::size_t>(x.cols()) != DesignPoint::kDim || domain.dim() != DesignPoint::kDim ||
      static_cast<std::size_t>(x.rows()) != outputs.size()) {
    throw InvalidArgument("bundle data must have 7 columns and one output per row");
  }
  auto training = [&](Quantity q) {
    Eigen::VectorXd v(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) v[i] = value_of(outputs[static_cast<std::size_t>(i)], q);
    return gp::TrainingSet{x, v};
  };
  gp::FitOptions fit;
  fit.starts = options.gp_starts;
  fit.seed = seed;
  Eigen::VectorXd widths(DesignPoint::kDim);
  for (std::size_t d = 0; d < DesignPoint::kDim; ++d) widths[d] = domain.width(d);
  fit.reference_widths = widths;
  warp::WarpFitOptions wfit;
  wfit.gp = fit;

  return SurrogateBundle{gp::fit(training(Quantity::LambdaC), 0.0, fit),
                         warp::fit_warped_gp(training(Quantity::Purcell), 0.0, kInf, wfit),
                         warp::fit_warped_gp(training(Quantity::Efficiency), 0.0, 1.0, wfit),
                         domain};
}

void check_inside(const BoxDomain& domain, const DesignPoint& mean, const ToleranceSpec& tol,
                  double sigmas) {
  tol.validate();
  if (tol.dim() != domain.dim()) {
    throw InvalidArgument("tolerance and domain dimensions differ");
  }
  const auto m = mean.to_array();
  std::vector<std::string> bad;
  for (std::size_t d = 0; d < domain.dim(); ++d) {
    const double lo = m[d] - sigmas * tol.sigma[d];
    const double hi = m[d] + sigmas * tol.sigma[d];
    if (lo < domain.lower[d] || hi > domain.upper[d]) {
      bad.push_back(fmt::format("{} [{}, {}] not in [{}, {}]", DesignPoint::kNames[d], lo, hi,
                                domain.lower[d], domain.upper[d]));
    }
  }
  if (!bad.empty()) {
    std::string msg = fmt::format("{}-sigma box leaves the surrogate domain:", sigmas);
    for (const auto& b : bad) msg += " " + b + ";";
    msg.pop_back();
    throw ExtrapolationError(msg);
  }
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw InvalidArgument(fmt::format("percentile {} not in [0, 100]", q));
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q / 100.0;
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
}

RobustnessReport analyze(const SurrogateBundle& bundle, const DesignPoint& mean,
                         const ToleranceSpec& tol, std::size_t n_samples, std::uint64_t seed,
                         const AnalyzeOptions& options) {
  if (n_samples < 2) throw InvalidArgument("analyze needs at least 2 samples");
  check_inside(bundle.domain, mean, tol);
  const auto m = mean.to_array();
  const Eigen::MatrixXd x = sampling::mvn_sample(m, tol.sigma, n_samples, seed);

  RobustnessReport report;
  report.mean = mean;
  report.tolerances = tol;
  report.seed = seed;
  for (auto q : kQuantities) {
    const Spread s = predict_spread(bundle, q, x, options.threads);
    report.stats[static_cast<int>(q)] =
        summarize(s.median, 0.5 * (s.p84 - s.p16), options.bootstrap_resamples, seed,
                  static_cast<std::uint64_t>(q) + 1);
  }
  return report;
}

std::string format_triple(const QuantityStats& s, double scale, int precision,
                          const std::string& unit) {
  return fmt::format("({:.{}f} ± {:.{}f})_{{-{:.{}f}}}^{{+{:.{}f}}}{}", s.median * scale,
                     precision, s.sigma_median * scale, precision, s.sigma_minus * scale,
                     precision, s.sigma_plus * scale, precision, unit.empty() ? "" : " " + unit);
}

double robust_target(const SurrogateBundle& bundle, const DesignPoint& mu,
                     const ToleranceSpec& tol, const objective::ObjectiveSpec& spec,
                     const Eigen::MatrixXd& standard_normals, std::array<double, 3>* medians) {
  if (static_cast<std::size_t>(standard_normals.cols()) != DesignPoint::kDim ||
      tol.dim() != DesignPoint::kDim) {
    throw InvalidArgument("robust target needs 7-column normals and 7 tolerances");
  }
  const auto m = mu.to_array();
  Eigen::MatrixXd x = standard_normals;
  for (std::size_t d = 0; d < DesignPoint::kDim; ++d) {
    x.col(d) = (x.col(d).array() * tol.sigma[d] + m[d]).matrix();
  }
  std::array<double, 3> med{};
  for (auto q : kQuantities) {
    const Eigen::VectorXd v = bundle.predict_median_batch(q, x);
    med[static_cast<int>(q)] = sorted_median_of(std::vector<double>(v.data(), v.data() + v.size()));
  }
  if (medians) *medians = med;
  objective::ModeResult mode;
  mode.lambda_c = med[0];
  mode.fp = med[1];
  mode.eta_smf = med[2];
  return objective::target(mode, spec);
}

BoxDomain robust_mean_domain(const BoxDomain& domain, const ToleranceSpec& tol,
                             const std::vector<double>& mu_bounds_sigma) {
  tol.validate();
  const auto scale = mu_scale_or_default(mu_bounds_sigma);
  if (scale.size() != DesignPoint::kDim || tol.dim() != DesignPoint::kDim) {
    throw InvalidArgument("mean bounds and tolerances need 7 entries");
  }
  const auto c = domain.center();
  BoxDomain box;
  box.names = domain.names;
  std::vector<std::string> bad;
  for (std::size_t d = 0; d < DesignPoint::kDim; ++d) {
    if (!(scale[d] > 0.0)) throw InvalidArgument("mean bounds must be positive");
    box.lower.push_back(c[d] - scale[d] * tol.sigma[d]);
    box.upper.push_back(c[d] + scale[d] * tol.sigma[d]);
    const double reach = (scale[d] + 3.0) * tol.sigma[d];
    if (c[d] - reach < domain.lower[d] || c[d] + reach > domain.upper[d]) {
      bad.push_back(fmt::format("{} (mean range +-{} plus 3 sigma exceeds the training box)",
                                DesignPoint::kNames[d], scale[d] * tol.sigma[d]));
    }
  }
  if (!bad.empty()) {
    std::string msg = "mean bounds leave the surrogate domain:";
    for (const auto& b : bad) msg += " " + b + ";";
    msg.pop_back();
    throw ExtrapolationError(msg);
  }
  return box;
}

RobustResult robust_optimize(const SurrogateBundle& bundle, const ToleranceSpec& tol,
                             const objective::ObjectiveSpec& spec, const RobustOptions& options) {
  spec.validate();
  if (options.n_samples < 1) throw InvalidArgument("robust_optimize needs samples");
  RobustResult result;
  result.mu_domain = robust_mean_domain(bundle, tol, options.mu_bounds_sigma);
  const Eigen::MatrixXd z =
      sampling::standard_normal_matrix(options.n_samples, DesignPoint::kDim, options.seed);

  bo::Options bo_options;
  bo_options.budget = options.budget;
  bo_options.init_count = options.init_count;
  bo_options.seed = options.seed;
  bo_options.on_evaluation = [&](std::size_t, std::span<const double>, std::optional<double>,
                                 double best) { result.trace.push_back(best); };
  const auto state = bo::optimize(
      [&](std::span<const double> x) -> std::optional<double> {
        return robust_target(bundle, DesignPoint::from_span(x), tol, spec, z);
      },
      result.mu_domain, bo_options);
  const auto& best = state.best();
  result.mu = DesignPoint::from_span(best.x);
  result.target = robust_target(bundle, result.mu, tol, spec, z, &result.medians);
  return result;
}

VerificationSummary verify(const SurrogateBundle& bundle, const Oracle& oracle,
                           const DesignPoint& mean, const ToleranceSpec& tol, std::size_t count,
                           std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("verify needs at least one sample");
  check_inside(bundle.domain, mean, tol);
  const auto draws = sampling::mvn_sample(mean, tol, count, seed);

  std::vector<DesignPoint> kept;
  std::vector<OracleOutput> truth;
  for (const auto& p : draws) {
    std::optional<OracleOutput> out;
    try {
      out = oracle(p);
    } catch (const std::exception&) {
      out.reset();
    }
    if (!out || !std::isfinite(out->lambda_c) || !std::isfinite(out->fp) ||
        !std::isfinite(out->eta_smf)) {
      continue;
    }
    kept.push_back(p);
    truth.push_back(*out);
  }
  VerificationSummary summary;
  summary.requested = count;
  summary.evaluated = kept.size();
  if (kept.empty()) throw NumericalError("every verification oracle evaluation failed");
  if (kept.size() < count) {
    std::cerr << fmt::format("warning: dropped {} failed oracle evaluations of {}\n",
                             count - kept.size(), count);
  }

  const Eigen::MatrixXd x = design_rows(kept);
  for (auto q : kQuantities) {
    auto& v = summary.quantities[static_cast<int>(q)];
    const Spread s = predict_spread(bundle, q, x, 1);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const double y = value_of(truth[i], q);
      const auto e = static_cast<Eigen::Index>(i);
      if (y >= s.p16[e] && y <= s.p84[e]) ++inside;
      v.oracle_values.push_back(y);
      v.surrogate_values.push_back(s.median[e]);
    }
    v.oracle_median = sorted_median_of(v.oracle_values);
    v.surrogate_median = sorted_median_of(v.surrogate_values);
    v.median_discrepancy = std::abs(v.oracle_median - v.surrogate_median);
    v.band_coverage = static_cast<double>(inside) / static_cast<double>(kept.size());
  }
  return summary;
}

}  // namespace cbgopt::robust
