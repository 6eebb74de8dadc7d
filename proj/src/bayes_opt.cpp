#include "cbgopt/bayes_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "cbgopt/errors.hpp"
#include "cbgopt/local_search.hpp"

namespace cbgopt::bo {

double expected_improvement(double mean, double variance, double f_min) {
  const double improvement = f_min - mean;
  const double sd = std::sqrt(std::max(variance, 0.0));
  if (sd == 0.0) return std::max(improvement, 0.0);
  const double z = improvement / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(improvement * cdf + sd * pdf, 0.0);
}

double expected_improvement(const gp::GPModel& model, std::span<const double> x, double f_min) {
  const gp::Prediction p = model.predict(x);
  return expected_improvement(p.mean, p.variance, f_min);
}

const Observation& BOState::best() const {
  if (history.empty()) throw StateError("no successful evaluations yet");
  return *std::min_element(history.begin(), history.end(),
                           [](const Observation& a, const Observation& b) {
                             return a.value < b.value;
                           });
}

namespace {

gp::TrainingSet training_of(const BOState& state) {
  gp::TrainingSet t;
  const auto m = static_cast<Eigen::Index>(state.history.size());
  const auto n = static_cast<Eigen::Index>(state.domain.dim());
  t.points.resize(m, n);
  t.values.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index d = 0; d < n; ++d) t.points(i, d) = state.history[i].x[d];
    t.values[i] = state.history[i].value;
  }
  return t;
}

gp::Vector widths_of(const BoxDomain& domain) {
  gp::Vector w(static_cast<Eigen::Index>(domain.dim()));
  for (std::size_t d = 0; d < domain.dim(); ++d) w[static_cast<Eigen::Index>(d)] = domain.width(d);
  return w;
}

// Exact refits are deterministic; if conditioning fails a small nugget is added.
gp::GPModel fit_robust(const gp::TrainingSet& t, const gp::FitOptions& options) {
  try {
    return gp::fit(t, 0.0, options);
  } catch (const NumericalError&) {
    const double var = (t.values.array() - t.values.mean()).square().mean();
    return gp::fit(t, 1e-8 * std::max(var, 1e-300), options);
  }
}

bool refit_due(const BOState& state) {
  return !state.surrogate || state.history.size() >= state.observations_at_refit + state.refit_every;
}

bool near_any(std::span<const double> x, const std::vector<std::vector<double>>& points,
              const BoxDomain& domain) {
  for (const auto& p : points) {
    double worst = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      worst = std::max(worst, std::abs(x[d] - p[d]) / domain.width(d));
    }
    if (worst < 1e-9) return true;
  }
  return false;
}

std::vector<std::vector<double>> visited(const BOState& state) {
  std::vector<std::vector<double>> out = state.failed;
  for (const auto& o : state.history) out.push_back(o.x);
  return out;
}

std::vector<double> sobol_point(const BoxDomain& domain, std::size_t index) {
  return sampling::sobol(domain.dim(), index + 1, domain).back();
}

}  // namespace

void update_surrogate(BOState& state) {
  if (state.history.empty()) throw StateError("cannot fit a surrogate without observations");
  const gp::TrainingSet t = training_of(state);
  gp::FitOptions options;
  options.seed = state.seed;
  options.reference_widths = widths_of(state.domain);
  if (refit_due(state)) {
    if (state.surrogate) {
      options.warm_start = state.surrogate->params();
      options.warm_only = true;
      options.max_iterations = 50;
    }
    state.surrogate = fit_robust(t, options);
    state.observations_at_refit = state.history.size();
    return;
  }
  // Same hyperparameters, conditioned on the new observations.
  gp::KernelParams p = state.surrogate->params();
  try {
    p.mu0 = gp::profiled_mean(t, p);
    state.surrogate.emplace(t, p);
  } catch (const NumericalError&) {
    state.surrogate = fit_robust(t, options);
    state.observations_at_refit = state.history.size();
  }
}

std::vector<double> propose(const BOState& state) {
  if (!state.surrogate) throw StateError("propose needs a trained surrogate");
  const BoxDomain& domain = state.domain;
  const std::size_t n = domain.dim();
  const std::vector<double> center = domain.center();
  for (std::size_t d = 0; d < n; ++d) {
    if (domain.width(d) <= std::numeric_limits<double>::epsilon() * (1.0 + std::abs(center[d]))) {
      fmt::print(stderr, "warning: domain is degenerate along {}; proposing its center\n",
                 d < domain.names.size() ? domain.names[d] : std::to_string(d));
      return center;
    }
  }

  const gp::GPModel& model = *state.surrogate;
  const double f_min = state.f_min;
  Eigen::VectorXd lower(n), upper(n);
  for (std::size_t d = 0; d < n; ++d) {
    lower[d] = domain.lower[d];
    upper[d] = domain.upper[d];
  }
  auto ei = [&](const Eigen::VectorXd& x) {
    return expected_improvement(model, std::span<const double>(x.data(), n), f_min);
  };

  // Sobol seeds, shifted per iteration so consecutive proposals start from new points.
  const std::size_t starts = std::max<std::size_t>(state.acquisition_starts, 1);
  const Eigen::MatrixXd unit = sampling::sobol_unit(n, starts);
  const std::uint64_t iteration = state.history.size() + state.failed.size();
  std::vector<Eigen::VectorXd> seeds;
  for (Eigen::Index s = 0; s < unit.rows(); ++s) {
    Eigen::VectorXd x(n);
    for (std::size_t d = 0; d < n; ++d) {
      double u = unit(s, d) + sampling::uniform(state.seed, iteration, d);
      u -= std::floor(u);
      x[d] = domain.lower[d] + u * domain.width(d);
    }
    seeds.push_back(x);
  }
  if (!state.history.empty()) {
    const auto& b = state.best().x;
    seeds.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), n));
  }

  Eigen::VectorXd best_x = seeds.front();
  double best_ei = -1.0;
  for (const auto& s : seeds) {
    const auto r = local_search::maximize_compass_box(ei, s, lower, upper, 0.05, 1e-7, 200);
    if (r.value > best_ei) {
      best_ei = r.value;
      best_x = r.x;
    }
  }
  std::vector<double> out(best_x.data(), best_x.data() + n);
  const auto seen = visited(state);
  if (!near_any(out, seen, domain)) return out;
  // Exhausted region: continue with the Sobol exploration sequence.
  for (std::size_t k = iteration;; ++k) {
    auto candidate = sobol_point(domain, k);
    if (!near_any(candidate, seen, domain)) return candidate;
  }
}

BOState optimize(const Evaluator& evaluator, const BoxDomain& domain, const Options& options,
                 std::vector<Observation> resume) {
  domain.validate();
  const std::size_t n = domain.dim();
  if (options.init_count < n + 1) {
    throw InvalidArgument(fmt::format("init_count {} must be at least dim+1 = {}",
                                      options.init_count, n + 1));
  }
  if (options.budget <= options.init_count) {
    throw InvalidArgument(fmt::format("budget {} must exceed init_count {}", options.budget,
                                      options.init_count));
  }
  if (resume.size() > options.budget) {
    throw InvalidArgument(fmt::format("resumed history ({} rows) exceeds the budget {}",
                                      resume.size(), options.budget));
  }

  BOState state;
  state.domain = domain;
  state.seed = options.seed;
  state.refit_every = std::max<std::size_t>(options.refit_every, 1);
  state.acquisition_starts = options.acquisition_starts;
  state.f_min = std::numeric_limits<double>::infinity();

  auto record = [&](std::vector<double> x, std::optional<double> value) {
    if (value && std::isfinite(*value)) {
      state.history.push_back({std::move(x), *value});
      state.f_min = std::min(state.f_min, *value);
    } else {
      state.failed.push_back(std::move(x));
    }
  };
  auto can_model = [&] { return state.history.size() >= n + 1; };

  // Replay an earlier run; hyperparameter fits happen at the same points as originally.
  for (auto& obs : resume) {
    if (obs.x.size() != n || !domain.contains(obs.x, 1e-12)) {
      throw InvalidArgument("resumed observation outside the domain");
    }
    const std::size_t done = state.history.size() + state.failed.size();
    if (done >= options.init_count && can_model() && refit_due(state)) update_surrogate(state);
    record(std::move(obs.x), std::isfinite(obs.value) ? std::optional(obs.value) : std::nullopt);
  }

  std::size_t done = state.history.size() + state.failed.size();
  while (done < options.budget) {
    std::vector<double> x;
    if (done < options.init_count || !can_model()) {
      x = sobol_point(domain, done);
      const auto seen = visited(state);
      for (std::size_t k = done + 1; near_any(x, seen, domain); ++k) x = sobol_point(domain, k);
    } else {
      update_surrogate(state);
      x = propose(state);
    }
    std::optional<double> value;
    try {
      value = evaluator(x);
    } catch (const std::exception&) {
      value.reset();
    }
    if (value && !std::isfinite(*value)) value.reset();
    record(x, value);
    ++done;
    if (options.on_evaluation) options.on_evaluation(done, x, value, state.f_min);
  }
  state.budget = 0;
  if (can_model()) update_surrogate(state);
  return state;
}

}  // namespace cbgopt::bo
