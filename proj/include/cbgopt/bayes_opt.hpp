#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cbgopt/gp.hpp"
#include "cbgopt/sampling.hpp"

namespace cbgopt::bo {

/// Closed-form E[max(0, f_min - f)] for f ~ N(mean, variance).
double expected_improvement(double mean, double variance, double f_min);
double expected_improvement(const gp::GPModel& model, std::span<const double> x, double f_min);

struct Observation {
  std::vector<double> x;
  double value = 0.0;
};

struct BOState {
  BoxDomain domain;
  std::vector<Observation> history;
  /// Points whose evaluation failed. Excluded from training and from proposals.
  std::vector<std::vector<double>> failed;
  std::optional<gp::GPModel> surrogate;
  double f_min = 0.0;
  std::size_t budget = 0;  // evaluations left
  std::uint64_t seed = 0;
  std::size_t acquisition_starts = 64;
  std::size_t refit_every = 10;
  std::size_t observations_at_refit = 0;

  /// Best history entry. Throws StateError on an empty history.
  const Observation& best() const;
};

/// Returns the objective value or nullopt for a failed evaluation. Exceptions thrown by
/// the evaluator are treated as failures.
using Evaluator = std::function<std::optional<double>(std::span<const double>)>;

struct Options {
  std::size_t budget = 300;
  std::size_t init_count = 32;
  std::uint64_t seed = 0;
  std::size_t refit_every = 10;
  std::size_t acquisition_starts = 64;
  /// Called after every evaluation with the 1-based iteration, the point, the value
  /// (nullopt on failure) and the best value so far.
  std::function<void(std::size_t, std::span<const double>, std::optional<double>, double)>
      on_evaluation;
};

/// Refits (or refactorizes) the surrogate on the current history following the refit
/// cadence.
void update_surrogate(BOState& state);

/// Approximate argmax of EI over the domain: compass search from Sobol seeds plus the
/// incumbent. Throws StateError without a trained surrogate.
std::vector<double> propose(const BOState& state);

/// Sobol initialization followed by EI proposals until `budget` evaluator calls were made.
/// `resume` holds observations from an earlier run; they count against the budget.
BOState optimize(const Evaluator& evaluator, const BoxDomain& domain, const Options& options,
                 std::vector<Observation> resume = {});

}  // namespace cbgopt::bo
