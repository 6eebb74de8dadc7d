#include "cbgopt/objective.hpp"

#include <cmath>

#include <fmt/format.h>

#include "cbgopt/errors.hpp"

namespace cbgopt::objective {

void ObjectiveSpec::validate() const {
  if (!(sigmoid_a < 0.0)) {
    throw InvalidArgument(fmt::format("sigmoid_a must be negative, got {}", sigmoid_a));
  }
  if (!(sigmoid(20.0, *this) > 0.8) || !(sigmoid(1.0, *this) < 0.2)) {
    throw InvalidArgument(fmt::format(
        "sigmoid calibration needs S(20) > 0.8 and S(1) < 0.2, got S(20)={} S(1)={}",
        sigmoid(20.0, *this), sigmoid(1.0, *this)));
  }
  if (!(w1 >= 0.0 && w2 >= 0.0 && w3 >= 0.0)) {
    throw InvalidArgument(fmt::format("weights must be non-negative, got ({}, {}, {})", w1, w2, w3));
  }
  if (!(parabola_c > 0.0)) throw InvalidArgument("parabola_c must be positive");
  if (!(mode_window > 0.0)) throw InvalidArgument("mode_window must be positive");
  if (!std::isfinite(lambda_des)) throw InvalidArgument("lambda_des must be finite");
}

double sigmoid(double x, const ObjectiveSpec& spec) {
  return 1.0 / (1.0 + std::exp(spec.sigmoid_a * (x - spec.sigmoid_b)));
}

double f1(double eta_smf) {
  if (!(eta_smf >= 0.0 && eta_smf <= 1.0)) {
    throw DomainError(fmt::format("fiber efficiency {} outside [0, 1]", eta_smf));
  }
  return 1.0 - eta_smf;
}

double f2(double fp, const ObjectiveSpec& spec) { return 1.0 - sigmoid(fp, spec); }

double f3(double lambda, const ObjectiveSpec& spec) {
  const double d = lambda - spec.lambda_des;
  return spec.parabola_c * d * d;
}

double target(const ModeResult& mode, const ObjectiveSpec& spec) {
  return spec.w1 * f1(mode.eta_smf) + spec.w2 * f2(mode.fp, spec) +
         spec.w3 * f3(mode.lambda_c, spec);
}

std::pair<ModeResult, double> best_mode(std::span<const ModeResult> modes,
                                        const ObjectiveSpec& spec) {
  if (modes.empty()) throw InvalidArgument("best_mode needs at least one mode");
  bool any_in_window = false;
  for (const auto& m : modes) {
    if (std::abs(m.lambda_c - spec.lambda_des) <= spec.mode_window) any_in_window = true;
  }
  const ModeResult* best = nullptr;
  double best_value = 0.0;
  for (const auto& m : modes) {
    if (any_in_window && std::abs(m.lambda_c - spec.lambda_des) > spec.mode_window) continue;
    const double v = target(m, spec);
    if (best == nullptr || v < best_value ||
        (v == best_value &&
         std::abs(m.lambda_c - spec.lambda_des) < std::abs(best->lambda_c - spec.lambda_des))) {
      best = &m;
      best_value = v;
    }
  }
  return {*best, best_value};
}

}  // namespace cbgopt::objective
