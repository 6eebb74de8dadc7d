#pragma once

#include <span>
#include <utility>

namespace cbgopt::objective {

/// Weights and calibration of the scalar target. Minimizing it favors high fiber
/// coupling, a Purcell factor around fp_des and operation near lambda_des.
struct ObjectiveSpec {
  double lambda_des = 930.0;  // nm
  double fp_des = 20.0;
  double w1 = 2.0;
  double w2 = 1.0;
  double w3 = 1.0;
  double sigmoid_a = -2.1972245773362196 / 9.5;  // -ln(9)/9.5, so S(1)=0.1 and S(20)=0.9
  double sigmoid_b = 10.5;
  double parabola_c = 1e-3;  // nm^-2, f3(lambda_des +- 10 nm) = 0.1
  double mode_window = 50.0;  // nm

  /// Throws InvalidArgument unless a < 0, S(20) > 0.8, S(1) < 0.2, weights >= 0 and c > 0.
  void validate() const;
};

/// One eigenmode of the cavity, evaluated at its resonance.
struct ModeResult {
  double lambda_c = 0.0;  // nm
  double fp = 0.0;
  double eta_smf = 0.0;
  double eta_na08 = 0.0;
};

double sigmoid(double x, const ObjectiveSpec& spec);
/// 1 - eta. Throws DomainError outside [0, 1].
double f1(double eta_smf);
/// 1 - S(fp)
double f2(double fp, const ObjectiveSpec& spec);
/// c (lambda - lambda_des)^2
double f3(double lambda, const ObjectiveSpec& spec);
/// w1 f1 + w2 f2 + w3 f3
double target(const ModeResult& mode, const ObjectiveSpec& spec);

/// Mode with the smallest target among those within mode_window of lambda_des (all modes
/// when none is). Ties go to the smaller detuning, then to the earlier mode.
/// Throws InvalidArgument on an empty list.
std::pair<ModeResult, double> best_mode(std::span<const ModeResult> modes,
                                        const ObjectiveSpec& spec);

}  // namespace cbgopt::objective
