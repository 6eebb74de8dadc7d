#pragma once

#include "cbgopt/design.hpp"

namespace cbgopt::device {

/// Constants of the synthetic cavity. All of them are invented: the model only mimics
/// the qualitative structure of a CBG (a resonance that moves with the geometry, a
/// Lorentzian Purcell peak, efficiency bounded by mode matching and contact absorption).
struct ToyConfig {
  // Reference geometry where lambda_c == lambda0 (NIR I).
  double lambda0 = 930.3;
  double R0 = 201.0;
  double P0 = 318.0;
  double t0 = 261.0;
  double W0 = 114.0;
  // Linear resonance coefficients.
  double k_R = 0.9;
  double k_P = 0.5;
  double k_t = 0.35;
  double k_W = -0.1;
  // Bragg-reflector center; the detuning lambda_c - lambda_bragg controls both peaks.
  double kb_R = 0.7;
  double kb_P = 0.9;
  double kb_t = 0.3;
  double purcell_halfwidth = 10.0;     // nm
  double efficiency_halfwidth = 30.0;  // nm
  double fp_peak = 25.0;
  double eta_max = 0.9;
  // Gaussian factors for the SiO2 spacer and the HSQ cover above the slab.
  double sio2_opt = 136.0, sio2_width = 60.0;
  double cover_opt = 441.0, cover_width = 150.0;
  // Mode-size mismatch with the fiber.
  double R_width = 40.0, W_width = 50.0;
  // Absorption length of the top contact.
  double ito_absorption_length = 800.0;
};

struct ToyOutput {
  double lambda_c = 0.0;
  double fp = 0.0;
  double eta_smf = 0.0;
  double eta_na08 = 0.0;
};

/// Deterministic, smooth and cheap stand-in for the photonic FEM model.
ToyOutput toy_cavity(const DesignPoint& p, const ToyConfig& config = {});

/// Synthetic oracle with two efficiency peaks along R: a narrow high one and a broad
/// lower one. lambda_c and fp are constants so the target only depends on eta.
struct TwoPeakConfig {
  DesignPoint center;  // defaults to NIR I
  double narrow_offset = 12.0, narrow_width = 4.0, narrow_height = 0.9;
  double broad_offset = -12.0, broad_width = 12.0, broad_height = 0.6;
  double lambda_c = 930.0;
  double fp = 20.0;
  double floor = 0.01;

  TwoPeakConfig();
};

ToyOutput two_peak(const DesignPoint& p, const TwoPeakConfig& config = {});
/// eta as a function of R alone.
double two_peak_eta(double R, const TwoPeakConfig& config);

}  // namespace cbgopt::device
