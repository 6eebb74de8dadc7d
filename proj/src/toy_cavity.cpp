#include "cbgopt/toy_cavity.hpp"

#include <algorithm>
#include <cmath>

namespace cbgopt::device {

namespace {

double lorentzian(double d, double half_width) {
  const double x = d / half_width;
  return 1.0 / (1.0 + x * x);
}

double gaussian(double x, double center, double width) {
  const double u = (x - center) / width;
  return std::exp(-0.5 * u * u);
}

}  // namespace

ToyOutput toy_cavity(const DesignPoint& p, const ToyConfig& c) {
  const double dR = (p.R - c.R0) / c.R0;
  const double dP = (p.P - c.P0) / c.P0;
  const double dt = (p.t_cbg - c.t0) / c.t0;
  const double dW = (p.W - c.W0) / c.W0;
  ToyOutput out;
  out.lambda_c = c.lambda0 * (1.0 + c.k_R * dR + c.k_P * dP + c.k_t * dt + c.k_W * dW);
  const double lambda_bragg = c.lambda0 * (1.0 + c.kb_R * dR + c.kb_P * dP + c.kb_t * dt);
  const double detuning = out.lambda_c - lambda_bragg;

  const double g_sio2 = gaussian(p.t_sio2, c.sio2_opt, c.sio2_width);
  const double g_cover = gaussian(p.t_hsq - p.t_cbg, c.cover_opt, c.cover_width);
  out.fp = 1.0 + c.fp_peak * lorentzian(detuning, c.purcell_halfwidth) * g_sio2 * g_cover;

  const double mismatch = gaussian(p.R, c.R0, c.R_width) * gaussian(p.W, c.W0, c.W_width);
  const double absorption = std::exp(-p.t_ito / c.ito_absorption_length);
  out.eta_smf = c.eta_max * mismatch * absorption * lorentzian(detuning, c.efficiency_halfwidth) *
                (0.6 + 0.4 * g_sio2);
  out.eta_na08 = std::min(1.0, 1.08 * out.eta_smf);
  return out;
}

TwoPeakConfig::TwoPeakConfig() : center(designs::nir_i()) {}

double two_peak_eta(double R, const TwoPeakConfig& c) {
  const double dn = (R - c.center.R - c.narrow_offset) / c.narrow_width;
  const double db = (R - c.center.R - c.broad_offset) / c.broad_width;
  return c.floor + c.narrow_height * std::exp(-0.5 * dn * dn) +
         c.broad_height * std::exp(-0.5 * db * db);
}

ToyOutput two_peak(const DesignPoint& p, const TwoPeakConfig& c) {
  ToyOutput out;
  out.lambda_c = c.lambda_c;
  out.fp = c.fp;
  out.eta_smf = two_peak_eta(p.R, c);
  out.eta_na08 = std::min(1.0, 1.08 * out.eta_smf);
  return out;
}

}  // namespace cbgopt::device
