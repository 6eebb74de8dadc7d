#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "cbgopt/design.hpp"

namespace cbgopt::device {

struct Layer {
  double thickness = 0.0;  // nm
  double eps_r = 1.0;
};
using LayerStack = std::vector<Layer>;

/// Relative permittivities of the device materials.
struct Permittivities {
  double slab = 12.9;  // GaAs
  double sio2 = 3.9;
  double hsq = 3.0;

  static Permittivities gaas() { return {12.9, 3.9, 3.0}; }
  static Permittivities inp() { return {12.5, 3.9, 3.0}; }
};

/// Field (kV/cm) in layer `probe_layer` of an infinitely extended series capacitor:
/// U / (eps_probe * sum_j t_j / eps_j).
double analytic_stack_field(const LayerStack& layers, std::size_t probe_layer, double volts);

/// SiO2, slab and HSQ cover between the contacts; the slab is layer 1.
LayerStack planar_stack(const DesignPoint& p, const Permittivities& eps);

struct GridSpec {
  double h_fine = 5.0;      // nm, radial spacing inside the grating and vertical spacing
  double h_coarse = 100.0;  // nm, radial spacing far outside the grating
  double growth = 1.15;     // radial spacing ratio between the two regions
  int rings = 8;            // etched gaps around the central disc
  bool planar = false;      // replace the grating by a full slab
  double grading = 1.0;     // >1 clusters nodes toward material interfaces
};

/// Potential and field on the (r, z) grid. Row j is height z[j], column i radius r[i].
struct FieldSolution {
  std::vector<double> r;  // nm
  std::vector<double> z;  // nm, gold plane at 0, top contact at z.back()
  Eigen::MatrixXd phi;    // V
  Eigen::MatrixXd e_r;    // kV/cm
  Eigen::MatrixXd e_z;    // kV/cm
  Eigen::MatrixXd eps;    // per cell, (z.size()-1) x (r.size()-1)
  double volts = 0.0;
  double probe_r = 0.0;
  double probe_z = 0.0;
  double e_abs_probe = 0.0;  // kV/cm
  double relative_residual = 0.0;

  /// Discrete displacement flux through the horizontal cut between rows j and j+1
  /// (arbitrary units, consistent across cuts).
  double horizontal_flux(std::size_t j) const;
};

/// Finite-volume solve of div(eps grad phi) = 0 in axisymmetric (r, z) coordinates with
/// phi = 0 on the gold plane, phi = volts on the top contact, no flux through r = 0 and
/// the outer radius. Grid lines follow every material interface. Throws NumericalError
/// when the relative residual exceeds 1e-10.
FieldSolution fd_axisym_solve(const DesignPoint& p, const Permittivities& eps,
                              double radius_um, double volts, const GridSpec& grid = {});

struct BiasPoint {
  double volts = 0.0;
  double e_abs = 0.0;  // kV/cm
};

struct BiasSweep {
  std::vector<BiasPoint> points;
  double field_per_volt = 0.0;  // kV/cm per V
  double volts_at_100 = 0.0;    // bias reaching 100 kV/cm
};

/// One unit-bias solve scaled to every voltage.
BiasSweep bias_sweep(const DesignPoint& p, const Permittivities& eps, double radius_um,
                     const std::vector<double>& volts, const GridSpec& grid = {});

/// Field strength at the probe of a solved unit-bias field, scaled.
BiasSweep bias_sweep(const FieldSolution& unit_solution, const std::vector<double>& volts);

}  // namespace cbgopt::device
