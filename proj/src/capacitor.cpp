#include "cbgopt/capacitor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <fmt/format.h>

#include "cbgopt/errors.hpp"

namespace cbgopt::device {

namespace {

// 1 V/nm = 1e4 kV/cm
constexpr double kVoltPerNmToKvPerCm = 1e4;

// Sorted breakpoints, each interval split into steps no longer than h. With grading
// beta > 1 the steps shrink toward both ends of every interval following
// s^beta / (s^beta + (1-s)^beta), which resolves the field singularities at material corners.
std::vector<double> subdivide(std::vector<double> breaks, double h, double beta = 1.0) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               breaks.end());
  auto g = [beta](double t) {
    const double a = std::pow(t, beta), b = std::pow(1.0 - t, beta);
    return a / (a + b);
  };
  // Largest slope of g, reached at the midpoint.
  const double slope = beta;
  std::vector<double> out{breaks.front()};
  for (std::size_t k = 1; k < breaks.size(); ++k) {
    const double len = breaks[k] - breaks[k - 1];
    const int n = std::max(1, static_cast<int>(std::ceil(len * slope / h - 1e-9)));
    for (int s = 1; s <= n; ++s) out.push_back(breaks[k - 1] + len * g(static_cast<double>(s) / n));
    out.back() = breaks[k];
  }
  return out;
}

}  // namespace

double analytic_stack_field(const LayerStack& layers, std::size_t probe_layer, double volts) {
  if (layers.empty()) throw InvalidArgument("layer stack is empty");
  if (probe_layer >= layers.size()) {
    throw InvalidArgument(fmt::format("probe layer {} outside a stack of {} layers", probe_layer,
                                      layers.size()));
  }
  double sum = 0.0;
  for (const auto& l : layers) {
    if (!(l.thickness > 0.0)) throw InvalidArgument("layer thickness must be positive");
    if (!(l.eps_r >= 1.0)) throw InvalidArgument("relative permittivity must be >= 1");
    sum += l.thickness / l.eps_r;
  }
  return volts / (layers[probe_layer].eps_r * sum) * kVoltPerNmToKvPerCm;
}

LayerStack planar_stack(const DesignPoint& p, const Permittivities& eps) {
  return {{p.t_sio2, eps.sio2}, {p.t_cbg, eps.slab}, {p.t_hsq - p.t_cbg, eps.hsq}};
}

double FieldSolution::horizontal_flux(std::size_t j) const {
  if (j + 1 >= z.size()) throw InvalidArgument("flux cut outside the grid");
  const std::size_t nr = r.size();
  const double hz = z[j + 1] - z[j];
  double flux = 0.0;
  for (std::size_t i = 0; i < nr; ++i) {
    const double r_lo = i == 0 ? 0.0 : 0.5 * (r[i - 1] + r[i]);
    const double r_hi = i + 1 == nr ? r[i] : 0.5 * (r[i] + r[i + 1]);
    double coeff = 0.0;
    if (i > 0) coeff += eps(j, i - 1) * 0.5 * (r[i] * r[i] - r_lo * r_lo);
    if (i + 1 < nr) coeff += eps(j, i) * 0.5 * (r_hi * r_hi - r[i] * r[i]);
    flux += coeff * (phi(j + 1, i) - phi(j, i)) / hz;
  }
  return flux;
}

FieldSolution fd_axisym_solve(const DesignPoint& p, const Permittivities& mat, double radius_um,
                              double volts, const GridSpec& grid) {
  p.validate();
  if (!(radius_um > 0.0)) throw InvalidArgument("capacitor radius must be positive");
  if (!(grid.h_fine > 0.0) || !(grid.h_coarse >= grid.h_fine) || !(grid.growth > 1.0)) {
    throw InvalidArgument("grid spacing must satisfy 0 < h_fine <= h_coarse and growth > 1");
  }
  if (grid.rings < 0) throw InvalidArgument("ring count must be non-negative");
  if (!(grid.grading >= 1.0)) throw InvalidArgument("grid grading must be >= 1");
  if (!grid.planar && grid.h_fine > p.W / 4.0) {
    throw InvalidArgument(fmt::format("grid spacing {} nm exceeds W/4 = {} nm", grid.h_fine,
                                      p.W / 4.0));
  }
  const double r_max = radius_um * 1000.0;
  const double z_slab = p.t_sio2;
  const double z_top_slab = p.t_sio2 + p.t_cbg;
  const double z_top = p.t_sio2 + p.t_hsq;
  const double probe_z = p.t_sio2 + 0.5 * p.t_cbg;

  // Radial breakpoints: every ring edge, fine spacing up to the grating edge, then a
  // geometric ramp to the coarse spacing.
  std::vector<double> r_breaks{0.0};
  double grating_edge = 0.0;
  if (!grid.planar) {
    for (int k = 0; k < grid.rings; ++k) {
      r_breaks.push_back(p.R + k * p.P);
      r_breaks.push_back(p.R + k * p.P + p.W);
    }
    grating_edge = p.R + grid.rings * p.P;
    r_breaks.push_back(grating_edge);
  }
  const double fine_end = std::min(r_max, std::max(grating_edge, p.R) + 4.0 * p.t_hsq);
  r_breaks.push_back(fine_end);
  std::vector<double> r = subdivide(r_breaks, grid.h_fine, grid.grading);
  while (r.back() > r_max) r.pop_back();
  {
    double h = grid.h_fine;
    while (r.back() < r_max) {
      h = std::min(h * grid.growth, grid.h_coarse);
      const double next = r.back() + h;
      if (next >= r_max - 0.5 * h) {
        r.push_back(r_max);
      } else {
        r.push_back(next);
      }
    }
  }
  const std::vector<double> z =
      subdivide({0.0, z_slab, probe_z, z_top_slab, z_top}, grid.h_fine, grid.grading);

  const std::size_t nr = r.size(), nz = z.size();
  FieldSolution sol;
  sol.r = r;
  sol.z = z;
  sol.volts = volts;
  sol.probe_r = 0.0;
  sol.probe_z = probe_z;

  // Per-cell permittivity from the cell center.
  sol.eps.resize(static_cast<Eigen::Index>(nz - 1), static_cast<Eigen::Index>(nr - 1));
  for (std::size_t j = 0; j + 1 < nz; ++j) {
    const double zc = 0.5 * (z[j] + z[j + 1]);
    for (std::size_t i = 0; i + 1 < nr; ++i) {
      const double rc = 0.5 * (r[i] + r[i + 1]);
      double e;
      if (zc < z_slab) {
        e = mat.sio2;
      } else if (zc > z_top_slab) {
        e = mat.hsq;
      } else {
        e = mat.slab;
        if (!grid.planar && rc > p.R && rc < grating_edge) {
          const double offset = std::fmod(rc - p.R, p.P);
          if (offset < p.W) e = mat.hsq;
        }
      }
      sol.eps(j, i) = e;
    }
  }

  // Unknowns: rows 1 .. nz-2; rows 0 and nz-1 are the contacts.
  const std::size_t rows = nz - 2;
  auto index = [&](std::size_t j, std::size_t i) {
    return static_cast<Eigen::Index>((j - 1) * nr + i);
  };
  const auto n_unknowns = static_cast<Eigen::Index>(rows * nr);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n_unknowns) * 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknowns);
  auto r_face = [&](std::size_t i, int side) {  // side -1: left face, +1: right face
    if (side < 0) return i == 0 ? 0.0 : 0.5 * (r[i - 1] + r[i]);
    return i + 1 == nr ? r[i] : 0.5 * (r[i] + r[i + 1]);
  };
  auto eps_at = [&](std::size_t j, std::size_t i) { return sol.eps(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)); };

  std::vector<double> diag(static_cast<std::size_t>(n_unknowns), 0.0);
  auto couple = [&](std::size_t j, std::size_t i, std::size_t j2, std::size_t i2, double c) {
    const Eigen::Index a = index(j, i);
    diag[static_cast<std::size_t>(a)] += c;
    if (j2 == 0) return;  // phi = 0
    if (j2 == nz - 1) {
      rhs[a] += c * volts;
      return;
    }
    triplets.emplace_back(a, index(j2, i2), -c);
  };

  for (std::size_t j = 1; j + 1 < nz; ++j) {
    const double z_lo = 0.5 * (z[j - 1] + z[j]);
    const double z_hi = 0.5 * (z[j] + z[j + 1]);
    for (std::size_t i = 0; i < nr; ++i) {
      // Radial faces.
      if (i + 1 < nr) {
        const double area = r_face(i, +1) * (eps_at(j - 1, i) * (z[j] - z_lo) +
                                             eps_at(j, i) * (z_hi - z[j]));
        couple(j, i, j, i + 1, area / (r[i + 1] - r[i]));
      }
      if (i > 0) {
        const double area = r_face(i, -1) * (eps_at(j - 1, i - 1) * (z[j] - z_lo) +
                                             eps_at(j, i - 1) * (z_hi - z[j]));
        couple(j, i, j, i - 1, area / (r[i] - r[i - 1]));
      }
      // Axial faces.
      const double rl = r_face(i, -1), rh = r_face(i, +1);
      for (int dir : {-1, +1}) {
        const std::size_t jc = dir < 0 ? j - 1 : j;  // cell row crossed by the face
        double area = 0.0;
        if (i > 0) area += eps_at(jc, i - 1) * 0.5 * (r[i] * r[i] - rl * rl);
        if (i + 1 < nr) area += eps_at(jc, i) * 0.5 * (rh * rh - r[i] * r[i]);
        const std::size_t j2 = dir < 0 ? j - 1 : j + 1;
        couple(j, i, j2, i, area / std::abs(z[j2] - z[j]));
      }
    }
  }
  for (Eigen::Index a = 0; a < n_unknowns; ++a) triplets.emplace_back(a, a, diag[static_cast<std::size_t>(a)]);
  Eigen::SparseMatrix<double> A(n_unknowns, n_unknowns);
  A.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success) throw NumericalError("field solve: factorization failed");
  Eigen::VectorXd x = solver.solve(rhs);
  sol.relative_residual = (A * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  if (!(sol.relative_residual <= 1e-10)) {
    throw NumericalError(fmt::format("field solve did not converge: relative residual {:.3e}",
                                     sol.relative_residual));
  }

  sol.phi.resize(static_cast<Eigen::Index>(nz), static_cast<Eigen::Index>(nr));
  for (std::size_t i = 0; i < nr; ++i) {
    sol.phi(0, static_cast<Eigen::Index>(i)) = 0.0;
    sol.phi(static_cast<Eigen::Index>(nz - 1), static_cast<Eigen::Index>(i)) = volts;
  }
  for (std::size_t j = 1; j + 1 < nz; ++j) {
    for (std::size_t i = 0; i < nr; ++i) {
      sol.phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = x[index(j, i)];
    }
  }

  // Nodal field from (one-sided at the edges) differences weighted for uneven spacing.
  auto derivative = [](double fm, double f0, double fp, double hm, double hp) {
    return (hm * hm * (fp - f0) + hp * hp * (f0 - fm)) / (hm * hp * (hm + hp));
  };
  sol.e_r.resize(static_cast<Eigen::Index>(nz), static_cast<Eigen::Index>(nr));
  sol.e_z.resize(static_cast<Eigen::Index>(nz), static_cast<Eigen::Index>(nr));
  const auto& P = sol.phi;
  for (std::size_t j = 0; j < nz; ++j) {
    for (std::size_t i = 0; i < nr; ++i) {
      const auto J = static_cast<Eigen::Index>(j), I = static_cast<Eigen::Index>(i);
      double dr;
      if (i == 0 || i + 1 == nr) {
        dr = 0.0;  // symmetry axis and insulated outer wall
      } else {
        dr = derivative(P(J, I - 1), P(J, I), P(J, I + 1), r[i] - r[i - 1], r[i + 1] - r[i]);
      }
      double dz;
      if (j == 0) {
        dz = (P(J + 1, I) - P(J, I)) / (z[1] - z[0]);
      } else if (j + 1 == nz) {
        dz = (P(J, I) - P(J - 1, I)) / (z[j] - z[j - 1]);
      } else {
        dz = derivative(P(J - 1, I), P(J, I), P(J + 1, I), z[j] - z[j - 1], z[j + 1] - z[j]);
      }
      sol.e_r(J, I) = -dr * kVoltPerNmToKvPerCm;
      sol.e_z(J, I) = -dz * kVoltPerNmToKvPerCm;
    }
  }
  const auto jp = static_cast<Eigen::Index>(
      std::lower_bound(z.begin(), z.end(), probe_z - 1e-9) - z.begin());
  sol.e_abs_probe = std::hypot(sol.e_r(jp, 0), sol.e_z(jp, 0));
  return sol;
}

BiasSweep bias_sweep(const FieldSolution& unit, const std::vector<double>& volts) {
  if (unit.volts == 0.0) throw InvalidArgument("bias sweep needs a solution at non-zero bias");
  BiasSweep out;
  out.field_per_volt = unit.e_abs_probe / std::abs(unit.volts);
  for (double v : volts) out.points.push_back({v, out.field_per_volt * std::abs(v)});
  out.volts_at_100 = 100.0 / out.field_per_volt;
  return out;
}

BiasSweep bias_sweep(const DesignPoint& p, const Permittivities& eps, double radius_um,
                     const std::vector<double>& volts, const GridSpec& grid) {
  return bias_sweep(fd_axisym_solve(p, eps, radius_um, 1.0, grid), volts);
}

}  // namespace cbgopt::device
