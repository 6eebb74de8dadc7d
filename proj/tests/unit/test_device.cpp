#include <cmath>
#include <random>

#include "doctest.h"

#include "cbgopt/capacitor.hpp"
#include "cbgopt/errors.hpp"
#include "cbgopt/toy_cavity.hpp"

using namespace cbgopt;
using namespace cbgopt::device;

TEST_CASE("toy cavity reference point and linear resonance shift") {
  const ToyConfig c;
  DesignPoint p = designs::nir_i();
  p.t_ito = 50;
  CHECK(toy_cavity(p, c).lambda_c == c.lambda0);
  for (double delta : {-7.0, 0.5, 3.0}) {
    DesignPoint q = p;
    q.R += delta;
    CHECK(toy_cavity(q, c).lambda_c - c.lambda0 ==
          doctest::Approx(0.9 * c.lambda0 * delta / c.R0).epsilon(1e-10));
  }
}

TEST_CASE("toy cavity bounds over random valid points") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100000; ++i) {
    DesignPoint p{100 + 300 * u(rng), 20 + 150 * u(rng), 0, 100 + 300 * u(rng),
                  20 + 400 * u(rng), 0, 1 + 100 * u(rng)};
    p.P = p.W + 50 + 500 * u(rng);
    p.t_hsq = p.t_cbg + 1000 * u(rng);
    const auto o = toy_cavity(p);
    CHECK((o.eta_smf >= 0.0 && o.eta_smf <= 1.0));
    CHECK(o.fp >= 1.0);
    CHECK(o.eta_smf <= o.eta_na08);
    CHECK(o.eta_na08 <= 1.0);
  }
}

TEST_CASE("toy cavity is smooth") {
  const DesignPoint p = designs::nir_ii();
  auto a = p.to_array();
  for (std::size_t d = 0; d < 7; ++d) {
    auto plus = a, minus = a;
    plus[d] += 1e-4;
    minus[d] -= 1e-4;
    const double g1 = (toy_cavity(DesignPoint::from_span(plus)).eta_smf -
                       toy_cavity(DesignPoint::from_span(minus)).eta_smf) / 2e-4;
    auto plus2 = a, minus2 = a;
    plus2[d] += 2e-4;
    minus2[d] -= 2e-4;
    const double g2 = (toy_cavity(DesignPoint::from_span(plus2)).eta_smf -
                       toy_cavity(DesignPoint::from_span(minus2)).eta_smf) / 4e-4;
    CHECK(g1 == doctest::Approx(g2).epsilon(1e-5).scale(1e-6));
  }
}

TEST_CASE("two-peak oracle") {
  const TwoPeakConfig c;
  CHECK(two_peak_eta(c.center.R + 12.0, c) > two_peak_eta(c.center.R - 12.0, c));
  DesignPoint p = c.center;
  const auto o = two_peak(p, c);
  CHECK(o.lambda_c == c.lambda_c);
  CHECK(o.fp == c.fp);
  for (double r = 100; r < 300; r += 0.5) {
    const double e = two_peak_eta(r, c);
    CHECK((e > 0.0 && e < 1.0));
  }
}

TEST_CASE("analytic stack field") {
  CHECK(analytic_stack_field({{1000.0, 1.0}}, 0, 1.0) == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(analytic_stack_field({{300.0, 4.0}, {700.0, 4.0}}, 1, 5.0) ==
        doctest::Approx(5.0 / 1000.0 * 1e4).epsilon(1e-14));
  const auto stack = planar_stack(designs::nir_i(), Permittivities::gaas());
  const double sum = 136 / 3.9 + 261 / 12.9 + 441 / 3.0;
  CHECK(analytic_stack_field(stack, 1, 10.0) == doctest::Approx(10.0 / (12.9 * sum) * 1e4).epsilon(1e-14));
  CHECK(analytic_stack_field(stack, 1, 10.0) == doctest::Approx(38.36).epsilon(1e-3));
  // Splitting a layer changes nothing.
  const LayerStack split{{136, 3.9}, {100, 12.9}, {161, 12.9}, {441, 3.0}};
  CHECK(analytic_stack_field(split, 1, 10.0) == doctest::Approx(analytic_stack_field(stack, 1, 10.0)).epsilon(1e-14));
  CHECK(analytic_stack_field(stack, 1, 20.0) == doctest::Approx(2 * analytic_stack_field(stack, 1, 10.0)).epsilon(1e-15));
  CHECK_THROWS_AS(analytic_stack_field({}, 0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(analytic_stack_field(stack, 3, 1.0), InvalidArgument);
}

TEST_CASE("field solve in a homogeneous capacitor") {
  const DesignPoint p = designs::nir_i();
  const Permittivities same{3.0, 3.0, 3.0};
  GridSpec g;
  g.h_fine = 10.0;
  g.rings = 2;
  const auto s = fd_axisym_solve(p, same, 2.0, 7.0, g);
  const double e = 7.0 / (p.t_sio2 + p.t_hsq) * 1e4;
  CHECK(s.e_abs_probe == doctest::Approx(e).epsilon(1e-10));
  for (Eigen::Index j = 0; j < s.phi.rows(); ++j) {
    for (Eigen::Index i = 0; i < s.phi.cols(); i += 17) {
      CHECK(s.phi(j, i) == doctest::Approx(7.0 * s.z[j] / s.z.back()).epsilon(1e-10).scale(7.0));
      CHECK(s.e_z(j, i) == doctest::Approx(-e).epsilon(1e-9));
    }
  }
}

TEST_CASE("planar stack matches the series capacitor") {
  const DesignPoint p = designs::nir_i();
  GridSpec g;
  g.planar = true;
  const auto s = fd_axisym_solve(p, Permittivities::gaas(), 7.0, 10.0, g);
  const double analytic = analytic_stack_field(planar_stack(p, Permittivities::gaas()), 1, 10.0);
  CHECK(std::abs(s.e_abs_probe / analytic - 1.0) < 0.01);
  const auto sweep = bias_sweep(s, {10.0});
  CHECK(std::abs(sweep.volts_at_100 / (100.0 / analytic * 10.0) - 1.0) < 0.01);
}

TEST_CASE("grating solve: contacts, maximum principle, flux, linearity, elevated field") {
  const DesignPoint p = designs::nir_i();
  const auto eps = Permittivities::gaas();
  const auto s = fd_axisym_solve(p, eps, 7.0, 1.0);
  CHECK(s.relative_residual < 1e-10);
  CHECK(s.phi.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.phi.row(s.phi.rows() - 1).array() == 1.0).all());
  CHECK(s.phi.minCoeff() >= 0.0);
  CHECK(s.phi.maxCoeff() <= 1.0);
  const double contact = s.horizontal_flux(0);
  for (std::size_t j = 0; j + 1 < s.z.size(); ++j) {
    CHECK(std::abs(s.horizontal_flux(j) / contact - 1.0) < 1e-3);
  }
  const auto s2 = fd_axisym_solve(p, eps, 7.0, 2.0);
  CHECK(s2.e_abs_probe == doctest::Approx(2.0 * s.e_abs_probe).epsilon(1e-12));
  const auto sweep = bias_sweep(s, {1.0, 2.0, 5.0, 10.0});
  for (const auto& b : sweep.points) {
    CHECK(b.e_abs == doctest::Approx(b.volts * sweep.field_per_volt).epsilon(1e-15));
  }
  CHECK(sweep.points[1].e_abs == doctest::Approx(2.0 * sweep.points[0].e_abs).epsilon(1e-12));

  const double planar = analytic_stack_field(planar_stack(p, eps), 1, 1.0);
  CHECK(s.e_abs_probe > planar);
  CHECK(std::abs(sweep.volts_at_100 / 19.9 - 1.0) < 0.2);
}

TEST_CASE("graded grids converge at least 3x per halving") {
  const DesignPoint p = designs::nir_i();
  GridSpec g;
  g.rings = 2;
  g.grading = 2.0;
  std::vector<double> e;
  for (double h : {28.0, 14.0, 7.0, 3.5}) {
    g.h_fine = h;
    e.push_back(fd_axisym_solve(p, Permittivities::gaas(), 2.0, 1.0, g).e_abs_probe);
  }
  const double extrapolated = e[3] + (e[3] - e[2]) / 3.0;
  const double err28 = std::abs(e[0] - extrapolated);
  const double err14 = std::abs(e[1] - extrapolated);
  const double err7 = std::abs(e[2] - extrapolated);
  CHECK(err28 / err14 >= 3.0);
  CHECK(err14 / err7 >= 3.0);
}

TEST_CASE("field solve argument checks") {
  const DesignPoint p = designs::nir_i();
  GridSpec g;
  g.h_fine = 40.0;  // > W/4
  CHECK_THROWS_AS(fd_axisym_solve(p, Permittivities::gaas(), 7.0, 1.0, g), InvalidArgument);
  CHECK_THROWS_AS(fd_axisym_solve(p, Permittivities::gaas(), 0.0, 1.0), InvalidArgument);
}
