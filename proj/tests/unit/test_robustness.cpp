#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cbgopt/errors.hpp"
#include "cbgopt/robustness.hpp"
#include "cbgopt/toy_cavity.hpp"

using namespace cbgopt;
using robust::Quantity;

namespace {

// Phi^-1(0.84)
constexpr double kZ84 = 0.9944578832097531;

const std::array<double, 7> kCoeffs = {0.9, -0.1, 0.5, 0.35, 0.05, -0.02, 0.01};

robust::OracleOutput linear_oracle(const DesignPoint& p) {
  const auto a = p.to_array();
  double lambda = 0.0;
  for (std::size_t i = 0; i < 7; ++i) lambda += kCoeffs[i] * a[i];
  return {lambda, 15.0 + 0.01 * (p.R - 201.0), 0.5 + 0.001 * (p.W - 114.0)};
}

const robust::SurrogateBundle& linear_bundle() {
  static const robust::SurrogateBundle b = robust::train_bundle(
      linear_oracle, designs::nir_i(), ToleranceSpec::fabrication_default(), 256, 0);
  return b;
}

robust::SurrogateBundle two_peak_bundle(const std::vector<double>& scale) {
  const device::TwoPeakConfig cfg;
  robust::TrainOptions opt;
  opt.scale = scale;
  return robust::train_bundle(
      [&](const DesignPoint& p) {
        const auto o = device::two_peak(p, cfg);
        return robust::OracleOutput{o.lambda_c, o.fp, o.eta_smf};
      },
      cfg.center, ToleranceSpec::fabrication_default(), 256, 0, opt);
}

// Median of eta(center_R + offset + sigma_R Z), Z from an independent generator.
double smoothed_eta(double offset, double sigma_r) {
  static const std::vector<double> z = [] {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal;
    std::vector<double> v(20001);
    for (auto& x : v) x = normal(rng);
    return v;
  }();
  const device::TwoPeakConfig cfg;
  std::vector<double> eta(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    eta[i] = device::two_peak_eta(cfg.center.R + offset + sigma_r * z[i], cfg);
  }
  std::nth_element(eta.begin(), eta.begin() + 10000, eta.end());
  return eta[10000];
}

// Grid argmax of smoothed_eta over [-half_range, half_range].
std::pair<double, double> smoothed_argmax(double sigma_r, double half_range) {
  double best = -1.0, arg = 0.0;
  for (double off = -half_range; off <= half_range; off += 0.05) {
    const double v = smoothed_eta(off, sigma_r);
    if (v > best) {
      best = v;
      arg = off;
    }
  }
  return {arg, best};
}

}  // namespace

TEST_CASE("percentile uses linear interpolation between order statistics") {
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  CHECK(robust::percentile_sorted(v, 50.0) == doctest::Approx(2.5));
  CHECK(robust::percentile_sorted(v, 16.0) == doctest::Approx(1.48));
  CHECK(robust::percentile_sorted(v, 0.0) == 1.0);
  CHECK(robust::percentile_sorted(v, 100.0) == 4.0);
  CHECK(robust::percentile_sorted({5.0}, 84.0) == 5.0);
  CHECK_THROWS_AS(robust::percentile_sorted({}, 50.0), InvalidArgument);
  CHECK_THROWS_AS(robust::percentile_sorted(v, 101.0), InvalidArgument);
}

TEST_CASE("triple format") {
  robust::QuantityStats s;
  s.median = 0.59;
  s.sigma_median = 0.05;
  s.sigma_minus = 0.429;
  s.sigma_plus = 0.243;
  CHECK(robust::format_triple(s, 100.0, 1, "%") == "(59.0 ± 5.0)_{-42.9}^{+24.3} %");
  s.median = 930.25;
  s.sigma_median = 0.1;
  s.sigma_minus = 3.0;
  s.sigma_plus = 4.0;
  CHECK(robust::format_triple(s, 1.0, 2) == "(930.25 ± 0.10)_{-3.00}^{+4.00}");
}

TEST_CASE("three sigma box must stay inside the domain") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto center = designs::nir_i();
  const auto domain = sampling::training_domain(center, tol);
  CHECK_NOTHROW(robust::check_inside(domain, center, tol));
  DesignPoint shifted = center;
  shifted.R += 25.0;
  shifted.t_ito -= 15.0;
  try {
    robust::check_inside(domain, shifted, tol);
    FAIL("expected ExtrapolationError");
  } catch (const ExtrapolationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("R ") != std::string::npos);
    CHECK(msg.find("t_ITO") != std::string::npos);
    CHECK(msg.find("t_CBG") == std::string::npos);
  }
}

TEST_CASE("training rejects bad counts and frequent failures") {
  const auto tol = ToleranceSpec::fabrication_default();
  CHECK_THROWS_AS(robust::train_bundle(linear_oracle, designs::nir_i(), tol, 100, 0),
                  InvalidArgument);
  CHECK_THROWS_AS(robust::train_bundle(linear_oracle, designs::nir_i(), tol, 32, 0),
                  InvalidArgument);
  int calls = 0;
  auto flaky = [&](const DesignPoint& p) -> std::optional<robust::OracleOutput> {
    if (++calls % 10 == 0) return std::nullopt;
    return linear_oracle(p);
  };
  CHECK_THROWS_AS(robust::train_bundle(flaky, designs::nir_i(), tol, 64, 0), NumericalError);
}

TEST_CASE("constant oracle propagates without spread") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto bundle = robust::train_bundle(
      [](const DesignPoint&) { return robust::OracleOutput{930.0, 20.0, 0.5}; },
      designs::nir_i(), tol, 64, 0);
  CHECK(bundle.lambda_model.training().count() == 64);
  const auto report = robust::analyze(bundle, designs::nir_i(), tol, 2000, 3);
  const double expected[] = {930.0, 20.0, 0.5};
  for (auto q : robust::kQuantities) {
    const auto& s = report[q];
    CHECK(s.median == doctest::Approx(expected[static_cast<int>(q)]).epsilon(1e-9));
    const double tiny = 1e-9 * expected[static_cast<int>(q)];
    CHECK(std::abs(s.sigma_plus) <= tiny);
    CHECK(std::abs(s.sigma_minus) <= tiny);
    CHECK(s.mc_error <= tiny);
    CHECK(s.predictive_sd < 1e-3);
    CHECK(s.sample_count == 2000);
  }
  const auto p = bundle.predict(Quantity::Efficiency, designs::nir_i());
  CHECK(p.median == doctest::Approx(0.5));
}

TEST_CASE("linear oracle matches normal propagation") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto mean = designs::nir_i();
  const auto& bundle = linear_bundle();
  const auto report = robust::analyze(bundle, mean, tol, 50000, 11);
  const auto& s = report[Quantity::LambdaC];

  const auto m = mean.to_array();
  double mu = 0.0, var = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    mu += kCoeffs[i] * m[i];
    var += kCoeffs[i] * kCoeffs[i] * tol.sigma[i] * tol.sigma[i];
  }
  const double sd = std::sqrt(var);
  CHECK(s.mc_error > 0.0);
  CHECK(std::abs(s.median - mu) <= 3.0 * s.mc_error);
  CHECK(std::abs(s.sigma_plus - kZ84 * sd) <= 3.0 * s.sigma_plus_error);
  CHECK(std::abs(s.sigma_minus - kZ84 * sd) <= 3.0 * s.sigma_minus_error);
  CHECK(s.p16 <= s.median);
  CHECK(s.median <= s.p84);
  CHECK(s.sigma_median >= s.mc_error);
  CHECK(std::is_sorted(s.distribution.begin(), s.distribution.end()));

  // Bootstrap error of the median behaves like 1.2533 sd / sqrt(n).
  CHECK(s.mc_error == doctest::Approx(1.2533 * sd / std::sqrt(50000.0)).epsilon(0.25));

  const auto& eta = report[Quantity::Efficiency];
  CHECK(eta.p16 > 0.0);
  CHECK(eta.p84 < 1.0);
}

TEST_CASE("median error shrinks with the sample count") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto& bundle = linear_bundle();
  const auto small = robust::analyze(bundle, designs::nir_i(), tol, 1000, 5);
  const auto large = robust::analyze(bundle, designs::nir_i(), tol, 16000, 5);
  CHECK(small[Quantity::LambdaC].mc_error / large[Quantity::LambdaC].mc_error >= 3.5);
}

TEST_CASE("analyze is reproducible and order-insensitive") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto& bundle = linear_bundle();
  const auto a = robust::analyze(bundle, designs::nir_i(), tol, 4000, 9);
  robust::AnalyzeOptions threaded;
  threaded.threads = 3;
  const auto b = robust::analyze(bundle, designs::nir_i(), tol, 4000, 9, threaded);
  for (auto q : robust::kQuantities) {
    CHECK(a[q].median == b[q].median);
    CHECK(a[q].mc_error == b[q].mc_error);
    CHECK(a[q].distribution == b[q].distribution);
  }
  const auto c = robust::analyze(bundle, designs::nir_i(), tol, 4000, 10);
  const auto& sa = a[Quantity::LambdaC];
  const auto& sc = c[Quantity::LambdaC];
  CHECK(sa.median != sc.median);
  CHECK(std::abs(sa.median - sc.median) <= 3.0 * std::hypot(sa.mc_error, sc.mc_error));
}

TEST_CASE("verify against the surrogate's own median function") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto& bundle = linear_bundle();
  auto self = [&](const DesignPoint& p) {
    return robust::OracleOutput{bundle.predict(Quantity::LambdaC, p).median,
                                bundle.predict(Quantity::Purcell, p).median,
                                bundle.predict(Quantity::Efficiency, p).median};
  };
  const auto v = robust::verify(bundle, self, designs::nir_i(), tol, 128, 2);
  CHECK(v.evaluated == 128);
  for (auto q : robust::kQuantities) {
    CHECK(v[q].median_discrepancy <= 1e-7 * std::abs(v[q].oracle_median));
    CHECK(v[q].oracle_values.size() == 128);
  }
}

TEST_CASE("band coverage on a calibrated noisy-linear case") {
  // GP on noisy observations of a line with the true noise level: the oracle draws are
  // fresh noisy values, so they land in the predictive band at about the nominal rate.
  const auto tol = ToleranceSpec::fabrication_default();
  const auto mean = designs::nir_i();
  const auto domain = sampling::training_domain(mean, tol);
  const auto x = sampling::sobol(7, 256, domain);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<double> y;
  for (const auto& row : x) y.push_back(linear_oracle(DesignPoint::from_span(row)).lambda_c + noise(rng));
  const auto t = gp::TrainingSet::from_rows(x, y);
  gp::KernelParams kp;
  kp.sigma0_sq = 1e4;
  kp.length_scales = Eigen::VectorXd(7);
  for (int d = 0; d < 7; ++d) kp.length_scales[d] = 20.0 * domain.width(d);
  kp.noise_sq = 0.25;
  kp.mu0 = gp::profiled_mean(t, kp);
  robust::SurrogateBundle b = linear_bundle();
  b.lambda_model = gp::GPModel(t, kp);

  // Predictive band of a new noisy observation: widen by the noise.
  std::normal_distribution<double> noise2(0.0, 0.5);
  auto oracle = [&](const DesignPoint& p) {
    auto o = linear_oracle(p);
    o.lambda_c += noise2(rng);
    return o;
  };
  const auto v = robust::verify(b, oracle, mean, tol, 512, 4);
  // Latent band only; the observation noise dominates, so coverage sits near
  // P(|Z| <= sd_f / sqrt(sd_f^2 + 0.25)) and below the nominal 0.68.
  CHECK(v[Quantity::LambdaC].band_coverage < 0.68);
  const auto v2 = robust::verify(b, linear_oracle, mean, tol, 512, 4);
  CHECK(v2[Quantity::LambdaC].band_coverage >= 0.55);
  CHECK(v2[Quantity::LambdaC].band_coverage <= 1.0);
}

TEST_CASE("mean bounds must keep three sigma inside the bundle") {
  const auto tol = ToleranceSpec::fabrication_default();
  const auto& bundle = linear_bundle();
  const auto box = robust::robust_mean_domain(bundle, tol, {});
  CHECK(box.upper[0] - box.lower[0] == doctest::Approx(40.0));
  CHECK(box.upper[2] - box.lower[2] == doctest::Approx(44.0));
  try {
    robust::robust_mean_domain(bundle, tol, {2, 2, 23, 2, 2, 2, 2});
    FAIL("expected ExtrapolationError");
  } catch (const ExtrapolationError& e) {
    CHECK(std::string(e.what()).find("P ") != std::string::npos);
  }
}

TEST_CASE("robust optimum moves to the broad peak when tolerances grow") {
  const auto base = ToleranceSpec::fabrication_default();
  objective::ObjectiveSpec spec;
  spec.lambda_des = 930.0;

  // Small tolerances: sigma_R = 2, mean range +-20 nm. Training box +-27 nm in R.
  {
    std::vector<double> scale(7, 5.0);
    scale[0] = 2.7;
    scale[2] = 25.0;
    const auto bundle = two_peak_bundle(scale);
    robust::RobustOptions opt;
    opt.mu_bounds_sigma = {10, 2, 22, 2, 2, 2, 2};
    opt.budget = 60;
    opt.init_count = 16;
    opt.seed = 1;
    const auto r = robust::robust_optimize(bundle, base.scaled(0.2), spec, opt);
    const auto [arg, best] = smoothed_argmax(2.0, 20.0);
    const double offset = r.mu.R - bundle.domain.center()[0];
    MESSAGE("small tolerance: mu_R offset " << offset << ", oracle " << arg);
    CHECK(arg > 0.0);
    CHECK(offset > 0.0);
    CHECK(smoothed_eta(offset, 2.0) >= best - 0.01);
    CHECK(std::is_sorted(r.trace.rbegin(), r.trace.rend()));
  }
  // Five times larger: sigma_R = 10, mean range +-20 nm.
  {
    std::vector<double> scale(7, 5.0);
    scale[0] = 5.2;
    scale[2] = 25.0;
    const auto bundle = two_peak_bundle(scale);
    robust::RobustOptions opt;
    opt.budget = 60;
    opt.init_count = 16;
    opt.seed = 1;
    const auto r = robust::robust_optimize(bundle, base, spec, opt);
    const auto [arg, best] = smoothed_argmax(10.0, 20.0);
    const double offset = r.mu.R - bundle.domain.center()[0];
    MESSAGE("large tolerance: mu_R offset " << offset << ", oracle " << arg);
    CHECK(arg < 0.0);
    CHECK(offset < 0.0);
    CHECK(smoothed_eta(offset, 10.0) >= best - 0.01);
    // The narrow peak is clearly worse once smoothed.
    CHECK(smoothed_eta(12.0, 10.0) < best - 0.05);

    // Vanishing tolerances: the robust optimum is the point optimum.
    const auto tiny = base.scaled(1e-7);
    opt.mu_bounds_sigma = std::vector<double>(7, 2e7);
    opt.mu_bounds_sigma[2] = 2e8;
    const auto point = robust::robust_optimize(bundle, tiny, spec, opt);
    const double point_offset = point.mu.R - bundle.domain.center()[0];
    MESSAGE("vanishing tolerance: mu_R offset " << point_offset);
    CHECK(smoothed_eta(point_offset, 0.0) >= smoothed_argmax(0.0, 20.0).second - 0.01);

    const auto again = robust::robust_optimize(bundle, base, spec, [&] {
      auto o = opt;
      o.mu_bounds_sigma.clear();
      return o;
    }());
    CHECK(again.mu == r.mu);
  }
}
