// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-cbgopt> [criterion numbers...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>
#include <unistd.h>

#include "cbgopt/bayes_opt.hpp"
#include "cbgopt/capacitor.hpp"
#include "cbgopt/errors.hpp"
#include "cbgopt/gp.hpp"
#include "cbgopt/robustness.hpp"
#include "cbgopt/toy_cavity.hpp"
#include "cbgopt/warp.hpp"

using namespace cbgopt;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double matern(double r, double s2) {
  const double a = std::sqrt(5.0) * r;
  return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

double dist(const std::vector<double>& p, const std::vector<double>& q, const gp::Vector& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::pow((p[i] - q[i]) / l[i], 2);
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

Outcome gp_interpolation() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int set = 0; set < 20; ++set) {
    std::vector<std::vector<double>> rows(64, std::vector<double>(7));
    std::vector<double> y(64);
    for (int i = 0; i < 64; ++i) {
      double s = 10.0;
      for (int d = 0; d < 7; ++d) {
        rows[i][d] = u(rng);
        s += std::sin(2.0 * rows[i][d] + 0.3 * d * set);
      }
      y[i] = s;
    }
    const auto model = gp::fit(gp::TrainingSet::from_rows(rows, y));
    for (int i = 0; i < 64; ++i) {
      const double rel = std::abs(model.predict(rows[i]).mean - y[i]) / std::abs(y[i]);
      worst = std::max(worst, rel);
    }
  }
  const double elapsed = seconds_since(t0);
  o.require(worst <= 1e-8, "training values reproduced within 1e-8");
  o.require(elapsed < 5.0, "runtime under 5 s");
  o.note(fmt::format("worst relative error {:.2e}, {:.2f} s", worst, elapsed));
  return o;
}

Outcome gp_closed_form() {
  Outcome o;
  double worst = 0.0;
  // One point: mean = mu0 + k(x,x1)/s2 (y1 - mu0), var = s2 - k^2/s2.
  {
    gp::KernelParams k{0.4, 2.5, gp::Vector::Constant(7, 0.6), 0.0};
    const std::vector<double> x1{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    const double y1 = -1.3;
    const gp::GPModel m(gp::TrainingSet::from_rows({x1}, std::vector<double>{y1}), k);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> x(7);
      for (auto& v : x) v = u(rng);
      const double kx = matern(dist(x, x1, k.length_scales), k.sigma0_sq);
      const auto p = m.predict(x);
      worst = std::max(worst, std::abs(p.mean - (k.mu0 + kx / k.sigma0_sq * (y1 - k.mu0))));
      worst = std::max(worst, std::abs(p.variance - (k.sigma0_sq - kx * kx / k.sigma0_sq)));
    }
  }
  // Two points: explicit 2x2 inverse.
  {
    gp::KernelParams k{-0.2, 1.3, gp::Vector(2), 0.0};
    k.length_scales << 0.7, 1.9;
    const std::vector<double> x1{0.0, 0.0}, x2{0.5, 1.0};
    const double y1 = 0.8, y2 = 2.1;
    const gp::GPModel m(
        gp::TrainingSet::from_rows({x1, x2}, std::vector<double>{y1, y2}), k);
    const double a = k.sigma0_sq, b = matern(dist(x1, x2, k.length_scales), k.sigma0_sq);
    const double det = a * a - b * b;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    for (int rep = 0; rep < 50; ++rep) {
      const std::vector<double> x{u(rng), u(rng)};
      const double k1 = matern(dist(x, x1, k.length_scales), a);
      const double k2 = matern(dist(x, x2, k.length_scales), a);
      // K^-1 = [a -b; -b a] / det
      const double w1 = (a * k1 - b * k2) / det, w2 = (a * k2 - b * k1) / det;
      const double mean = k.mu0 + w1 * (y1 - k.mu0) + w2 * (y2 - k.mu0);
      const double var = a - (k1 * w1 + k2 * w2);
      const auto p = m.predict(x);
      worst = std::max(worst, std::abs(p.mean - mean));
      worst = std::max(worst, std::abs(p.variance - var));
    }
  }
  o.require(worst <= 1e-10, "M=1 and M=2 predictions within 1e-10");
  o.note(fmt::format("worst deviation {:.2e}", worst));
  return o;
}

Outcome likelihood_gradient() {
  Outcome o;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> rows(24, std::vector<double>(7));
  std::vector<double> y(24);
  for (int i = 0; i < 24; ++i) {
    for (auto& v : rows[i]) v = u(rng);
    y[i] = std::cos(3.0 * rows[i][0]) + rows[i][1] * rows[i][2] - 0.5 * rows[i][6];
  }
  const auto t = gp::TrainingSet::from_rows(rows, y);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    gp::KernelParams k;
    k.mu0 = u(rng) - 0.5;
    k.sigma0_sq = std::exp(2.0 * u(rng) - 1.0);
    k.length_scales = gp::Vector(7);
    for (int d = 0; d < 7; ++d) k.length_scales[d] = 0.3 * std::exp(2.0 * u(rng));
    k.noise_sq = 1e-6;
    const auto g = gp::log_marginal_likelihood_gradient(t, k);
    for (int which = 0; which < 9; ++which) {
      auto eval = [&](double h) {
        gp::KernelParams p = k;
        if (which == 0) p.mu0 += h;
        else if (which == 1) p.sigma0_sq *= std::exp(h);
        else p.length_scales[which - 2] *= std::exp(h);
        return gp::log_marginal_likelihood(t, p);
      };
      const double h = 1e-5;
      const double fd = (eval(h) - eval(-h)) / (2.0 * h);
      const double rel = std::abs(g.gradient[which] - fd) / std::max(std::abs(fd), 1e-3);
      worst = std::max(worst, rel);
    }
  }
  o.require(worst <= 1e-4, "gradients within 1e-4 relative");
  o.note(fmt::format("worst relative deviation {:.2e}", worst));
  return o;
}

Outcome warp_properties() {
  Outcome o;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  // Round trip g(g^-1(y)) on the latent axis over the resolvable range.
  const warp::WarpSpec w(0.0, 1.0, 0.12, 0.85, 0.07);
  double worst_trip = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double y = w.latent_lower_cutoff() - 3.0 +
                     (w.latent_upper_cutoff() - w.latent_lower_cutoff() + 4.0) * u(rng);
    worst_trip = std::max(worst_trip, std::abs(warp::transform(w, warp::inverse_transform(w, y)) - y));
  }
  o.require(worst_trip <= 1e-9, "latent round trip within 1e-9");

  // Continuity of value and slope at the cutoffs, segment formulas vs the affine piece.
  double worst_value = 0.0, worst_slope = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const double lo = -5.0 + 10.0 * u(rng);
    const double hi = lo + 0.1 + 20.0 * u(rng);
    const double cl = lo + (hi - lo) * (0.01 + 0.5 * u(rng));
    const double cu = cl + (hi - cl) * (0.01 + 0.98 * u(rng));
    const warp::WarpSpec s(lo, hi, cl, cu, u(rng) - 0.5);
    const double yl = s.latent_lower_cutoff(), yu = s.latent_upper_cutoff();
    const double vl = lo + std::exp(s.a_lower() * (yl - s.b_lower()));
    const double vu = hi - std::exp(-s.a_upper() * (yu - s.b_upper()));
    worst_value = std::max({worst_value, std::abs(vl - (yl + s.b_linear())),
                            std::abs(vu - (yu + s.b_linear()))});
    const double dl = s.a_lower() * std::exp(s.a_lower() * (yl - s.b_lower()));
    const double du = s.a_upper() * std::exp(-s.a_upper() * (yu - s.b_upper()));
    worst_slope = std::max({worst_slope, std::abs(dl - 1.0), std::abs(du - 1.0)});
  }
  o.require(worst_value <= 1e-10, "value continuity within 1e-10");
  o.require(worst_slope <= 1e-6, "slope continuity within 1e-6 relative");

  // Bounded predictions from a fitted warped GP on data crowding both bounds.
  const auto x = sampling::sobol_unit(3, 96);
  gp::TrainingSet t{x, gp::Vector(96)};
  for (int i = 0; i < 96; ++i) {
    const double z = 6.0 * (x(i, 0) - 0.5) + 2.0 * std::sin(4.0 * x(i, 1)) - x(i, 2);
    t.values[i] = 1.0 / (1.0 + std::exp(-z));
  }
  const auto model = warp::fit_warped_gp(t, 0.0, 1.0);
  gp::Matrix q(10000, 3);
  std::uniform_real_distribution<double> wide(-3.0, 4.0);
  for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) << wide(rng), wide(rng), wide(rng);
  gp::Vector med, p16, p84;
  warp::predict_bounded_batch(model, q, med, &p16, &p84);
  std::size_t outside = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (double v : {med[i], p16[i], p84[i]}) outside += !(v > 0.0 && v < 1.0);
  }
  o.require(outside == 0, "bounded predictions strictly inside (0, 1)");
  o.note(fmt::format("round trip {:.1e}, value gap {:.1e}, slope gap {:.1e}, {} outside",
                     worst_trip, worst_value, worst_slope, outside));
  return o;
}

Outcome expected_improvement() {
  Outcome o;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const double mean = u(rng), sd = 0.1 + std::abs(u(rng));
    const double f_min = mean + 1.25 * sd * u(rng);
    const int count = 100000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < count; ++i) {
      const double v = std::max(0.0, f_min - (mean + sd * n(rng)));
      sum += v;
      sum2 += v * v;
    }
    const double mc = sum / count;
    const double se = std::sqrt((sum2 / count - mc * mc) / count);
    worst = std::max(worst, std::abs(bo::expected_improvement(mean, sd * sd, f_min) - mc) / se);
  }
  o.require(worst <= 3.0, "closed form within 3 standard errors");
  const double zero = bo::expected_improvement(0.7, 0.0, 0.7);
  o.require(zero == 0.0, "EI is exactly 0 with no variance at the incumbent");
  o.note(fmt::format("worst deviation {:.2f} standard errors", worst));
  return o;
}

Outcome bo_bowl() {
  Outcome o;
  const BoxDomain box{{-1.0, -1.0}, {1.0, 1.0}, {"x", "y"}};
  auto bowl = [](std::span<const double> x) {
    return (x[0] - 0.3) * (x[0] - 0.3) + 2.0 * (x[1] + 0.2) * (x[1] + 0.2) + 1.5;
  };
  double worst = 0.0;
  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<double> trace;
    bo::Options opt;
    opt.budget = 60;
    opt.init_count = 12;
    opt.seed = seed;
    opt.on_evaluation = [&](std::size_t, std::span<const double>, std::optional<double>,
                            double best) { trace.push_back(best); };
    const auto s = bo::optimize([&](std::span<const double> x) { return std::optional(bowl(x)); },
                                box, opt);
    worst = std::max(worst, s.best().value - 1.5);
    for (std::size_t i = 1; i < trace.size(); ++i) monotone = monotone && trace[i] <= trace[i - 1];
    monotone = monotone && trace.size() == 60;
  }
  o.require(worst < 1e-3, "best value within 1e-3 of the minimum");
  o.require(monotone, "incumbent trace non-increasing");
  o.note(fmt::format("worst gap {:.2e} over 5 seeds", worst));
  return o;
}

Outcome linear_propagation() {
  Outcome o;
  const std::array<double, 7> c = {0.9, -0.1, 0.5, 0.35, 0.05, -0.02, 0.01};
  const auto tol = ToleranceSpec::fabrication_default();
  const auto mean = designs::nir_i();
  const auto t0 = Clock::now();
  const auto bundle = robust::train_bundle(
      [&](const DesignPoint& p) {
        const auto a = p.to_array();
        double l = 0.0;
        for (std::size_t i = 0; i < 7; ++i) l += c[i] * a[i];
        return robust::OracleOutput{l, 15.0 + 0.01 * (p.R - 201.0), 0.5 + 0.001 * (p.W - 114.0)};
      },
      mean, tol, 256, 0);
  const auto report = robust::analyze(bundle, mean, tol, 50000, 3);
  const double elapsed = seconds_since(t0);

  const auto m = mean.to_array();
  double mu = 0.0, var = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    mu += c[i] * m[i];
    var += c[i] * c[i] * tol.sigma[i] * tol.sigma[i];
  }
  // P84 - P50 of a normal is Phi^-1(0.84) sd.
  const double spread = 0.9944578832097531 * std::sqrt(var);
  const auto& s = report[robust::Quantity::LambdaC];
  const double z_med = std::abs(s.median - mu) / s.mc_error;
  const double z_plus = std::abs(s.sigma_plus - spread) / s.sigma_plus_error;
  o.require(z_med <= 3.0, "P50 within 3 bootstrap errors");
  o.require(z_plus <= 3.0, "P84-P50 within 3 bootstrap errors");
  o.require(elapsed < 120.0, "runtime under 2 min");
  o.note(fmt::format("P50 {:.4f} vs {:.4f} ({:.2f} se), P84-P50 {:.4f} vs {:.4f} ({:.2f} se), {:.1f} s",
                     s.median, mu, z_med, s.sigma_plus, spread, z_plus, elapsed));
  return o;
}

Outcome toy_pipeline() {
  Outcome o;
  const auto tol = ToleranceSpec::fabrication_default();
  const auto center = designs::nir_i();
  robust::Oracle oracle = [](const DesignPoint& p) {
    const auto r = device::toy_cavity(p);
    return std::optional(robust::OracleOutput{r.lambda_c, r.fp, r.eta_smf});
  };
  const auto t0 = Clock::now();
  const auto bundle = robust::train_bundle(oracle, center, tol, 1024, 17);
  const auto report = robust::analyze(bundle, center, tol, 50000, 17);
  robust::RobustOptions ro;
  ro.budget = 100;
  ro.seed = 17;
  const auto best = robust::robust_optimize(bundle, tol, objective::ObjectiveSpec{}, ro);
  const auto v = robust::verify(bundle, oracle, best.mu, tol, 512, 17);
  const double elapsed = seconds_since(t0);

  const auto& eta = v[robust::Quantity::Efficiency];
  o.require(eta.median_discrepancy < 0.02, "eta median discrepancy below 0.02");
  o.require(v.evaluated == 512, "all 512 oracle calls succeeded");
  const std::string triple = robust::format_triple(report[robust::Quantity::Efficiency], 100.0, 1, "%");
  // (P50 ± s)_{-a}^{+b}
  bool shape = triple.size() > 10 && triple.front() == '(' &&
               triple.find(" ± ") != std::string::npos && triple.find(")_{-") != std::string::npos &&
               triple.find("}^{+") != std::string::npos;
  std::istringstream in(triple.substr(1));
  double p50 = 0.0;
  in >> p50;
  shape = shape && std::abs(p50 - 100.0 * report[robust::Quantity::Efficiency].median) < 0.051;
  o.require(shape, "triple format");
  o.require(elapsed < 900.0, "runtime under 15 min");
  o.note(fmt::format("eta at NIR I {}, robust target {:.4f}, eta oracle {:.4f} vs surrogate {:.4f}, "
                     "{:.0f} s",
                     triple, best.target, eta.oracle_median, eta.surrogate_median, elapsed));
  return o;
}

// Median of eta(center_R + offset + sigma Z) from an independent generator.
double smoothed_eta(double offset, double sigma) {
  static const std::vector<double> z = [] {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    std::vector<double> v(20001);
    for (auto& x : v) x = n(rng);
    return v;
  }();
  const device::TwoPeakConfig cfg;
  std::vector<double> eta(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    eta[i] = device::two_peak_eta(cfg.center.R + offset + sigma * z[i], cfg);
  }
  std::nth_element(eta.begin(), eta.begin() + 10000, eta.end());
  return eta[10000];
}

std::pair<double, double> smoothed_argmax(double sigma, double half_range) {
  double best = -1.0, arg = 0.0;
  for (double off = -half_range; off <= half_range + 1e-9; off += 0.05) {
    const double v = smoothed_eta(off, sigma);
    if (v > best) {
      best = v;
      arg = off;
    }
  }
  return {arg, best};
}

Outcome two_peak_selection() {
  Outcome o;
  const auto base = ToleranceSpec::fabrication_default();
  const device::TwoPeakConfig cfg;
  auto bundle_for = [&](double scale_r) {
    robust::TrainOptions opt;
    opt.scale = std::vector<double>(7, 5.0);
    opt.scale[0] = scale_r;
    opt.scale[2] = 25.0;
    return robust::train_bundle(
        [&](const DesignPoint& p) {
          const auto r = device::two_peak(p, cfg);
          return std::optional(robust::OracleOutput{r.lambda_c, r.fp, r.eta_smf});
        },
        cfg.center, base, 256, 0, opt);
  };
  robust::RobustOptions opt;
  opt.budget = 60;
  opt.init_count = 16;
  opt.seed = 1;

  // Tolerances at 1/5: sigma_R = 2 nm.
  const auto small_bundle = bundle_for(2.7);
  auto small_opt = opt;
  small_opt.mu_bounds_sigma = {10, 2, 22, 2, 2, 2, 2};
  const auto small = robust::robust_optimize(small_bundle, base.scaled(0.2), {}, small_opt);
  const double small_off = small.mu.R - cfg.center.R;
  const auto [small_arg, small_best] = smoothed_argmax(2.0, 20.0);

  // Five times larger: sigma_R = 10 nm.
  const auto large_bundle = bundle_for(5.2);
  const auto large = robust::robust_optimize(large_bundle, base, {}, opt);
  const double large_off = large.mu.R - cfg.center.R;
  const auto [large_arg, large_best] = smoothed_argmax(10.0, 20.0);

  o.require(small_arg > 0.0 && small_off > 0.0, "narrow peak chosen at small tolerances");
  o.require(large_arg < 0.0 && large_off < 0.0, "broad peak chosen at 5x tolerances");
  o.require(smoothed_eta(small_off, 2.0) >= small_best - 0.01,
            "small-tolerance choice matches the smoothed maximum");
  o.require(smoothed_eta(large_off, 10.0) >= large_best - 0.01,
            "5x choice matches the smoothed maximum");
  o.note(fmt::format("mu_R offset {:+.2f} nm (smoothed argmax {:+.2f}) at 1x, "
                     "{:+.2f} nm (smoothed argmax {:+.2f}) at 5x",
                     small_off, small_arg, large_off, large_arg));
  return o;
}

Outcome electrostatics() {
  Outcome o;
  const auto p = designs::nir_i();
  const auto eps = device::Permittivities::gaas();
  const double analytic = device::analytic_stack_field(device::planar_stack(p, eps), 1, 1.0);

  device::GridSpec planar;
  planar.planar = true;
  const auto sp = device::fd_axisym_solve(p, eps, 7.0, 1.0, planar);
  const double planar_err = std::abs(sp.e_abs_probe / analytic - 1.0);
  o.require(planar.h_fine <= 5.0 && planar_err < 0.01, "planar field within 1% at 5 nm");

  const auto s1 = device::fd_axisym_solve(p, eps, 7.0, 1.0);
  const auto s3 = device::fd_axisym_solve(p, eps, 7.0, 3.0);
  const double lin = std::abs(s3.e_abs_probe / (3.0 * s1.e_abs_probe) - 1.0);
  o.require(lin <= 1e-12, "field linear in the bias");
  o.require(s1.e_abs_probe > analytic, "grating field above the planar value");
  const auto sweep = device::bias_sweep(s1, {100.0 / s1.e_abs_probe});
  const double u100 = sweep.volts_at_100;
  o.require(std::abs(u100 / 19.9 - 1.0) <= 0.2, "U(100 kV/cm) within 20% of 19.9 V");
  o.note(fmt::format("planar error {:.2e}, linearity {:.1e}, E {:.4f} vs planar {:.4f} kV/cm/V, "
                     "U(100) {:.2f} V",
                     planar_err, lin, s1.e_abs_probe, analytic, u100));
  return o;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& command, const fs::path& config, const fs::path& out,
            const std::string& extra = "") {
  const std::string cmd = fmt::format("\"{}\" {} --config \"{}\" --out \"{}\" {} > \"{}\" 2>&1",
                                      g_cli, command, config.string(), out.string(), extra,
                                      (out.string() + ".log"));
  return std::system(cmd.c_str());
}

Outcome cli_determinism() {
  Outcome o;
  if (g_cli.empty() || !fs::exists(g_cli)) {
    o.require(false, "cbgopt executable given on the command line");
    return o;
  }
  const fs::path dir = fs::temp_directory_path() / fmt::format("cbgopt_acceptance_{}", ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir);

  using nlohmann::json;
  const json tol = {{"R", 10}, {"W", 10}, {"P", 1}, {"t_CBG", 5}, {"t_SiO2", 10}, {"t_HSQ", 10},
                    {"t_ITO", 5}};
  std::vector<std::pair<std::string, json>> runs = {
      {"toy-eval", {{"seed", 0}, {"oracle", {{"type", "toy-cavity"}}},
                    {"toy_eval", {{"designs", {"nir_i", "nir_ii", "ob_i", "cb_i"}}}}}},
      {"optimize", {{"seed", 3}, {"oracle", {{"type", "toy-cavity"}}},
                    {"domain", {{"R", {150, 250}}, {"W", {100, 200}}, {"P", {300, 400}},
                                {"t_CBG", {150, 300}}, {"t_SiO2", {100, 300}},
                                {"t_HSQ-t_CBG", {50, 900}}, {"t_ITO", 50}}},
                    {"optimize", {{"budget", 40}, {"init_count", 16}}}}},
      {"robustness", {{"seed", 5}, {"oracle", {{"type", "toy-cavity"}}}, {"center", "nir_i"},
                      {"tolerances", tol}, {"training", {{"count", 64}, {"gp_starts", 2}}},
                      {"analyze", {{"n_samples", 4000}, {"bootstrap", 50}, {"bins", 20}}}}},
      {"robust-optimize", {{"seed", 5}, {"oracle", {{"type", "two-peak"}}}, {"center", "nir_i"},
                           {"tolerances", tol}, {"training", {{"count", 64}, {"gp_starts", 2}}},
                           {"robust_optimize", {{"n_samples", 1000}, {"budget", 20},
                                                {"init_count", 8}}}}},
      {"verify", {{"seed", 5}, {"oracle", {{"type", "toy-cavity"}}}, {"center", "nir_i"},
                  {"training", {{"count", 64}, {"gp_starts", 2}}}, {"verify", {{"count", 64}}}}},
      {"capacitor", {{"seed", 0}, {"capacitor", {{"design", "nir_i"}, {"radius_um", 2.0},
                                                 {"grid", {{"h_fine", 10.0}, {"rings", 2}}},
                                                 {"volts", {{"start", 0.0}, {"stop", 30.0},
                                                            {"step", 5.0}}}}}}},
  };

  std::size_t files = 0;
  for (const auto& [command, config] : runs) {
    const fs::path cfg = dir / (command + ".json");
    std::ofstream(cfg) << config.dump(2);
    std::vector<std::map<std::string, std::string>> outputs;
    // The third run of the sampling commands uses worker threads.
    const bool threaded = command == "robustness" || command == "verify";
    for (int rep = 0; rep < (threaded ? 3 : 2); ++rep) {
      const fs::path out = dir / fmt::format("{}_{}", command, rep);
      const int rc = run_cli(command, cfg, out, rep == 2 ? "--threads 3" : "");
      o.require(rc == 0, fmt::format("{} run {} exits 0 (log {}.log)", command, rep, out.string()));
      std::map<std::string, std::string> contents;
      if (fs::exists(out)) {
        for (const auto& e : fs::directory_iterator(out)) {
          contents[e.path().filename().string()] = slurp(e.path());
        }
      }
      outputs.push_back(std::move(contents));
    }
    o.require(!outputs[0].empty(), command + " wrote files");
    o.require(outputs[0] == outputs[1], command + " outputs byte-identical");
    if (threaded) o.require(outputs[0] == outputs[2], command + " outputs independent of threads");
    files += outputs[0].size();
  }
  o.note(fmt::format("6 commands, {} files compared", files));
  if (o.pass) fs::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (!a.empty() && std::all_of(a.begin(), a.end(), ::isdigit)) only.insert(std::stoi(a));
    else g_cli = a;
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"GP interpolation on 20 random 7-D sets", gp_interpolation},
      {"GP closed form for one and two points", gp_closed_form},
      {"likelihood gradient vs finite differences", likelihood_gradient},
      {"output warp round trip, continuity, bounded predictions", warp_properties},
      {"expected improvement vs Monte Carlo", expected_improvement},
      {"Bayesian optimization on a quadratic bowl", bo_bowl},
      {"robustness statistics on a linear oracle", linear_propagation},
      {"end-to-end pipeline on the toy cavity", toy_pipeline},
      {"robust vs point optimum on the two-peak oracle", two_peak_selection},
      {"electrostatics of the gated cavity", electrostatics},
      {"CLI byte reproducibility", cli_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note(std::string("exception: ") + e.what());
    }
    std::string notes;
    for (const auto& s : o.notes) notes += (notes.empty() ? "" : "; ") + s;
    fmt::print("criterion {:2d} {}: {} ({})\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first,
               notes);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
