#include "cbgopt/local_search.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <vector>

namespace cbgopt::local_search {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

struct Pair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

// H * g with H the L-BFGS inverse Hessian approximation of -f.
Eigen::VectorXd two_loop(const std::deque<Pair>& memory, const Eigen::VectorXd& g) {
  Eigen::VectorXd q = g;
  std::vector<double> a(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    a[k] = memory[k].rho * memory[k].s.dot(q);
    q -= a[k] * memory[k].y;
  }
  const Pair& last = memory.back();
  Eigen::VectorXd r = (last.s.dot(last.y) / last.y.squaredNorm()) * q;
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double b = memory[k].rho * memory[k].y.dot(r);
    r += memory[k].s * (a[k] - b);
  }
  return r;
}

void mask_bound_components(Eigen::VectorXd& d, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if ((x[i] <= lower[i] && d[i] < 0.0) || (x[i] >= upper[i] && d[i] > 0.0)) d[i] = 0.0;
  }
}

}  // namespace

Result maximize_lbfgs_box(const ValueAndGradient& f, Eigen::VectorXd x0,
                          const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                          int max_iterations, double rel_tol) {
  constexpr std::size_t kMemory = 10;
  Eigen::VectorXd x = project(x0, lower, upper);
  Eigen::VectorXd g(x.size());
  double fx = f(x, &g);
  int evaluations = 1;
  if (!std::isfinite(fx)) return {x, fx, evaluations};

  std::deque<Pair> memory;
  Eigen::VectorXd x_new(x.size()), g_new(x.size());
  for (int iter = 0; iter < max_iterations; ++iter) {
    Eigen::VectorXd projected_gradient = project(x + g, lower, upper) - x;
    if (projected_gradient.lpNorm<Eigen::Infinity>() < 1e-12) break;

    Eigen::VectorXd d = memory.empty() ? g : two_loop(memory, g);
    mask_bound_components(d, x, lower, upper);
    if (!(d.dot(g) > 0.0)) {
      memory.clear();
      d = g;
      mask_bound_components(d, x, lower, upper);
    }
    if (d.lpNorm<Eigen::Infinity>() == 0.0) break;

    double step = memory.empty() ? std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>()) : 1.0;
    bool accepted = false;
    double f_new = fx;
    for (int k = 0; k < 40; ++k) {
      x_new = project(x + step * d, lower, upper);
      const Eigen::VectorXd delta = x_new - x;
      if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = f(x_new, nullptr);
      ++evaluations;
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * g.dot(delta) && f_new >= fx) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      break;
    }

    f_new = f(x_new, &g_new);
    ++evaluations;
    if (!std::isfinite(f_new)) break;
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g - g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      memory.push_back({std::move(s), std::move(y), 1.0 / sy});
      if (memory.size() > kMemory) memory.pop_front();
    }
    const double gain = f_new - fx;
    x = x_new;
    fx = f_new;
    g = g_new;
    if (gain <= rel_tol * (1.0 + std::abs(fx))) break;
  }
  return {x, fx, evaluations};
}

Result maximize_nelder_mead(const Value& f, const Eigen::VectorXd& x0, double initial_step,
                            int max_evaluations, double tol) {
  const Eigen::Index n = x0.size();
  std::vector<Eigen::VectorXd> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) simplex[i + 1][i] += initial_step;
  int evaluations = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  for (Eigen::Index i = 0; i <= n; ++i) values[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  while (evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[n - 1];
    if (std::isfinite(values[worst]) &&
        std::abs(values[best] - values[worst]) <= tol * (1.0 + std::abs(values[best]))) {
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < order.size() - 1; ++k) centroid += simplex[order[k]];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double f_reflected = eval(reflected);
    if (f_reflected > values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded > f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected > values[second]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected > values[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted > std::max(values[worst], outside ? f_reflected : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t k = 0; k <= static_cast<std::size_t>(n); ++k) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      values[k] = eval(simplex[k]);
    }
  }
  const auto it = std::max_element(values.begin(), values.end());
  return {simplex[static_cast<std::size_t>(it - values.begin())], *it, evaluations};
}

Result maximize_compass_box(const Value& f, Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                            const Eigen::VectorXd& upper, double initial_step, double min_step,
                            int max_evaluations) {
  const Eigen::Index n = x0.size();
  Eigen::VectorXd x = project(x0, lower, upper);
  double fx = f(x);
  int evaluations = 1;
  double step = initial_step;
  while (step >= min_step && evaluations < max_evaluations) {
    bool improved = false;
    for (Eigen::Index i = 0; i < n && evaluations < max_evaluations; ++i) {
      const double h = step * (upper[i] - lower[i]);
      if (h <= 0.0) continue;
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd trial = x;
        trial[i] = std::clamp(x[i] + sign * h, lower[i], upper[i]);
        if (trial[i] == x[i]) continue;
        const double ft = f(trial);
        ++evaluations;
        if (ft > fx) {
          x = std::move(trial);
          fx = ft;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {x, fx, evaluations};
}

}  // namespace cbgopt::local_search
