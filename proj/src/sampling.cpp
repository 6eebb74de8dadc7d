#include "cbgopt/sampling.hpp"

#include <cmath>
#include <numbers>

#include <boost/random/sobol.hpp>
#include <fmt/format.h>

#include "cbgopt/errors.hpp"

namespace cbgopt {

std::vector<double> BoxDomain::center() const {
  std::vector<double> c(dim());
  for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
  return c;
}

bool BoxDomain::contains(std::span<const double> x, double rel_tol) const {
  if (x.size() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i) {
    const double slack = rel_tol * width(i);
    if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
  }
  return true;
}

void BoxDomain::validate() const {
  if (lower.empty() || lower.size() != upper.size()) {
    throw InvalidArgument("box domain needs matching, non-empty lower and upper bounds");
  }
  if (!names.empty() && names.size() != lower.size()) {
    throw InvalidArgument("box domain has a wrong number of parameter names");
  }
  for (std::size_t i = 0; i < dim(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i])) {
      throw InvalidArgument(fmt::format("box domain dimension {} is empty: [{}, {}]", i,
                                        lower[i], upper[i]));
    }
  }
}

void ToleranceSpec::validate() const {
  if (sigma.empty()) throw InvalidArgument("tolerance vector is empty");
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i])) {
      throw InvalidArgument(fmt::format("tolerance {} must be positive, got {}", i, sigma[i]));
    }
  }
}

ToleranceSpec ToleranceSpec::scaled(double factor) const {
  ToleranceSpec out = *this;
  for (double& s : out.sigma) s *= factor;
  return out;
}

ToleranceSpec ToleranceSpec::fabrication_default() { return {{10, 10, 1, 5, 10, 10, 5}}; }

namespace sampling {

std::size_t sobol_max_dimension() {
  return boost::random::detail::qrng_tables::sobol::max_dimension;
}

Eigen::MatrixXd sobol_unit(std::size_t dim, std::size_t count, bool include_origin) {
  if (dim == 0) throw InvalidArgument("Sobol dimension must be positive");
  if (dim > sobol_max_dimension()) {
    throw InvalidArgument(fmt::format("Sobol dimension {} unsupported (direction numbers exist "
                                      "for up to {} dimensions)",
                                      dim, sobol_max_dimension()));
  }
  if (count == 0) throw InvalidArgument("Sobol count must be at least 1");
  Eigen::MatrixXd out(count, dim);
  // The engine starts at index 1.
  boost::random::sobol_engine<std::uint64_t, 64> engine(dim);
  std::size_t row = 0;
  if (include_origin) {
    out.row(0).setZero();
    row = 1;
  }
  for (; row < count; ++row) {
    for (std::size_t d = 0; d < dim; ++d) {
      out(row, d) = static_cast<double>(engine()) * 0x1p-64;
    }
  }
  return out;
}

std::vector<std::vector<double>> sobol(std::size_t dim, std::size_t count,
                                       const BoxDomain& domain) {
  domain.validate();
  if (dim != domain.dim()) {
    throw InvalidArgument(
        fmt::format("Sobol dimension {} does not match the domain dimension {}", dim,
                    domain.dim()));
  }
  const Eigen::MatrixXd unit = sobol_unit(dim, count);
  std::vector<std::vector<double>> points(count, std::vector<double>(dim));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      points[i][d] = domain.lower[d] + unit(i, d) * domain.width(d);
    }
  }
  return points;
}

std::vector<double> default_training_scale() { return {5, 5, 25, 5, 5, 5, 5}; }

BoxDomain training_domain(const DesignPoint& center, const ToleranceSpec& tol,
                          std::span<const double> scale) {
  tol.validate();
  if (tol.dim() != DesignPoint::kDim || scale.size() != DesignPoint::kDim) {
    throw InvalidArgument("training domain needs 7 tolerances and 7 scales");
  }
  const auto c = center.to_array();
  BoxDomain box;
  for (std::size_t i = 0; i < DesignPoint::kDim; ++i) {
    if (!(scale[i] > 0.0)) {
      throw InvalidArgument(fmt::format("training scale for {} must be positive, got {}",
                                        DesignPoint::kNames[i], scale[i]));
    }
    box.lower.push_back(c[i] - scale[i] * tol.sigma[i]);
    box.upper.push_back(c[i] + scale[i] * tol.sigma[i]);
    box.names.emplace_back(DesignPoint::kNames[i]);
  }
  return box;
}

BoxDomain training_domain(const DesignPoint& center, const ToleranceSpec& tol) {
  const auto scale = default_training_scale();
  return training_domain(center, tol, scale);
}

namespace {
constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t hash_u64(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ (stream * 0xd1b54a32d192ed03ULL));
  h = splitmix(h ^ (counter * 0x8cb92ba72f3d8dd7ULL + 0x632be59bd9b4e019ULL));
  return h;
}

double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return (static_cast<double>(hash_u64(seed, stream, counter) >> 11) + 1.0) * 0x1p-53;
}

double standard_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t pair = index / 2;
  const double u1 = uniform(seed, stream, 2 * pair);
  const double u2 = uniform(seed, stream, 2 * pair + 1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
}

Eigen::MatrixXd standard_normal_matrix(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Eigen::MatrixXd z(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t d = 0; d < dim; ++d) z(i, d) = standard_normal(seed, i, d);
  }
  return z;
}

Eigen::MatrixXd mvn_sample(std::span<const double> mean, std::span<const double> sigma,
                           std::size_t count, std::uint64_t seed) {
  if (mean.size() != sigma.size()) {
    throw InvalidArgument("mean and standard deviation vectors differ in length");
  }
  if (count == 0) throw InvalidArgument("sample count must be at least 1");
  Eigen::MatrixXd x = standard_normal_matrix(count, mean.size(), seed);
  for (std::size_t d = 0; d < mean.size(); ++d) {
    x.col(d) = (x.col(d).array() * sigma[d] + mean[d]).matrix();
  }
  return x;
}

std::vector<DesignPoint> mvn_sample(const DesignPoint& mean, const ToleranceSpec& tol,
                                    std::size_t count, std::uint64_t seed) {
  tol.validate();
  if (tol.dim() != DesignPoint::kDim) {
    throw InvalidArgument("tolerance vector must have 7 entries");
  }
  const auto m = mean.to_array();
  const Eigen::MatrixXd x = mvn_sample(m, tol.sigma, count, seed);
  std::vector<DesignPoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::array<double, DesignPoint::kDim> row;
    for (std::size_t d = 0; d < DesignPoint::kDim; ++d) row[d] = x(i, d);
    out.push_back(DesignPoint::from_span(row));
  }
  return out;
}

}  // namespace sampling
}  // namespace cbgopt
