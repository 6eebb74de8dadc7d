#include "cbgopt/design.hpp"

#include <fmt/format.h>

#include "cbgopt/errors.hpp"

namespace cbgopt {

DesignPoint DesignPoint::from_span(std::span<const double> v) {
  if (v.size() != kDim) {
    throw InvalidArgument(fmt::format("design point needs {} values, got {}", kDim, v.size()));
  }
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

int DesignPoint::index_of(std::string_view name) {
  for (std::size_t i = 0; i < kDim; ++i) {
    if (kNames[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void DesignPoint::validate() const {
  const auto a = to_array();
  for (std::size_t i = 0; i < kDim; ++i) {
    if (!(a[i] > 0.0)) {
      throw InvalidArgument(fmt::format("design parameter {} must be positive, got {}",
                                        kNames[i], a[i]));
    }
  }
  if (t_hsq < t_cbg) {
    throw InvalidArgument(
        fmt::format("t_HSQ ({}) must cover the slab thickness t_CBG ({})", t_hsq, t_cbg));
  }
  if (W >= P) {
    throw InvalidArgument(fmt::format("gap width W ({}) must be below the period P ({})", W, P));
  }
}

namespace designs {
DesignPoint nir_i() { return {201, 114, 318, 261, 136, 702, 50}; }
DesignPoint nir_ii() { return {209, 78, 309, 229, 135, 540, 64}; }
DesignPoint ob_i() { return {309, 160, 482, 272, 310, 947, 50}; }
DesignPoint cb_i() { return {410, 133, 593, 302, 388, 768, 50}; }
}  // namespace designs

}  // namespace cbgopt
