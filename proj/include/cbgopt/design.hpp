#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace cbgopt {

/// Geometry of one fiber-coupled CBG device. All lengths in nm.
struct DesignPoint {
  double R = 0.0;       // inner disc radius
  double W = 0.0;       // gap width
  double P = 0.0;       // grating period
  double t_cbg = 0.0;   // semiconductor slab thickness
  double t_sio2 = 0.0;  // SiO2 spacer between slab and gold mirror
  double t_hsq = 0.0;   // planarization thickness, measured from the SiO2 top
  double t_ito = 0.0;   // transparent top contact

  static constexpr std::size_t kDim = 7;
  static constexpr std::array<std::string_view, kDim> kNames = {
      "R", "W", "P", "t_CBG", "t_SiO2", "t_HSQ", "t_ITO"};

  std::array<double, kDim> to_array() const {
    return {R, W, P, t_cbg, t_sio2, t_hsq, t_ito};
  }
  std::vector<double> to_vector() const {
    auto a = to_array();
    return {a.begin(), a.end()};
  }
  static DesignPoint from_span(std::span<const double> v);

  /// Index of a parameter name in kNames, or -1.
  static int index_of(std::string_view name);

  /// Throws InvalidArgument unless all fields are positive, t_HSQ >= t_CBG and W < P.
  void validate() const;

  bool operator==(const DesignPoint&) const = default;
};

/// Reference geometries of the optimized devices (nm).
namespace designs {
DesignPoint nir_i();
DesignPoint nir_ii();
DesignPoint ob_i();
DesignPoint cb_i();
}  // namespace designs

}  // namespace cbgopt
