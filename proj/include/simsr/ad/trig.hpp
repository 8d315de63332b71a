#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace simsr::ad {

// Branch-free sin/cos: Cody-Waite reduction by pi/2 and Cephes minimax
// polynomials on [-pi/4, pi/4]. Absolute error stays near 1e-16 for
// |x| < 1e5; larger arguments lose accuracy linearly.
namespace trig_detail {

inline constexpr double kTwoOverPi = 0.636619772367581343076;
inline constexpr double kPio2a = 1.57079632673412561417e+00;
inline constexpr double kPio2b = 6.07710050630396597660e-11;
inline constexpr double kPio2c = 2.02226624879595063154e-21;

inline double sin_poly(double r, double z) {
  double p = 1.58962301576546568060e-10;
  p = p * z - 2.50507477628578072866e-8;
  p = p * z + 2.75573136213857245213e-6;
  p = p * z - 1.98412698295895385996e-4;
  p = p * z + 8.33333333332211858878e-3;
  p = p * z - 1.66666666666666307295e-1;
  return r + r * z * p;
}

inline double cos_poly(double z) {
  double p = -1.13585365213876817300e-11;
  p = p * z + 2.08757008419747316778e-9;
  p = p * z - 2.75573141792967388112e-7;
  p = p * z + 2.48015872888517045348e-5;
  p = p * z - 1.38888888888730564116e-3;
  p = p * z + 4.16666666666665929218e-2;
  return 1.0 - 0.5 * z + z * z * p;
}

}  // namespace trig_detail

/// sin(x) and cos(x) together.
inline void fast_sincos(double x, double& s, double& c) {
  using namespace trig_detail;
  // Round to nearest through the 1.5 * 2^52 shifter; exact for |j| < 2^51.
  constexpr double shifter = 6755399441055744.0;
  const double j = (x * kTwoOverPi + shifter) - shifter;
  const double r = ((x - j * kPio2a) - j * kPio2b) - j * kPio2c;
  const double z = r * r;
  const double sr = sin_poly(r, z), cr = cos_poly(z);
  const auto q = static_cast<std::int64_t>(j) & 3;
  const double ss = (q & 1) ? cr : sr;
  const double cc = (q & 1) ? sr : cr;
  s = (q & 2) ? -ss : ss;
  c = ((q + 1) & 2) ? -cc : cc;
}

inline double fast_sin(double x) {
  double s, c;
  fast_sincos(x, s, c);
  return s;
}

inline double fast_cos(double x) {
  double s, c;
  fast_sincos(x, s, c);
  return c;
}

}  // namespace simsr::ad
