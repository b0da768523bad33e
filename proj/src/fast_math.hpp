#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace srn::detail {

/// Branch-free float tanh: odd rational approximation P(x²)·x / Q(x²) on
/// [-7.9053, 7.9053] (saturated outside), within a few ulp of std::tanh.
/// Written so the compiler vectorizes loops over it; a given input gives the
/// same bits in a vector lane and in scalar code.
inline float tanh_approx(float x) {
  constexpr float kClamp = 7.90531110763549805f;
  constexpr float a1 = 4.89352455891786e-03f, a3 = 6.37261928875436e-04f,
                  a5 = 1.48572235717979e-05f, a7 = 5.12229709037114e-08f,
                  a9 = -8.60467152213735e-11f, a11 = 2.00018790482477e-13f,
                  a13 = -2.76076847742355e-16f;
  constexpr float b0 = 4.89352518554385e-03f, b2 = 2.26843463243900e-03f,
                  b4 = 1.18534705686654e-04f, b6 = 1.19825839466702e-06f;
  const float c = std::min(std::max(x, -kClamp), kClamp);
  const float x2 = c * c;
  float p = a13;
  p = p * x2 + a11;
  p = p * x2 + a9;
  p = p * x2 + a7;
  p = p * x2 + a5;
  p = p * x2 + a3;
  p = p * x2 + a1;
  p = p * c;
  float q = b6;
  q = q * x2 + b4;
  q = q * x2 + b2;
  q = q * x2 + b0;
  const float r = p / q;
  return std::abs(x) < 0.0004f ? x : r;
}

inline double tanh_approx(double x) { return std::tanh(x); }

/// Dot product accumulated in 16 independent lanes (then summed in lane
/// order), so it vectorizes without reassociation and the result depends only
/// on the operands.
template <typename T>
T dot_lanes(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t L = 16;
  T acc[L] = {};
  std::size_t c = 0;
  for (; c + L <= n; c += L)
    for (std::size_t l = 0; l < L; ++l) acc[l] += a[c + l] * b[c + l];
  for (std::size_t l = 0; c + l < n; ++l) acc[l] += a[c + l] * b[c + l];
  T s = 0;
  for (std::size_t l = 0; l < L; ++l) s += acc[l];
  return s;
}

}  // namespace srn::detail
