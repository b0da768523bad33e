#pragma once

#include <cstring>
#include <random>
#include <span>
#include <vector>

#include "srn/random.hpp"
#include "srn/tensor.hpp"

namespace test {

template <typename T>
srn::Tensor<T> random_tensor(srn::Shape shape, std::mt19937_64& rng, bool requires_grad = true,
                             double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(srn::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(lo + (hi - lo) * srn::uniform01(rng));
  return srn::Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::vector<int> out(n);
  for (auto& l : out) l = static_cast<int>(srn::uniform01(rng) * classes);
  return out;
}

template <typename T>
bool bit_equal(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i], &b[i], sizeof(T)) != 0) return false;
  return true;
}

}  // namespace test
