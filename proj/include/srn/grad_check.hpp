#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srn/tensor.hpp"

namespace srn {

struct GradCheckEntry {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
  // False where both derivatives vanish exactly (piecewise-constant paths such
  // as argmax) or the two one-sided slopes disagree by more than 1%; such
  // entries are reported but not judged.
  bool checked = true;
};

struct GradCheckReport {
  double max_rel_error = 0;
  double tolerance = 0;
  std::size_t checked = 0;
  std::size_t unchecked = 0;
  bool passed = true;
  std::vector<GradCheckEntry> entries;

  std::string summary() const;
};

/// |a - n| / max(|a|, |n|, 1e-3): relative for ordinary gradients, absolute
/// below the floor where central differences lose relative accuracy.
double gradient_rel_error(double analytic, double numeric);

/// Central differences (f(x+eps) - f(x-eps)) / (2 eps) against backward() for
/// a scalar function of one tensor.
GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                           const Tensor<double>& x, double eps = 1e-5, double tol = 1e-4);

/// Same check over several tensors that `loss` reads. Values are perturbed in
/// place and restored. With max_per_tensor > 0 a seeded random subset of each
/// tensor's elements is probed.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<Tensor<double>> inputs, double eps = 1e-5,
                           double tol = 1e-4, std::size_t max_per_tensor = 0,
                           std::uint64_t seed = 0);

}  // namespace srn
