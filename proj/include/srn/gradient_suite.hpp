#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srn/grad_check.hpp"

namespace srn {

struct ModuleGradResult {
  std::string module;
  std::size_t instances = 0;
  std::size_t passed = 0;
  std::size_t probes = 0;
  std::size_t skipped = 0;  // probes at kinks or with both derivatives zero
  double max_rel_error = 0;
  double seconds = 0;

  bool ok() const { return instances > 0 && passed == instances; }
};

/// Module names accepted by gradient_suite, in run order.
const std::vector<std::string>& gradient_suite_modules();

/// Central-difference checks in double precision on `instances` randomly
/// sized instances of each module (all of them when `modules` is empty).
/// Each instance draws fresh shapes, parameters and inputs from `seed`.
std::vector<ModuleGradResult> gradient_suite(std::size_t instances, std::uint64_t seed,
                                             const std::vector<std::string>& modules = {},
                                             double tolerance = 1e-4);

}  // namespace srn
