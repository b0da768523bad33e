#include "srn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace srn {

double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_error << " tol=" << tolerance
     << " checked=" << checked << " unchecked=" << unchecked;
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& fn,
                           const Tensor<double>& x, double eps, double tol) {
  Tensor<double> input = x.clone();
  input.set_requires_grad(true);
  return grad_check([&] { return fn(input); }, {input}, eps, tol);
}

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss,
                           std::vector<Tensor<double>> inputs, double eps, double tol,
                           std::size_t max_per_tensor, std::uint64_t seed) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.numel(), 0.0);
  }

  GradCheckReport report;
  report.tolerance = tol;
  std::mt19937_64 rng(seed);
  NoGradGuard no_grad;
  const double centre = loss().item();
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto values = inputs[ti].mutable_data();
    std::vector<std::size_t> probe(values.size());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (max_per_tensor > 0 && probe.size() > max_per_tensor) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(max_per_tensor);
      std::sort(probe.begin(), probe.end());
    }
    for (std::size_t i : probe) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = loss().item();
      values[i] = saved - eps;
      const double down = loss().item();
      values[i] = saved;

      GradCheckEntry e;
      e.tensor = ti;
      e.index = i;
      e.analytic = analytic[ti][i];
      e.numeric = (up - down) / (2 * eps);
      // One-sided slopes that disagree mean the probe straddles a kink
      // (relu at zero), where the central difference is meaningless.
      const double kink = gradient_rel_error((up - centre) / eps, (centre - down) / eps);
      e.checked = !(e.analytic == 0.0 && e.numeric == 0.0) && kink <= 1e-2;
      e.rel_error = e.checked ? gradient_rel_error(e.analytic, e.numeric) : 0.0;
      if (e.checked) {
        ++report.checked;
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      } else {
        ++report.unchecked;
      }
      report.entries.push_back(e);
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace srn
