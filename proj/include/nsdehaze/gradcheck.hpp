#ifndef NSDEHAZE_GRADCHECK_HPP
#define NSDEHAZE_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nsdehaze/autograd.hpp"

namespace nsd::ag {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of the relative error.
  double floor = 1e-4;
  /// Elements probed per input; all elements when the input is smaller.
  std::size_t max_probes = 24;
  std::uint64_t seed = 7;
  /// Probes whose differences at `step` and `step / 2` disagree by more than
  /// this (relative) straddle a kink (ReLU, max, clamp) and are replaced.
  double kink_tolerance = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::size_t kinks = 0;  // probes replaced because the function is not smooth there
  std::string worst;      // "input[i] element j: analytic a, numeric n"
};

/// Compares reverse-mode gradients of the scalar `loss()` against central
/// differences for a sample of elements of every input.
inline GradCheckResult gradcheck(const std::function<Var()>& loss, std::vector<Var> inputs,
                                 const GradCheckOptions& opt = {}) {
  for (Var& v : inputs) {
    v.zero_grad();
    v.set_requires_grad(true);
  }
  backward(loss());
  GradCheckResult result;
  std::mt19937_64 rng(opt.seed);
  auto rel = [&](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), opt.floor});
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Var& v = inputs[k];
    const std::size_t n = v.value().numel();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const Tensor analytic = v.grad().empty() ? Tensor(v.shape(), 0.0) : v.grad();
    NoGradGuard guard;
    auto central = [&](double& x, double h) {
      const double orig = x;
      x = orig + h;
      const double fp = loss().value().item();
      x = orig - h;
      const double fm = loss().value().item();
      x = orig;
      return (fp - fm) / (2.0 * h);
    };
    std::size_t taken = 0;
    for (std::size_t i : idx) {
      if (taken == opt.max_probes) break;
      double& x = v.mutable_value()[i];
      const double numeric = central(x, opt.step);
      if (rel(numeric, central(x, 0.5 * opt.step)) > opt.kink_tolerance) {
        ++result.kinks;
        continue;
      }
      ++taken;
      ++result.probes;
      const double a = analytic[i];
      const double e = rel(a, numeric);
      if (e >= result.max_rel_error) {
        result.max_rel_error = e;
        result.worst = "input[" + std::to_string(k) + "] element " + std::to_string(i) + ": analytic " +
                       std::to_string(a) + ", numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace nsd::ag

#endif  // NSDEHAZE_GRADCHECK_HPP
