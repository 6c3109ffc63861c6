#pragma once

// Finite-difference verification of reverse-mode gradients. This is the
// independent oracle for every loss in the project: it never touches the
// reverse rules it checks, only repeated primal evaluations.

#include <cmath>
#include <vector>

#include "gridcast/ops.hpp"
#include "gridcast/tape.hpp"
#include "gridcast/tensor.hpp"

namespace gridcast {

// Max over all input coordinates of the relative error between the analytic
// gradient (reverse mode) and central finite differences.
// f: callable(const std::vector<Tensor<T>>&) -> scalar Tensor<T>.
template <typename T, typename F>
double grad_check(F&& f, const std::vector<Tensor<T>>& inputs, T eps) {
  static_assert(sizeof(T) >= 8, "grad_check requires 64-bit inputs");
  if (!(eps >= T{1e-7} && eps <= T{1e-3}))
    contract_error("grad_check: eps out of [1e-7, 1e-3]");

  // analytic pass
  Tape<T> tape;
  std::vector<Tensor<T>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  Tensor<T> loss = f(leaves);
  ensure_finite(loss, "grad_check: loss");
  GradMap<T> grads = tape.backward(loss);

  // numeric pass, one coordinate at a time
  double max_rel = 0.0;
  std::vector<Tensor<T>> probe;
  probe.reserve(inputs.size());
  for (const auto& x : inputs) probe.push_back(x.clone());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<T> g = grads.get_or_zeros(leaves[i]);
    for (std::int64_t c = 0; c < probe[i].numel(); ++c) {
      const T saved = probe[i].data()[c];
      probe[i].data()[c] = saved + eps;
      const T up = f(probe).item();
      probe[i].data()[c] = saved - eps;
      const T down = f(probe).item();
      probe[i].data()[c] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        contract_error("grad_check: non-finite intermediate");
      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) /
                             (2.0 * static_cast<double>(eps));
      const double analytic = static_cast<double>(g.data()[c]);
      const double rel =
          std::fabs(analytic - numeric) / (std::fabs(analytic) + std::fabs(numeric) + 1e-12);
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace gridcast
