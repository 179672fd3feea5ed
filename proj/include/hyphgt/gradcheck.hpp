#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hyphgt/optim.hpp"
#include "hyphgt/tensor.hpp"

namespace hyphgt::ad {

struct GradCheckGroup {
    std::string name;
    std::size_t size = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradCheckGroup> groups;
};

// Compares reverse-mode gradients of `loss` against central differences
// (f(θ+eps) - f(θ-eps)) / (2 eps), entry by entry.
//
// The error for one entry is |analytic - numeric| / max(1, |numeric|); the
// report keeps the worst entry per parameter and overall. `loss` must be
// deterministic and free of side effects. Points where the function has a
// kink (relu at 0, |x| at 0, clamps at their floor) are outside the contract:
// the one-sided derivative the tape reports will not match the central
// difference there.
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss, const std::vector<Parameter>& params,
                                  double eps = 1e-5);

}  // namespace hyphgt::ad
