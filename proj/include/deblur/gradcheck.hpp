#pragma once

#include "deblur/rng.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace deblur {

// A differentiable buffer under test: the harness perturbs `param` and
// compares `grad` (filled by the analytic backward) against central finite
// differences of the scalar forward.
struct GradSlot {
    std::string name;
    double* param = nullptr;
    const double* grad = nullptr;
    std::size_t size = 0;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    std::string worst_slot;
    std::size_t worst_index = 0;
    int coords_checked = 0;
};

// compute_grads() must fill every slot's grad buffer for the current
// parameter values; forward_scalar() re-evaluates the scalar objective.
// Relative error |a-n|/(|a|+|n|), coordinates with |a|+|n| < 1e-8 excluded.
// ReLU kinks inside the stencil are detected by comparing the difference
// quotient at two widths; the estimate is narrowed away from the kink, and a
// coordinate is dropped only when no valid stencil exists.
GradCheckReport gradcheck(const std::vector<GradSlot>& slots,
                          const std::function<void()>& compute_grads,
                          const std::function<double()>& forward_scalar,
                          double tolerance, double fd_epsilon,
                          Rng& rng, int samples_per_slot);

} // namespace deblur
