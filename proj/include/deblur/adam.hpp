#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deblur {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment buffers for one parameter tensor.
struct AdamBuffers {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamBuffers(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

// Per-network optimizer state: one buffer pair per parameter tensor, visited
// in a fixed order, plus a shared step counter for bias correction.
struct AdamState {
    std::vector<AdamBuffers> buffers;
    std::int64_t step = 0;
    AdamHyper hyper;
};

// One bias-corrected ADAM update, in place. `step` is the post-increment step
// counter (1 on the first call). Throws NumericalError on non-finite grads.
void adam_update(std::span<double> param, std::span<const double> grad,
                 AdamBuffers& buf, std::int64_t step, const AdamHyper& hp, double lr);

} // namespace deblur
