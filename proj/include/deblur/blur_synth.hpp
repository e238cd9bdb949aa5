#pragma once

#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

#include <vector>

namespace deblur {

// Gamma-curve camera response model, g(x) = x^(1/gamma).
struct GammaCRF {
    double gamma = 2.2;
};

// Ordered observed frames sharing one shape, with the capture frame rate.
// A window of M frames simulates an exposure of M/fps seconds.
struct FrameSequence {
    std::vector<Tensor> frames;
    double fps = 240.0;
};

// Spatially uniform blur kernel for the comparison baseline. Taps must be
// nonnegative, odd-dimensioned and sum to 1.
struct UniformKernel {
    std::vector<double> taps;
    int kh = 0;
    int kw = 0;

    static UniformKernel box(int size);
    static UniformKernel delta();
};

struct BlurPair {
    Tensor blurry;
    Tensor sharp;
    int window_start = 0;
    int window_length = 0;
    double gamma = 2.2;
};

// Observed -> observed mapping of the CRF; inputs must be nonnegative.
Tensor crf_apply(const Tensor& signal, const GammaCRF& crf);
// Inverse mapping x^gamma; crf_invert(crf_apply(x)) == x within 1e-12.
Tensor crf_invert(const Tensor& observed, const GammaCRF& crf);

// B = g((1/M) * sum_i g^-1(frame_i)); averaging happens in the linear domain,
// never on observed values.
Tensor synthesize_blur(const std::vector<Tensor>& window, const GammaCRF& crf);

// Mid-frame of the window: index M/2 (for odd M the exact center, for an
// externally supplied even M the later of the two central frames).
const Tensor& select_sharp(const std::vector<Tensor>& window);

// Per-channel 2-D convolution with reflected borders plus i.i.d. Gaussian
// noise of std noise_sigma, clipped to [0,1]. noise_sigma = 0 is deterministic.
Tensor uniform_kernel_blur(const Tensor& sharp, const UniformKernel& k,
                           double noise_sigma, Rng& rng);

struct DatasetResult {
    std::vector<BlurPair> pairs;
    bool too_short = false; // sequence shorter than the largest window
};

// Slides windows at the given stride; each placement draws its window length
// uniformly from window_sizes using a per-window stream of (seed, index).
// Window sizes must be odd so the mid-frame is unambiguous.
DatasetResult generate_dataset(const FrameSequence& sequence,
                               const std::vector<int>& window_sizes,
                               int stride, const GammaCRF& crf,
                               std::uint64_t seed);

} // namespace deblur
