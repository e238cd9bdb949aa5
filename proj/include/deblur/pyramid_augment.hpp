#pragma once

#include "deblur/blur_synth.hpp"
#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

#include <vector>

namespace deblur {

// Gaussian pyramid with the 5-tap binomial filter (1,4,6,4,1)/16 applied
// separably before 2x decimation. levels[0] is the input; each level halves
// the spatial size exactly, so the input must be divisible by 2^(levels-1).
std::vector<Tensor> gaussian_pyramid(const Tensor& image, int levels);

// Blurry/sharp pyramids of one training pair, finest level first.
struct PyramidPair {
    std::vector<Tensor> blurry;
    std::vector<Tensor> sharp;
};

PyramidPair build_pyramid_pair(const Tensor& blurry, const Tensor& sharp, int levels);

struct AugmentConfig {
    bool flip_h = true;
    bool flip_v = true;
    bool rotate = true;             // right angles only, keeps the pixel grid exact
    bool permute_channels = true;
    bool saturation = true;
    bool noise = true;              // blurry image only
    double sat_lo = 0.5;
    double sat_hi = 1.5;
    double noise_hyper_std = 2.0 / 255.0; // per-image sigma ~ |N(0, hyper^2)|
    std::uint64_t seed = 0;
};

// Applies flips / rotation / channel permutation / saturation with identical
// draws to both images, then Gaussian noise to the blurry one only, then
// clips both to [0,1].
BlurPair augment(const BlurPair& pair, const AugmentConfig& cfg, Rng& rng);

// Hexcone HSV with all components in [0,1]. Round trip is exact to 1e-10
// away from the saturation-zero degeneracy.
Tensor rgb_to_hsv(const Tensor& image);
Tensor hsv_to_rgb(const Tensor& image);

// Exposed separately so geometric behavior is testable in isolation.
Tensor flip_horizontal(const Tensor& t);
Tensor flip_vertical(const Tensor& t);
Tensor rotate90(const Tensor& t, int quarter_turns);
Tensor permute_rgb(const Tensor& t, int permutation_index); // 0..5
Tensor scale_saturation(const Tensor& rgb, double factor);

} // namespace deblur
