#pragma once

#include "deblur/ops.hpp"
#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace deblur {

// Multi-scale generator configuration. The full-scale configuration is
// 3 scales x (19 ResBlocks + head/tail convs) = 40 convolutions per scale,
// 120 in total, with 64 feature channels and 5x5 filters throughout.
struct GeneratorSpec {
    int scales = 3;
    int resblocks_per_scale = 19;
    int feature_channels = 64;
    int filter_size = 5;
    int upconv_kernel = 4;
    int upconv_stride = 2;
    int image_channels = 3;

    static GeneratorSpec paper();
    // Small enough for CPU gradient checks and overfit tests.
    static GeneratorSpec desk();

    int convs_per_scale() const { return 2 * resblocks_per_scale + 2; }
    int total_convs() const { return scales * convs_per_scale(); }
    int upconv_count() const { return scales - 1; }
    int conv_pad() const { return (filter_size - 1) / 2; }
    int upconv_pad() const { return (upconv_kernel - upconv_stride) / 2; }
    // Analytic receptive field of one stride-1 scale stage.
    int receptive_field() const { return 1 + convs_per_scale() * (filter_size - 1); }

    void validate() const;
    bool operator==(const GeneratorSpec&) const = default;
};

struct ResBlockParams {
    ConvParams conv1;
    ConvParams conv2;
};

// One scale stage: head conv -> ResBlocks -> tail conv back to image
// channels; every stage except the finest also owns the upconvolution that
// feeds its features to the next finer stage.
struct StageParams {
    ConvParams head;
    std::vector<ResBlockParams> blocks;
    ConvParams tail;
    ConvParams up;
    bool has_up = false;
};

struct GeneratorParams {
    GeneratorSpec spec;
    std::vector<StageParams> stages; // [0] = finest scale (level 1)
};

GeneratorParams init_generator(const GeneratorSpec& spec, std::uint64_t seed);

// x + conv2(relu(conv1(x))): shortcut add, no activation after the addition,
// no batch normalization.
Tensor resblock_forward(const Tensor& x, const ResBlockParams& p);

struct ResBlockCache {
    Tensor input;
    Tensor pre1; // conv1 output before the ReLU
};

struct StageCache {
    Tensor input;    // head conv input (blurry or concat with upsampled feature)
    Tensor head_out;
    std::vector<ResBlockCache> blocks;
    Tensor feat;     // after the last ResBlock; feeds both tail and upconv
    Tensor up_out;   // empty on the finest stage
};

struct StageResult {
    Tensor latent;
    Tensor up_feat;  // empty on the finest stage
};

// coarser_feat empty at the coarsest scale. The latent is predicted as a
// residual on the blurry input: latent = blurry + tail(features).
StageResult stage_forward(const Tensor& blurry_k, const Tensor& coarser_feat,
                          const StageParams& p, const GeneratorSpec& spec,
                          StageCache* cache = nullptr);

struct GeneratorForward {
    std::vector<StageCache> stages; // [0] = finest
    std::vector<Tensor> latents;    // [0] = finest, shapes equal the inputs
};

// pyramid[0] is the finest level; runs coarsest -> finest threading the
// upconvolved features.
std::vector<Tensor> generator_forward(const std::vector<Tensor>& pyramid,
                                      const GeneratorParams& params,
                                      GeneratorForward* cache = nullptr);

struct GeneratorGrads {
    std::vector<StageParams> stages;   // same layout as the parameters
    std::vector<Tensor> blurry;        // gradients w.r.t. the input pyramid
};

GeneratorGrads generator_backward(const GeneratorForward& fwd,
                                  const GeneratorParams& params,
                                  const std::vector<Tensor>& grad_latents);

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscConvSpec {
    int out_channels = 0;
    int stride = 1;

    bool operator==(const DiscConvSpec&) const = default;
};

// Convolution stack (5x5 filters, LeakyReLU after every conv), then a square
// fully-connected layer whose outputs are averaged into one logit and passed
// through a sigmoid. The full-scale layer list expects 256x256 inputs and
// ends at 1x1x1024.
struct DiscriminatorSpec {
    int in_channels = 3;
    int filter_size = 5;
    double leaky_slope = 0.2;
    int input_size = 256;
    std::vector<DiscConvSpec> convs;
    int fc_width = 1024;

    static DiscriminatorSpec paper();
    // Stride-2 stack sized for a (power-of-two) desk patch.
    static DiscriminatorSpec desk(int input_size);

    int conv_pad() const { return (filter_size - 1) / 2; }
    std::vector<int> spatial_trace() const; // size after each conv
    void validate() const;
    bool operator==(const DiscriminatorSpec&) const = default;
};

struct DiscriminatorParams {
    DiscriminatorSpec spec;
    std::vector<ConvParams> convs;
    ConvParams fc; // fc_width x fc_width dense layer stored as a 1x1 conv
};

DiscriminatorParams init_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);

struct DiscriminatorCache {
    std::vector<Tensor> conv_in;  // input of every conv (incl. the fc)
    std::vector<Tensor> conv_pre; // pre-activation outputs
    Tensor fc_out;
    std::vector<double> logits;
    std::vector<double> probs;
};

// Returns one probability in (0,1) per batch item.
std::vector<double> discriminator_forward(const Tensor& images,
                                          const DiscriminatorParams& params,
                                          DiscriminatorCache* cache = nullptr);

struct DiscriminatorGrads {
    std::vector<ConvParams> convs;
    ConvParams fc;
    Tensor input;
};

DiscriminatorGrads discriminator_backward(const DiscriminatorCache& cache,
                                          const DiscriminatorParams& params,
                                          const std::vector<double>& grad_probs);

// ---------------------------------------------------------------------------
// Parameter traversal (fixed order; shared by the optimizer and checkpoints)
// ---------------------------------------------------------------------------

using ParamVisitor = std::function<void(const std::string& key, double* data,
                                        std::size_t size, Shape shape)>;

void visit_params(GeneratorParams& p, const ParamVisitor& fn);
void visit_params(DiscriminatorParams& p, const ParamVisitor& fn);
void visit_grads(GeneratorGrads& g, const GeneratorParams& p, const ParamVisitor& fn);
void visit_grads(DiscriminatorGrads& g, const DiscriminatorParams& p, const ParamVisitor& fn);

std::size_t param_count(GeneratorParams& p);
std::size_t param_count(DiscriminatorParams& p);

} // namespace deblur
