#pragma once

#include "deblur/adam.hpp"
#include "deblur/losses.hpp"
#include "deblur/model.hpp"
#include "deblur/pyramid_augment.hpp"
#include "deblur/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace deblur {

struct TrainConfig {
    int batch_size = 4;
    double initial_lr = 5e-5;
    std::int64_t lr_decay_step = 150000; // lr is divided by 10 after each
    double lr_decay_factor = 0.1;
    std::int64_t total_iterations = 450000;
    double lambda = 1e-4;
    std::uint64_t seed = 0;
    int patch_size = 256;
    bool adv_non_saturating = false;
    std::int64_t checkpoint_every = 0; // 0 = final checkpoint only
    std::int64_t log_every = 1;
    AugmentConfig aug;
    GeneratorSpec gen;
    DiscriminatorSpec disc;

    static TrainConfig desk();
    static TrainConfig paper();

    // lr(i) = initial * factor^floor(i / decay_step).
    double lr_at(std::int64_t iteration) const;
    void validate() const;
};

struct TrainState {
    TrainConfig cfg;
    GeneratorParams g;
    DiscriminatorParams d;
    AdamState adam_g;
    AdamState adam_d;
    std::int64_t iteration = 0;

    double current_lr() const { return cfg.lr_at(iteration); }
};

TrainState init_train_state(const TrainConfig& cfg);

// Moment buffers sized for a network, and one ADAM step across all of its
// parameters in visitor order.
AdamState make_adam_for(GeneratorParams& params);
AdamState make_adam_for(DiscriminatorParams& params);
void apply_adam(GeneratorParams& params, GeneratorGrads& grads, AdamState& state, double lr);
void apply_adam(DiscriminatorParams& params, DiscriminatorGrads& grads, AdamState& state, double lr);

// One joint step: discriminator update on real sharps vs generated finest
// latents, then a generator update on content + lambda * adversarial loss.
// With lambda = 0 the discriminator is skipped entirely. Throws
// NumericalError if any loss or gradient goes non-finite.
LossBreakdown train_step(TrainState& state, const std::vector<PyramidPair>& batch);

// Deterministic batch assembly: pair choice, crop window and augmentation
// draws all derive from (seed, iteration, slot).
std::vector<PyramidPair> sample_batch(const std::vector<BlurPair>& dataset,
                                      const TrainConfig& cfg, std::int64_t iteration);

struct SmokeReport {
    double initial_content = 0.0;
    double final_content = 0.0;
    double train_psnr = 0.0;        // finest-level latent vs sharp, dataset mean
    double baseline_psnr = 0.0;     // blurry vs sharp, dataset mean
    std::vector<double> content_trace;
};

// Content-only overfit run on a small fixed dataset; reports initial/final
// loss and train-set PSNR against the blurry baseline.
SmokeReport overfit_smoke(TrainState& state, const std::vector<BlurPair>& dataset,
                          std::int64_t iterations);

// Single file: plain-text header with the model configuration and a
// (key, shape, offset) manifest, then the flat little-endian doubles.
void save_checkpoint(TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);
// Loads and validates against an expected configuration (resume path).
TrainState load_checkpoint(const std::string& path, const TrainConfig& expected);

} // namespace deblur
