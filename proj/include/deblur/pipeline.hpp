#pragma once

#include "deblur/blur_synth.hpp"
#include "deblur/gradcheck.hpp"
#include "deblur/trainer.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace deblur {

// All subcommands accept an optional key-value config file; explicit options
// override it. Every run echoes its effective configuration to
// <output>/run_config.txt, and that file can be fed back as --config to
// reproduce the run byte for byte.

struct SynthOptions {
    std::string input_dir;
    std::string output_dir;
    std::vector<int> windows = {7, 9, 11, 13};
    int stride = 1;
    double gamma = 2.2;
    std::uint64_t seed = 0;
};

struct SynthSummary {
    int pairs = 0;
    bool too_short = false;
};

// Reads a frame directory (PNG files in lexicographic order plus meta.txt
// declaring fps), writes blur/ and sharp/ subdirectories and manifest.txt.
SynthSummary run_synth(const SynthOptions& opt);

// Loads a dataset directory produced by run_synth.
std::vector<BlurPair> load_dataset(const std::string& dataset_dir);

struct AugmentPreviewOptions {
    std::string blur_path;
    std::string sharp_path;
    std::string output_dir;
    int count = 8;
    std::uint64_t seed = 0;
    AugmentConfig aug;
};

void run_augment_preview(const AugmentPreviewOptions& opt);

struct TrainOptions {
    std::string dataset_dir;
    std::string output_dir;
    std::string preset = "desk";            // "desk" or "paper"
    std::string config_path;                // optional key-value file
    std::string resume_checkpoint;          // optional
    std::vector<std::pair<std::string, std::string>> overrides;
};

struct TrainSummary {
    std::int64_t iterations = 0;
    LossBreakdown last;
    std::string checkpoint_path;
};

TrainSummary run_train(const TrainOptions& opt);

struct InferOptions {
    std::string checkpoint;
    std::string input_path; // file or directory
    std::string output_dir;
    bool save_pyramid = false;
};

struct InferSummary {
    int written = 0;
    std::vector<std::string> failed;
};

InferSummary run_infer(const InferOptions& opt);

struct EvalOptions {
    std::string checkpoint;  // empty = identity model (blurry passthrough)
    std::string dataset_dir;
    std::string output_path; // text report; a .csv companion is written too
    int scales = 0;          // 0 = take from the checkpoint
    bool quantize = false;
};

struct EvalSummary {
    int images = 0;
    int errors = 0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_msssim = 0.0; // NaN when images are too small for 5 levels
};

EvalSummary run_eval(const EvalOptions& opt);

struct GradCheckSummary {
    std::vector<std::pair<std::string, GradCheckReport>> checks;
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst;
    int coords_checked = 0;
};

// scope: "layer", "resblock", "generator" or "discriminator".
GradCheckSummary run_gradcheck(const std::string& scope, std::uint64_t seed);

// Key-value config handling shared by the CLI and the run functions.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);
void apply_train_key(TrainOptions& run, TrainConfig& cfg,
                     const std::string& key, const std::string& value);
TrainConfig resolve_train_config(const TrainOptions& opt, std::string* dataset_dir,
                                 std::string* output_dir, std::string* resume);

} // namespace deblur
