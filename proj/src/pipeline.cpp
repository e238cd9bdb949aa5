#include "deblur/pipeline.hpp"

#include "deblur/errors.hpp"
#include "deblur/image_io.hpp"
#include "deblur/metrics.hpp"
#include "deblur/ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace deblur {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

double parse_double(const std::string& s) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw ValueError("");
        return v;
    } catch (const std::exception&) {
        throw ValueError("not a number: '" + s + "'");
    }
}

std::int64_t parse_int(const std::string& s) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size())
            throw ValueError("");
        return v;
    } catch (const std::exception&) {
        throw ValueError("not an integer: '" + s + "'");
    }
}

std::uint64_t parse_u64(const std::string& s) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size())
            throw ValueError("");
        return v;
    } catch (const std::exception&) {
        throw ValueError("not an unsigned integer: '" + s + "'");
    }
}

bool parse_bool(const std::string& s) {
    if (s == "1" || s == "true")
        return true;
    if (s == "0" || s == "false")
        return false;
    throw ValueError("not a boolean: '" + s + "'");
}

std::string int_list_str(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec)
        throw IoError("cannot create directory " + path + ": " + ec.message());
}

std::vector<std::string> sorted_pngs(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw IoError(dir + " is not a directory");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".png")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

void write_echo(const std::string& out_dir,
                const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ofstream f(fs::path(out_dir) / "run_config.txt");
    if (!f)
        throw IoError("cannot write run_config.txt in " + out_dir);
    f << "# effective configuration; feed back with --config to reproduce the run\n";
    for (const auto& [k, v] : entries)
        f << k << " " << v << "\n";
}

std::string zero_pad(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width)
        s.insert(s.begin(), '0');
    return s;
}

} // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open config file " + path);
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        const auto space = line.find(' ', first);
        if (space == std::string::npos)
            throw ValueError("malformed config line (expected 'key value'): " + line);
        entries.emplace_back(line.substr(first, space - first), line.substr(space + 1));
    }
    return entries;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

namespace {

double read_fps(const std::string& input_dir) {
    const fs::path meta = fs::path(input_dir) / "meta.txt";
    std::ifstream f(meta);
    if (!f)
        throw IoError("missing metadata file " + meta.string() + " (expected a line 'fps <n>')");
    std::string key;
    double fps = 0.0;
    while (f >> key) {
        if (key == "fps") {
            if (!(f >> fps) || !(fps > 0.0))
                throw ValueError("invalid fps in " + meta.string());
            return fps;
        }
        std::string rest;
        std::getline(f, rest);
    }
    throw ValueError("no fps entry in " + meta.string());
}

} // namespace

SynthSummary run_synth(const SynthOptions& opt) {
    if (opt.input_dir.empty() || opt.output_dir.empty())
        throw ValueError("synth: input and output directories are required");

    FrameSequence seq;
    seq.fps = read_fps(opt.input_dir);
    for (const std::string& file : sorted_pngs(opt.input_dir))
        seq.frames.push_back(read_image(file));
    if (seq.frames.empty())
        throw IoError("synth: no .png frames in " + opt.input_dir);

    GammaCRF crf{opt.gamma};
    DatasetResult result = generate_dataset(seq, opt.windows, opt.stride, crf, opt.seed);

    ensure_dir(opt.output_dir);
    ensure_dir((fs::path(opt.output_dir) / "blur").string());
    ensure_dir((fs::path(opt.output_dir) / "sharp").string());

    std::ofstream manifest(fs::path(opt.output_dir) / "manifest.txt");
    if (!manifest)
        throw IoError("synth: cannot write manifest in " + opt.output_dir);
    manifest << "# deblur-synth-manifest v1\n";
    manifest << "# fps " << fmt(seq.fps) << "\n";
    manifest << "# frames " << seq.frames.size() << "\n";
    for (std::size_t i = 0; i < result.pairs.size(); ++i) {
        const BlurPair& pair = result.pairs[i];
        const std::string name = zero_pad(static_cast<int>(i), 6) + ".png";
        write_image(pair.blurry, (fs::path(opt.output_dir) / "blur" / name).string());
        write_image(pair.sharp, (fs::path(opt.output_dir) / "sharp" / name).string());
        manifest << "blur/" << name << " sharp/" << name << " " << pair.window_start
                 << " " << pair.window_length << " " << fmt(pair.gamma) << "\n";
    }
    manifest.close();

    write_echo(opt.output_dir, {{"subcommand", "synth"},
                                {"input", opt.input_dir},
                                {"output", opt.output_dir},
                                {"windows", int_list_str(opt.windows)},
                                {"stride", std::to_string(opt.stride)},
                                {"gamma", fmt(opt.gamma)},
                                {"seed", std::to_string(opt.seed)}});

    SynthSummary s;
    s.pairs = static_cast<int>(result.pairs.size());
    s.too_short = result.too_short;
    return s;
}

std::vector<BlurPair> load_dataset(const std::string& dataset_dir) {
    const fs::path manifest_path = fs::path(dataset_dir) / "manifest.txt";
    std::ifstream f(manifest_path);
    if (!f)
        throw IoError("no manifest.txt in " + dataset_dir);
    std::vector<BlurPair> pairs;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::stringstream ss(line);
        std::string blur_rel, sharp_rel, gamma_str;
        int start = 0, len = 0;
        if (!(ss >> blur_rel >> sharp_rel >> start >> len >> gamma_str))
            throw IoError("malformed manifest line: " + line);
        BlurPair p;
        p.blurry = read_image((fs::path(dataset_dir) / blur_rel).string());
        p.sharp = read_image((fs::path(dataset_dir) / sharp_rel).string());
        p.window_start = start;
        p.window_length = len;
        p.gamma = parse_double(gamma_str);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// augment-preview
// ---------------------------------------------------------------------------

void run_augment_preview(const AugmentPreviewOptions& opt) {
    if (opt.count < 1)
        throw ValueError("augment-preview: count must be >= 1");
    BlurPair pair;
    pair.blurry = read_image(opt.blur_path);
    pair.sharp = read_image(opt.sharp_path);
    ensure_dir(opt.output_dir);
    for (int i = 0; i < opt.count; ++i) {
        Rng rng = Rng::stream(opt.seed, {0x707265766965ULL /* "previe" */,
                                         static_cast<std::uint64_t>(i)});
        BlurPair aug = augment(pair, opt.aug, rng);
        const std::string stem = "preview_" + zero_pad(i, 3);
        write_image(aug.blurry, (fs::path(opt.output_dir) / (stem + "_blur.png")).string());
        write_image(aug.sharp, (fs::path(opt.output_dir) / (stem + "_sharp.png")).string());
    }
    write_echo(opt.output_dir, {{"subcommand", "augment-preview"},
                                {"blur", opt.blur_path},
                                {"sharp", opt.sharp_path},
                                {"out", opt.output_dir},
                                {"count", std::to_string(opt.count)},
                                {"seed", std::to_string(opt.seed)}});
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void apply_train_key(TrainOptions& run, TrainConfig& cfg,
                     const std::string& key, const std::string& value) {
    if (key == "subcommand") {
        if (value != "train")
            throw ValueError("config file was written by subcommand '" + value + "'");
    } else if (key == "dataset") {
        run.dataset_dir = value;
    } else if (key == "out") {
        run.output_dir = value;
    } else if (key == "resume") {
        run.resume_checkpoint = value;
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(parse_int(value));
    } else if (key == "initial_lr") {
        cfg.initial_lr = parse_double(value);
    } else if (key == "lr_decay_step") {
        cfg.lr_decay_step = parse_int(value);
    } else if (key == "lr_decay_factor") {
        cfg.lr_decay_factor = parse_double(value);
    } else if (key == "total_iterations") {
        cfg.total_iterations = parse_int(value);
    } else if (key == "lambda") {
        cfg.lambda = parse_double(value);
    } else if (key == "seed") {
        cfg.seed = parse_u64(value);
    } else if (key == "patch_size") {
        cfg.patch_size = static_cast<int>(parse_int(value));
    } else if (key == "adv_non_saturating") {
        cfg.adv_non_saturating = parse_bool(value);
    } else if (key == "checkpoint_every") {
        cfg.checkpoint_every = parse_int(value);
    } else if (key == "log_every") {
        cfg.log_every = parse_int(value);
    } else if (key == "aug_flip_h") {
        cfg.aug.flip_h = parse_bool(value);
    } else if (key == "aug_flip_v") {
        cfg.aug.flip_v = parse_bool(value);
    } else if (key == "aug_rotate") {
        cfg.aug.rotate = parse_bool(value);
    } else if (key == "aug_permute_channels") {
        cfg.aug.permute_channels = parse_bool(value);
    } else if (key == "aug_saturation") {
        cfg.aug.saturation = parse_bool(value);
    } else if (key == "aug_noise") {
        cfg.aug.noise = parse_bool(value);
    } else if (key == "aug_sat_lo") {
        cfg.aug.sat_lo = parse_double(value);
    } else if (key == "aug_sat_hi") {
        cfg.aug.sat_hi = parse_double(value);
    } else if (key == "aug_noise_hyper_std") {
        cfg.aug.noise_hyper_std = parse_double(value);
    } else if (key == "gen_scales") {
        cfg.gen.scales = static_cast<int>(parse_int(value));
    } else if (key == "gen_resblocks") {
        cfg.gen.resblocks_per_scale = static_cast<int>(parse_int(value));
    } else if (key == "gen_channels") {
        cfg.gen.feature_channels = static_cast<int>(parse_int(value));
    } else if (key == "gen_filter") {
        cfg.gen.filter_size = static_cast<int>(parse_int(value));
    } else if (key == "gen_upconv_kernel") {
        cfg.gen.upconv_kernel = static_cast<int>(parse_int(value));
    } else if (key == "gen_upconv_stride") {
        cfg.gen.upconv_stride = static_cast<int>(parse_int(value));
    } else if (key == "disc_input_size") {
        cfg.disc.input_size = static_cast<int>(parse_int(value));
    } else if (key == "disc_fc_width") {
        cfg.disc.fc_width = static_cast<int>(parse_int(value));
    } else if (key == "disc_filter") {
        cfg.disc.filter_size = static_cast<int>(parse_int(value));
    } else if (key == "disc_leaky_slope") {
        cfg.disc.leaky_slope = parse_double(value);
    } else if (key == "disc_convs") {
        cfg.disc.convs.clear();
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) {
            const auto colon = part.find(':');
            if (colon == std::string::npos)
                throw ValueError("disc_convs entries must look like out:stride");
            cfg.disc.convs.push_back({static_cast<int>(parse_int(part.substr(0, colon))),
                                      static_cast<int>(parse_int(part.substr(colon + 1)))});
        }
    } else {
        throw ValueError("unknown config key '" + key + "'");
    }
}

TrainConfig resolve_train_config(const TrainOptions& opt, std::string* dataset_dir,
                                 std::string* output_dir, std::string* resume) {
    TrainConfig cfg;
    if (opt.preset == "desk" || opt.preset.empty())
        cfg = TrainConfig::desk();
    else if (opt.preset == "paper")
        cfg = TrainConfig::paper();
    else
        throw ValueError("unknown preset '" + opt.preset + "' (expected desk or paper)");

    TrainOptions run; // collects path keys from the config file
    if (!opt.config_path.empty())
        for (const auto& [k, v] : read_config_file(opt.config_path))
            apply_train_key(run, cfg, k, v);
    if (!opt.dataset_dir.empty())
        run.dataset_dir = opt.dataset_dir;
    if (!opt.output_dir.empty())
        run.output_dir = opt.output_dir;
    if (!opt.resume_checkpoint.empty())
        run.resume_checkpoint = opt.resume_checkpoint;
    for (const auto& [k, v] : opt.overrides)
        apply_train_key(run, cfg, k, v);

    if (dataset_dir)
        *dataset_dir = run.dataset_dir;
    if (output_dir)
        *output_dir = run.output_dir;
    if (resume)
        *resume = run.resume_checkpoint;
    return cfg;
}

namespace {

std::vector<std::pair<std::string, std::string>> train_echo_entries(
    const std::string& dataset, const std::string& out, const std::string& resume,
    const TrainConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("subcommand", "train");
    e.emplace_back("dataset", dataset);
    e.emplace_back("out", out);
    if (!resume.empty())
        e.emplace_back("resume", resume);
    e.emplace_back("batch_size", std::to_string(cfg.batch_size));
    e.emplace_back("initial_lr", fmt(cfg.initial_lr));
    e.emplace_back("lr_decay_step", std::to_string(cfg.lr_decay_step));
    e.emplace_back("lr_decay_factor", fmt(cfg.lr_decay_factor));
    e.emplace_back("total_iterations", std::to_string(cfg.total_iterations));
    e.emplace_back("lambda", fmt(cfg.lambda));
    e.emplace_back("seed", std::to_string(cfg.seed));
    e.emplace_back("patch_size", std::to_string(cfg.patch_size));
    e.emplace_back("adv_non_saturating", cfg.adv_non_saturating ? "1" : "0");
    e.emplace_back("checkpoint_every", std::to_string(cfg.checkpoint_every));
    e.emplace_back("log_every", std::to_string(cfg.log_every));
    e.emplace_back("aug_flip_h", cfg.aug.flip_h ? "1" : "0");
    e.emplace_back("aug_flip_v", cfg.aug.flip_v ? "1" : "0");
    e.emplace_back("aug_rotate", cfg.aug.rotate ? "1" : "0");
    e.emplace_back("aug_permute_channels", cfg.aug.permute_channels ? "1" : "0");
    e.emplace_back("aug_saturation", cfg.aug.saturation ? "1" : "0");
    e.emplace_back("aug_noise", cfg.aug.noise ? "1" : "0");
    e.emplace_back("aug_sat_lo", fmt(cfg.aug.sat_lo));
    e.emplace_back("aug_sat_hi", fmt(cfg.aug.sat_hi));
    e.emplace_back("aug_noise_hyper_std", fmt(cfg.aug.noise_hyper_std));
    e.emplace_back("gen_scales", std::to_string(cfg.gen.scales));
    e.emplace_back("gen_resblocks", std::to_string(cfg.gen.resblocks_per_scale));
    e.emplace_back("gen_channels", std::to_string(cfg.gen.feature_channels));
    e.emplace_back("gen_filter", std::to_string(cfg.gen.filter_size));
    e.emplace_back("gen_upconv_kernel", std::to_string(cfg.gen.upconv_kernel));
    e.emplace_back("gen_upconv_stride", std::to_string(cfg.gen.upconv_stride));
    e.emplace_back("disc_input_size", std::to_string(cfg.disc.input_size));
    e.emplace_back("disc_fc_width", std::to_string(cfg.disc.fc_width));
    e.emplace_back("disc_filter", std::to_string(cfg.disc.filter_size));
    e.emplace_back("disc_leaky_slope", fmt(cfg.disc.leaky_slope));
    std::string convs;
    for (std::size_t i = 0; i < cfg.disc.convs.size(); ++i) {
        if (i)
            convs += ",";
        convs += std::to_string(cfg.disc.convs[i].out_channels) + ":" +
                 std::to_string(cfg.disc.convs[i].stride);
    }
    e.emplace_back("disc_convs", convs);
    return e;
}

} // namespace

TrainSummary run_train(const TrainOptions& opt) {
    std::string dataset_dir, output_dir, resume;
    TrainConfig cfg = resolve_train_config(opt, &dataset_dir, &output_dir, &resume);
    if (dataset_dir.empty() || output_dir.empty())
        throw ValueError("train: dataset and output directories are required");
    cfg.validate();

    std::vector<BlurPair> dataset = load_dataset(dataset_dir);
    if (dataset.empty())
        throw ValueError("train: dataset " + dataset_dir + " is empty");

    ensure_dir(output_dir);
    write_echo(output_dir, train_echo_entries(dataset_dir, output_dir, resume, cfg));

    TrainState state = resume.empty() ? init_train_state(cfg)
                                      : load_checkpoint(resume, cfg);

    std::ofstream log(fs::path(output_dir) / "loss_log.txt");
    if (!log)
        throw IoError("train: cannot write loss log in " + output_dir);
    log << "# iteration content adv_g adv_d total lr\n";

    TrainSummary summary;
    const std::string final_path = (fs::path(output_dir) / "final.ckpt").string();
    while (state.iteration < cfg.total_iterations) {
        const std::int64_t iter = state.iteration;
        std::vector<PyramidPair> batch = sample_batch(dataset, cfg, iter);
        LossBreakdown lb = train_step(state, batch); // throws on divergence,
                                                     // leaving the last good
                                                     // checkpoint in place
        summary.last = lb;
        if (cfg.log_every > 0 &&
            (iter % cfg.log_every == 0 || state.iteration == cfg.total_iterations))
            log << iter << " " << fmt(lb.content) << " " << fmt(lb.adversarial_g) << " "
                << fmt(lb.adversarial_d) << " " << fmt(lb.total) << " "
                << fmt(cfg.lr_at(iter)) << "\n";
        if (cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0)
            save_checkpoint(state,
                            (fs::path(output_dir) /
                             ("checkpoint_" + std::to_string(state.iteration) + ".ckpt"))
                                .string());
    }
    log.close();
    save_checkpoint(state, final_path);
    summary.iterations = state.iteration;
    summary.checkpoint_path = final_path;
    return summary;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

namespace {

// Pads to the pyramid divisibility requirement, runs the generator, returns
// the finest latent cropped back and the intermediate levels (padded size).
std::vector<Tensor> deblur_image(const GeneratorParams& params, const Tensor& image) {
    const int K = params.spec.scales;
    const int div = 1 << (K - 1);
    const int pad_h = (div - image.shape.h % div) % div;
    const int pad_w = (div - image.shape.w % div) % div;
    Tensor padded = (pad_h || pad_w) ? pad_reflect(image, 0, pad_h, 0, pad_w) : image;
    std::vector<Tensor> pyramid = gaussian_pyramid(padded, K);
    std::vector<Tensor> latents = generator_forward(pyramid, params);
    latents[0] = clip01(crop(latents[0], 0, 0, image.shape.h, image.shape.w));
    for (std::size_t k = 1; k < latents.size(); ++k)
        latents[k] = clip01(latents[k]);
    return latents;
}

} // namespace

InferSummary run_infer(const InferOptions& opt) {
    TrainState state = load_checkpoint(opt.checkpoint);
    ensure_dir(opt.output_dir);

    std::vector<std::string> inputs;
    if (fs::is_directory(opt.input_path))
        inputs = sorted_pngs(opt.input_path);
    else
        inputs.push_back(opt.input_path);
    if (inputs.empty())
        throw IoError("infer: no input images in " + opt.input_path);

    InferSummary summary;
    for (const std::string& file : inputs) {
        try {
            const Tensor image = read_image(file);
            std::vector<Tensor> latents = deblur_image(state.g, image);
            const std::string stem = fs::path(file).stem().string();
            write_image(latents[0],
                        (fs::path(opt.output_dir) / (stem + "_deblur.png")).string());
            if (opt.save_pyramid)
                for (std::size_t k = 1; k < latents.size(); ++k)
                    write_image(latents[k],
                                (fs::path(opt.output_dir) /
                                 (stem + "_L" + std::to_string(k + 1) + ".png"))
                                    .string());
            ++summary.written;
        } catch (const Error& e) {
            summary.failed.push_back(file + ": " + e.what());
        }
    }
    write_echo(opt.output_dir, {{"subcommand", "infer"},
                                {"checkpoint", opt.checkpoint},
                                {"input", opt.input_path},
                                {"out", opt.output_dir},
                                {"save_pyramid", opt.save_pyramid ? "1" : "0"}});
    return summary;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

EvalSummary run_eval(const EvalOptions& opt) {
    const bool identity = opt.checkpoint.empty();
    TrainState state;
    if (!identity) {
        state = load_checkpoint(opt.checkpoint);
        if (opt.scales > 0 && opt.scales != state.cfg.gen.scales)
            throw ValueError("eval: requested " + std::to_string(opt.scales) +
                             " scales but the checkpoint was trained with " +
                             std::to_string(state.cfg.gen.scales));
    }

    const fs::path manifest_path = fs::path(opt.dataset_dir) / "manifest.txt";
    std::ifstream manifest(manifest_path);
    if (!manifest)
        throw IoError("eval: no manifest.txt in " + opt.dataset_dir);

    struct Row {
        std::string path;
        bool ok = false;
        std::string error;
        double psnr = 0.0, ssim = 0.0, msssim = 0.0;
        bool has_msssim = false;
    };
    std::vector<Row> rows;

    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::stringstream ss(line);
        std::string blur_rel, sharp_rel;
        if (!(ss >> blur_rel >> sharp_rel))
            throw IoError("eval: malformed manifest line: " + line);
        Row row;
        row.path = blur_rel;
        try {
            const Tensor blurry = read_image((fs::path(opt.dataset_dir) / blur_rel).string());
            const Tensor sharp = read_image((fs::path(opt.dataset_dir) / sharp_rel).string());
            Tensor output = identity ? blurry : deblur_image(state.g, blurry)[0];
            if (opt.quantize)
                output = quantize8(output);
            row.psnr = psnr(output, sharp);
            row.ssim = ssim(output, sharp);
            if (std::min(output.shape.h, output.shape.w) >= kMsSsimMinSide) {
                row.msssim = ms_ssim(output, sharp);
                row.has_msssim = true;
            } else {
                row.msssim = std::nan("");
            }
            row.ok = true;
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }

    EvalSummary summary;
    double sum_psnr = 0.0, sum_ssim = 0.0, sum_msssim = 0.0;
    int msssim_count = 0;
    for (const Row& r : rows) {
        if (!r.ok) {
            ++summary.errors;
            continue;
        }
        ++summary.images;
        sum_psnr += r.psnr;
        sum_ssim += r.ssim;
        if (r.has_msssim) {
            sum_msssim += r.msssim;
            ++msssim_count;
        }
    }
    summary.mean_psnr = summary.images ? sum_psnr / summary.images : 0.0;
    summary.mean_ssim = summary.images ? sum_ssim / summary.images : 0.0;
    summary.mean_msssim = msssim_count ? sum_msssim / msssim_count : std::nan("");

    if (!opt.output_path.empty()) {
        const fs::path out_path(opt.output_path);
        if (out_path.has_parent_path())
            ensure_dir(out_path.parent_path().string());
        std::ofstream rep(out_path);
        if (!rep)
            throw IoError("eval: cannot write " + opt.output_path);
        rep << "# deblur-eval-report v1\n";
        rep << "# checkpoint " << (identity ? "(identity)" : opt.checkpoint) << "\n";
        rep << "# dataset " << opt.dataset_dir << "\n";
        rep << "# scales " << (identity ? opt.scales : state.cfg.gen.scales) << "\n";
        rep << "# quantize " << (opt.quantize ? 1 : 0) << "\n";
        rep << "path psnr ssim msssim\n";
        for (const Row& r : rows) {
            if (r.ok)
                rep << r.path << " " << fmt_fixed(r.psnr, 6) << " " << fmt_fixed(r.ssim, 6)
                    << " " << (r.has_msssim ? fmt_fixed(r.msssim, 6) : "nan") << "\n";
            else
                rep << r.path << " ERROR " << r.error << "\n";
        }
        rep << "mean " << fmt_fixed(summary.mean_psnr, 6) << " "
            << fmt_fixed(summary.mean_ssim, 6) << " "
            << (msssim_count ? fmt_fixed(summary.mean_msssim, 6) : "nan") << "\n";
        rep.close();

        std::ofstream csv(opt.output_path + ".csv");
        if (!csv)
            throw IoError("eval: cannot write " + opt.output_path + ".csv");
        csv << "path,psnr,ssim,msssim\n";
        for (const Row& r : rows) {
            if (r.ok)
                csv << r.path << "," << fmt(r.psnr) << "," << fmt(r.ssim) << ","
                    << (r.has_msssim ? fmt(r.msssim) : "nan") << "\n";
            else
                csv << r.path << ",error,error,error\n";
        }
    }
    return summary;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

namespace {

// Keeps slot gradient pointers stable across compute_grads() calls: analytic
// gradients are copied into one flat buffer the slots point into.
class SlotSet {
public:
    void add(const std::string& name, double* param, std::size_t size) {
        entries_.push_back({name, param, size});
    }

    std::vector<GradSlot> finalize() {
        std::size_t total = 0;
        for (const auto& e : entries_)
            total += e.size;
        store_.assign(total, 0.0);
        std::vector<GradSlot> slots;
        std::size_t off = 0;
        for (const auto& e : entries_) {
            slots.push_back({e.name, e.param, store_.data() + off, e.size});
            off += e.size;
        }
        return slots;
    }

    // Call once per compute_grads, in add() order.
    void begin_store() { cursor_ = 0; }
    void store(const double* src, std::size_t n) {
        std::copy(src, src + n, store_.begin() + static_cast<std::ptrdiff_t>(cursor_));
        cursor_ += n;
    }

private:
    struct Entry {
        std::string name;
        double* param;
        std::size_t size;
    };
    std::vector<Entry> entries_;
    std::vector<double> store_;
    std::size_t cursor_ = 0;
};

void push_away_from_kink(Tensor& t, double margin) {
    for (auto& x : t.v)
        if (std::abs(x) < margin)
            x = x >= 0.0 ? margin : -margin;
}

constexpr double kTol = 1e-4;
constexpr double kEps = 1e-5;

GradCheckReport check_conv2d(std::uint64_t seed, int stride) {
    Rng rng = Rng::stream(seed, {1, static_cast<std::uint64_t>(stride)});
    auto x = std::make_shared<Tensor>(Tensor::randn(Shape{1, 2, 6, 6}, rng));
    auto p = std::make_shared<ConvParams>();
    p->weight = Tensor::randn(Shape{3, 2, 5, 5}, rng, 0.3);
    p->bias = {rng.normal(), rng.normal(), rng.normal()};
    p->stride = stride;
    p->pad = 2;
    auto r = std::make_shared<Tensor>(
        Tensor::randn(conv2d_output_shape(x->shape, *p), rng));

    auto slots_builder = std::make_shared<SlotSet>();
    slots_builder->add("conv.input", x->v.data(), x->v.size());
    slots_builder->add("conv.weight", p->weight.v.data(), p->weight.v.size());
    slots_builder->add("conv.bias", p->bias.data(), p->bias.size());
    std::vector<GradSlot> slots = slots_builder->finalize();

    auto compute = [=]() {
        ConvGrads g = conv2d_backward(*x, *p, *r);
        slots_builder->begin_store();
        slots_builder->store(g.input.v.data(), g.input.v.size());
        slots_builder->store(g.weight.v.data(), g.weight.v.size());
        slots_builder->store(g.bias.data(), g.bias.size());
    };
    auto forward = [=]() { return dot(conv2d(*x, *p), *r); };
    Rng sample_rng = Rng::stream(seed, {2});
    return gradcheck(slots, compute, forward, kTol, kEps, sample_rng, 20);
}

GradCheckReport check_upconv2d(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, {3});
    auto x = std::make_shared<Tensor>(Tensor::randn(Shape{1, 3, 5, 5}, rng));
    auto p = std::make_shared<ConvParams>();
    p->weight = Tensor::randn(Shape{3, 2, 4, 4}, rng, 0.3);
    p->bias = {rng.normal(), rng.normal()};
    p->stride = 2;
    p->pad = 1;
    auto r = std::make_shared<Tensor>(
        Tensor::randn(upconv2d_output_shape(x->shape, *p), rng));

    auto slots_builder = std::make_shared<SlotSet>();
    slots_builder->add("upconv.input", x->v.data(), x->v.size());
    slots_builder->add("upconv.weight", p->weight.v.data(), p->weight.v.size());
    slots_builder->add("upconv.bias", p->bias.data(), p->bias.size());
    std::vector<GradSlot> slots = slots_builder->finalize();

    auto compute = [=]() {
        ConvGrads g = upconv2d_backward(*x, *p, *r);
        slots_builder->begin_store();
        slots_builder->store(g.input.v.data(), g.input.v.size());
        slots_builder->store(g.weight.v.data(), g.weight.v.size());
        slots_builder->store(g.bias.data(), g.bias.size());
    };
    auto forward = [=]() { return dot(upconv2d(*x, *p), *r); };
    Rng sample_rng = Rng::stream(seed, {4});
    return gradcheck(slots, compute, forward, kTol, kEps, sample_rng, 20);
}

GradCheckReport check_activation(std::uint64_t seed, int which) {
    Rng rng = Rng::stream(seed, {5, static_cast<std::uint64_t>(which)});
    auto x = std::make_shared<Tensor>(Tensor::randn(Shape{1, 2, 6, 6}, rng));
    if (which != 2)
        push_away_from_kink(*x, 1e-3); // finite differences must not straddle 0
    auto r = std::make_shared<Tensor>(Tensor::randn(x->shape, rng));

    auto slots_builder = std::make_shared<SlotSet>();
    slots_builder->add(which == 0 ? "relu.input"
                                  : which == 1 ? "leaky_relu.input" : "sigmoid.input",
                       x->v.data(), x->v.size());
    std::vector<GradSlot> slots = slots_builder->finalize();

    auto apply = [which](const Tensor& t) {
        if (which == 0)
            return relu(t);
        if (which == 1)
            return leaky_relu(t, 0.2);
        return sigmoid(t);
    };
    auto compute = [=]() {
        Tensor g;
        if (which == 0)
            g = relu_backward(*x, *r);
        else if (which == 1)
            g = leaky_relu_backward(*x, 0.2, *r);
        else
            g = sigmoid_backward(sigmoid(*x), *r);
        slots_builder->begin_store();
        slots_builder->store(g.v.data(), g.v.size());
    };
    auto forward = [=]() { return dot(apply(*x), *r); };
    Rng sample_rng = Rng::stream(seed, {6, static_cast<std::uint64_t>(which)});
    return gradcheck(slots, compute, forward, kTol, kEps, sample_rng, 30);
}

GradCheckReport check_resblock(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, {7});
    const int ch = GeneratorSpec::desk().feature_channels;
    auto x = std::make_shared<Tensor>(Tensor::randn(Shape{1, ch, 8, 8}, rng));
    auto rb = std::make_shared<ResBlockParams>();
    const double bound = std::sqrt(6.0 / (ch * 25.0));
    rb->conv1.weight = Tensor::uniform(Shape{ch, ch, 5, 5}, rng, -bound, bound);
    rb->conv1.bias.assign(static_cast<std::size_t>(ch), 0.0);
    rb->conv1.stride = 1;
    rb->conv1.pad = 2;
    rb->conv2 = rb->conv1;
    rb->conv2.weight = Tensor::uniform(Shape{ch, ch, 5, 5}, rng, -bound, bound);
    auto r = std::make_shared<Tensor>(Tensor::randn(x->shape, rng));

    auto slots_builder = std::make_shared<SlotSet>();
    slots_builder->add("resblock.input", x->v.data(), x->v.size());
    slots_builder->add("resblock.c1.w", rb->conv1.weight.v.data(), rb->conv1.weight.v.size());
    slots_builder->add("resblock.c1.b", rb->conv1.bias.data(), rb->conv1.bias.size());
    slots_builder->add("resblock.c2.w", rb->conv2.weight.v.data(), rb->conv2.weight.v.size());
    slots_builder->add("resblock.c2.b", rb->conv2.bias.data(), rb->conv2.bias.size());
    std::vector<GradSlot> slots = slots_builder->finalize();

    auto compute = [=]() {
        Tensor pre1 = conv2d(*x, rb->conv1);
        ConvGrads c2g = conv2d_backward(relu(pre1), rb->conv2, *r);
        Tensor gpre1 = relu_backward(pre1, c2g.input);
        ConvGrads c1g = conv2d_backward(*x, rb->conv1, gpre1);
        Tensor gx = *r;
        for (std::size_t i = 0; i < gx.v.size(); ++i)
            gx.v[i] += c1g.input.v[i];
        slots_builder->begin_store();
        slots_builder->store(gx.v.data(), gx.v.size());
        slots_builder->store(c1g.weight.v.data(), c1g.weight.v.size());
        slots_builder->store(c1g.bias.data(), c1g.bias.size());
        slots_builder->store(c2g.weight.v.data(), c2g.weight.v.size());
        slots_builder->store(c2g.bias.data(), c2g.bias.size());
    };
    auto forward = [=]() { return dot(resblock_forward(*x, *rb), *r); };
    Rng sample_rng = Rng::stream(seed, {8});
    return gradcheck(slots, compute, forward, kTol, kEps, sample_rng, 15);
}

GradCheckReport check_generator(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, {9});
    GeneratorSpec spec = GeneratorSpec::desk();
    auto params = std::make_shared<GeneratorParams>(init_generator(spec, seed));
    auto pyramid = std::make_shared<std::vector<Tensor>>();
    pyramid->push_back(Tensor::randn(Shape{1, 3, 32, 32}, rng, 0.5));
    pyramid->push_back(Tensor::randn(Shape{1, 3, 16, 16}, rng, 0.5));
    pyramid->push_back(Tensor::randn(Shape{1, 3, 8, 8}, rng, 0.5));
    auto proj = std::make_shared<std::vector<Tensor>>();
    for (const Tensor& level : *pyramid)
        proj->push_back(Tensor::randn(level.shape, rng));

    auto slots_builder = std::make_shared<SlotSet>();
    visit_params(*params, [&](const std::string& key, double* d, std::size_t n, Shape) {
        slots_builder->add(key, d, n);
    });
    for (std::size_t k = 0; k < pyramid->size(); ++k)
        slots_builder->add("pyramid.L" + std::to_string(k + 1),
                           (*pyramid)[k].v.data(), (*pyramid)[k].v.size());
    std::vector<GradSlot> slots = slots_builder->finalize();

    auto compute = [=]() {
        GeneratorForward fwd;
        generator_forward(*pyramid, *params, &fwd);
        GeneratorGrads g = generator_backward(fwd, *params, *proj);
        slots_builder->begin_store();
        visit_grads(g, *params, [&](const std::string&, double* d, std::size_t n, Shape) {
            slots_builder->store(d, n);
        });
        for (const Tensor& gb : g.blurry)
            slots_builder->store(gb.v.data(), gb.v.size());
    };
    auto forward = [=]() {
        std::vector<Tensor> latents = generator_forward(*pyramid, *params);
        double acc = 0.0;
        for (std::size_t k = 0; k < latents.size(); ++k)
            acc += dot(latents[k], (*proj)[k]);
        return acc;
    };
    Rng sample_rng = Rng::stream(seed, {10});
    return gradcheck(slots, compute, forward, kTol, kEps, sample_rng, 4);
}

GradCheckReport check_discriminator(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, {11});
    DiscriminatorSpec spec = DiscriminatorSpec::desk(64);
    auto params = std::make_shared<DiscriminatorParams>(init_discriminator(spec, seed));
    auto images = std::make_shared<Tensor>(Tensor::randn(Shape{2, 3, 64, 64}, rng, 0.5));
    auto proj = std::make_shared<std::vector<double>>();
    proj->push_back(rng.normal());
    proj->push_back(rng.normal());

    auto slots_builder = std::make_shared<SlotSet>();
    visit_params(*params, [&](const std::string& key, double* d, std::size_t n, Shape) {
        slots_builder->add(key, d, n);
    });
    slots_builder->add("d.input", images->v.data(), images->v.size());
    std::vector<GradSlot> slots = slots_builder->finalize();

    auto compute = [=]() {
        DiscriminatorCache cache;
        discriminator_forward(*images, *params, &cache);
        DiscriminatorGrads g = discriminator_backward(cache, *params, *proj);
        slots_builder->begin_store();
        visit_grads(g, *params, [&](const std::string&, double* d, std::size_t n, Shape) {
            slots_builder->store(d, n);
        });
        slots_builder->store(g.input.v.data(), g.input.v.size());
    };
    auto forward = [=]() {
        std::vector<double> probs = discriminator_forward(*images, *params);
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i)
            acc += probs[i] * (*proj)[i];
        return acc;
    };
    Rng sample_rng = Rng::stream(seed, {12});
    return gradcheck(slots, compute, forward, kTol, kEps, sample_rng, 6);
}

} // namespace

GradCheckSummary run_gradcheck(const std::string& scope, std::uint64_t seed) {
    GradCheckSummary summary;
    auto record = [&](const std::string& name, GradCheckReport rep) {
        if (rep.max_rel_err > summary.max_rel_err) {
            summary.max_rel_err = rep.max_rel_err;
            summary.worst = rep.worst_slot.empty() ? name : name + "/" + rep.worst_slot;
        }
        summary.coords_checked += rep.coords_checked;
        summary.checks.emplace_back(name, std::move(rep));
    };

    if (scope == "layer") {
        record("conv2d", check_conv2d(seed, 1));
        record("conv2d_stride2", check_conv2d(seed, 2));
        record("upconv2d", check_upconv2d(seed));
        record("relu", check_activation(seed, 0));
        record("leaky_relu", check_activation(seed, 1));
        record("sigmoid", check_activation(seed, 2));
    } else if (scope == "resblock") {
        record("resblock", check_resblock(seed));
    } else if (scope == "generator") {
        record("generator", check_generator(seed));
    } else if (scope == "discriminator") {
        record("discriminator", check_discriminator(seed));
    } else {
        throw ValueError("unknown gradcheck scope '" + scope +
                         "' (expected layer, resblock, generator or discriminator)");
    }

    summary.pass = true;
    for (const auto& [name, rep] : summary.checks)
        summary.pass = summary.pass && rep.pass;
    return summary;
}

} // namespace deblur
