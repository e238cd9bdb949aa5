// deblur command line: synth, augment-preview, train, infer, eval, gradcheck.
// The executable talks to the core exclusively through the C API.

#include <deblur.h>

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

// 0 = success, 1 = usage error, 2 = numerical failure.
int exit_code(deblur_status status) {
    if (status == DEBLUR_OK)
        return 0;
    if (status == DEBLUR_ERR_NUMERIC)
        return 2;
    return 1;
}

int report_failure(deblur_status status) {
    std::fprintf(stderr, "error (%s): %s\n", deblur_status_name(status),
                 deblur_last_error());
    return exit_code(status);
}

// Key-value defaults loaded from --config; explicit flags still win.
std::map<std::string, std::string> load_config_defaults(const std::string& path) {
    std::map<std::string, std::string> kv;
    if (path.empty())
        return kv;
    std::ifstream f(path);
    if (!f)
        throw CLI::ValidationError("--config", "cannot open " + path);
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        const auto space = line.find(' ', first);
        if (space == std::string::npos)
            throw CLI::ValidationError("--config", "malformed line: " + line);
        kv[line.substr(first, space - first)] = line.substr(space + 1);
    }
    return kv;
}

std::vector<int32_t> parse_windows(const std::string& text) {
    std::vector<int32_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(std::stoi(item));
    return out;
}

void expect_subcommand(const std::map<std::string, std::string>& kv,
                       const std::string& name) {
    auto it = kv.find("subcommand");
    if (it != kv.end() && it->second != name)
        throw CLI::ValidationError("--config", "config file was written by subcommand '" +
                                                   it->second + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-scale CNN motion deblurring toolkit"};
    app.require_subcommand(1);

    // --- synth ---------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "build blur/sharp pairs from frame sequences");
    std::string synth_input, synth_output, synth_windows = "7,9,11,13", synth_config;
    int synth_stride = 1;
    double synth_gamma = 2.2;
    uint64_t synth_seed = 0;
    synth->add_option("--input", synth_input, "frame directory (PNG files + meta.txt)");
    synth->add_option("--output", synth_output, "dataset output directory");
    synth->add_option("--windows", synth_windows, "comma list of odd window lengths");
    synth->add_option("--stride", synth_stride, "window placement stride");
    synth->add_option("--gamma", synth_gamma, "CRF gamma");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--config", synth_config, "key-value config file (flags override)");

    // --- augment-preview ------------------------------------------------
    auto* preview = app.add_subcommand("augment-preview",
                                       "write augmented copies of one pair for inspection");
    std::string pv_blur, pv_sharp, pv_out, pv_config;
    int pv_count = 8;
    uint64_t pv_seed = 0;
    preview->add_option("--blur", pv_blur, "blurry image");
    preview->add_option("--sharp", pv_sharp, "sharp image");
    preview->add_option("--out", pv_out, "output directory");
    preview->add_option("--count", pv_count, "number of augmented copies");
    preview->add_option("--seed", pv_seed, "RNG seed");
    preview->add_option("--config", pv_config, "key-value config file (flags override)");

    // --- train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train generator (+ discriminator) on a dataset");
    std::string tr_dataset, tr_out, tr_preset = "desk", tr_config, tr_resume;
    std::vector<std::string> tr_set;
    train->add_option("--dataset", tr_dataset, "dataset directory from synth");
    train->add_option("--out", tr_out, "run output directory");
    train->add_option("--preset", tr_preset, "desk or paper");
    train->add_option("--config", tr_config, "key-value config file");
    train->add_option("--resume", tr_resume, "checkpoint to resume from");
    train->add_option("--set", tr_set, "config override 'key value' (repeatable)");

    // --- infer -------------------------------------------------------------
    auto* infer = app.add_subcommand("infer", "deblur images with a trained checkpoint");
    std::string in_ckpt, in_input, in_out, in_config;
    bool in_pyramid = false;
    infer->add_option("--checkpoint", in_ckpt, "trained checkpoint");
    infer->add_option("--input", in_input, "PNG file or directory");
    infer->add_option("--out", in_out, "output directory");
    infer->add_flag("--save-pyramid", in_pyramid, "also write coarser-level outputs");
    infer->add_option("--config", in_config, "key-value config file (flags override)");

    // --- eval ---------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM/MS-SSIM report over a dataset");
    std::string ev_ckpt, ev_dataset, ev_out = "report.txt", ev_config;
    int ev_scales = 0;
    bool ev_quantize = false;
    eval->add_option("--checkpoint", ev_ckpt, "checkpoint (omit for the blurry baseline)");
    eval->add_option("--dataset", ev_dataset, "dataset directory");
    eval->add_option("--out", ev_out, "report path (a .csv companion is written too)");
    eval->add_option("--scales", ev_scales, "expected scale count (0 = from checkpoint)");
    eval->add_flag("--quantize", ev_quantize, "quantize outputs to 8 bits before scoring");
    eval->add_option("--config", ev_config, "key-value config file (flags override)");

    // --- gradcheck ------------------------------------------------------------
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the backward passes");
    std::string gc_scope = "layer";
    uint64_t gc_seed = 0;
    gc->add_option("--scope", gc_scope, "layer, resblock, generator or discriminator");
    gc->add_option("--seed", gc_seed, "RNG seed");

    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware default)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (threads >= 0)
        deblur_set_threads(threads);

    try {
        if (synth->parsed()) {
            auto kv = load_config_defaults(synth_config);
            expect_subcommand(kv, "synth");
            if (!synth->count("--input") && kv.count("input")) synth_input = kv["input"];
            if (!synth->count("--output") && kv.count("output")) synth_output = kv["output"];
            if (!synth->count("--windows") && kv.count("windows")) synth_windows = kv["windows"];
            if (!synth->count("--stride") && kv.count("stride")) synth_stride = std::stoi(kv["stride"]);
            if (!synth->count("--gamma") && kv.count("gamma")) synth_gamma = std::stod(kv["gamma"]);
            if (!synth->count("--seed") && kv.count("seed")) synth_seed = std::stoull(kv["seed"]);

            const std::vector<int32_t> windows = parse_windows(synth_windows);
            deblur_synth_options opt{};
            opt.input_dir = synth_input.c_str();
            opt.output_dir = synth_output.c_str();
            opt.windows = windows.data();
            opt.window_count = static_cast<int32_t>(windows.size());
            opt.stride = synth_stride;
            opt.gamma = synth_gamma;
            opt.seed = synth_seed;
            int32_t pairs = 0;
            const deblur_status st = deblur_synth(&opt, &pairs);
            if (st != DEBLUR_OK)
                return report_failure(st);
            if (pairs == 0)
                std::fprintf(stderr, "warning: sequence shorter than the largest window, "
                                     "no pairs written\n");
            std::printf("synth: wrote %" PRId32 " pairs to %s\n", pairs, synth_output.c_str());
        } else if (preview->parsed()) {
            auto kv = load_config_defaults(pv_config);
            expect_subcommand(kv, "augment-preview");
            if (!preview->count("--blur") && kv.count("blur")) pv_blur = kv["blur"];
            if (!preview->count("--sharp") && kv.count("sharp")) pv_sharp = kv["sharp"];
            if (!preview->count("--out") && kv.count("out")) pv_out = kv["out"];
            if (!preview->count("--count") && kv.count("count")) pv_count = std::stoi(kv["count"]);
            if (!preview->count("--seed") && kv.count("seed")) pv_seed = std::stoull(kv["seed"]);

            deblur_augment_preview_options opt{};
            opt.blur_path = pv_blur.c_str();
            opt.sharp_path = pv_sharp.c_str();
            opt.output_dir = pv_out.c_str();
            opt.count = pv_count;
            opt.seed = pv_seed;
            const deblur_status st = deblur_augment_preview(&opt);
            if (st != DEBLUR_OK)
                return report_failure(st);
            std::printf("augment-preview: wrote %d pairs to %s\n", pv_count, pv_out.c_str());
        } else if (train->parsed()) {
            deblur_train_options opt{};
            opt.dataset_dir = tr_dataset.empty() ? nullptr : tr_dataset.c_str();
            opt.output_dir = tr_out.empty() ? nullptr : tr_out.c_str();
            opt.preset = tr_preset.c_str();
            opt.config_path = tr_config.empty() ? nullptr : tr_config.c_str();
            opt.resume_checkpoint = tr_resume.empty() ? nullptr : tr_resume.c_str();
            std::vector<const char*> overrides;
            for (const std::string& s : tr_set)
                overrides.push_back(s.c_str());
            opt.overrides = overrides.data();
            opt.override_count = static_cast<int32_t>(overrides.size());
            deblur_train_summary summary{};
            const deblur_status st = deblur_train(&opt, &summary);
            if (st != DEBLUR_OK)
                return report_failure(st);
            std::printf("train: %" PRId64 " iterations, final content %.6g, total %.6g\n",
                        summary.iterations, summary.content_loss, summary.total_loss);
            std::printf("train: checkpoint %s\n", summary.checkpoint_path);
        } else if (infer->parsed()) {
            auto kv = load_config_defaults(in_config);
            expect_subcommand(kv, "infer");
            if (!infer->count("--checkpoint") && kv.count("checkpoint")) in_ckpt = kv["checkpoint"];
            if (!infer->count("--input") && kv.count("input")) in_input = kv["input"];
            if (!infer->count("--out") && kv.count("out")) in_out = kv["out"];
            if (!infer->count("--save-pyramid") && kv.count("save_pyramid"))
                in_pyramid = kv["save_pyramid"] == "1";

            deblur_infer_options opt{};
            opt.checkpoint = in_ckpt.c_str();
            opt.input_path = in_input.c_str();
            opt.output_dir = in_out.c_str();
            opt.save_pyramid = in_pyramid ? 1 : 0;
            int32_t written = 0, failed = 0;
            const deblur_status st = deblur_infer(&opt, &written, &failed);
            if (st != DEBLUR_OK)
                return report_failure(st);
            std::printf("infer: wrote %" PRId32 " images to %s\n", written, in_out.c_str());
            if (failed > 0) {
                std::fprintf(stderr, "infer: %" PRId32 " inputs failed (%s)\n", failed,
                             deblur_last_error());
                return 1;
            }
        } else if (eval->parsed()) {
            auto kv = load_config_defaults(ev_config);
            expect_subcommand(kv, "eval");
            if (!eval->count("--checkpoint") && kv.count("checkpoint")) {
                if (kv["checkpoint"] != "(identity)")
                    ev_ckpt = kv["checkpoint"];
            }
            if (!eval->count("--dataset") && kv.count("dataset")) ev_dataset = kv["dataset"];
            if (!eval->count("--out") && kv.count("out")) ev_out = kv["out"];
            if (!eval->count("--scales") && kv.count("scales")) ev_scales = std::stoi(kv["scales"]);
            if (!eval->count("--quantize") && kv.count("quantize"))
                ev_quantize = kv["quantize"] == "1";

            deblur_eval_options opt{};
            opt.checkpoint = ev_ckpt.empty() ? nullptr : ev_ckpt.c_str();
            opt.dataset_dir = ev_dataset.c_str();
            opt.output_path = ev_out.c_str();
            opt.scales = ev_scales;
            opt.quantize = ev_quantize ? 1 : 0;
            deblur_eval_summary summary{};
            const deblur_status st = deblur_eval(&opt, &summary);
            if (st != DEBLUR_OK)
                return report_failure(st);
            std::printf("eval: %" PRId32 " images (%" PRId32 " errors)\n", summary.images,
                        summary.errors);
            std::printf("eval: mean psnr %.4f dB, ssim %.4f, msssim %s\n", summary.mean_psnr,
                        summary.mean_ssim,
                        std::isnan(summary.mean_msssim)
                            ? "n/a"
                            : std::to_string(summary.mean_msssim).c_str());
            std::printf("eval: report written to %s\n", ev_out.c_str());
        } else if (gc->parsed()) {
            deblur_gradcheck_report report{};
            const deblur_status st = deblur_gradcheck(gc_scope.c_str(), gc_seed, &report);
            if (st != DEBLUR_OK)
                return report_failure(st);
            std::printf("gradcheck scope=%s coords=%" PRId32 " max_rel_err=%.3e tol=%.1e %s\n",
                        gc_scope.c_str(), report.coords_checked, report.max_rel_err,
                        report.tolerance, report.passed ? "PASS" : "FAIL");
            if (!report.passed) {
                std::fprintf(stderr, "gradcheck: worst coordinate in %s\n", report.worst);
                return 2;
            }
        }
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
