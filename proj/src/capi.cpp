#include "deblur.h"

#include "deblur/errors.hpp"
#include "deblur/image_io.hpp"
#include "deblur/metrics.hpp"
#include "deblur/ops.hpp"
#include "deblur/parallel.hpp"
#include "deblur/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace {

thread_local std::string g_last_error;

deblur_status fail(deblur_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

// Maps library exceptions onto status codes at the C boundary.
template <typename Fn>
deblur_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DEBLUR_OK;
    } catch (const deblur::ValueError& e) {
        return fail(DEBLUR_ERR_ARGUMENT, e.what());
    } catch (const deblur::IoError& e) {
        return fail(DEBLUR_ERR_IO, e.what());
    } catch (const deblur::ShapeError& e) {
        return fail(DEBLUR_ERR_SHAPE, e.what());
    } catch (const deblur::NumericalError& e) {
        return fail(DEBLUR_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(DEBLUR_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(DEBLUR_ERR_INTERNAL, "unknown error");
    }
}

std::string opt_str(const char* s) {
    return s ? std::string(s) : std::string();
}

void copy_str(char* dst, std::size_t cap, const std::string& src) {
    const std::size_t n = std::min(cap - 1, src.size());
    std::memcpy(dst, src.data(), n);
    dst[n] = '\0';
}

} // namespace

struct deblur_model {
    deblur::TrainState state;
};

extern "C" {

const char* deblur_version(void) {
    return "1.0.0";
}

const char* deblur_status_name(deblur_status status) {
    switch (status) {
    case DEBLUR_OK: return "ok";
    case DEBLUR_ERR_ARGUMENT: return "argument error";
    case DEBLUR_ERR_IO: return "io error";
    case DEBLUR_ERR_SHAPE: return "shape error";
    case DEBLUR_ERR_NUMERIC: return "numerical error";
    case DEBLUR_ERR_INTERNAL: return "internal error";
    }
    return "unknown";
}

const char* deblur_last_error(void) {
    return g_last_error.c_str();
}

void deblur_set_threads(int32_t n) {
    deblur::set_num_threads(n);
}

deblur_status deblur_synth(const deblur_synth_options* options, int32_t* pairs_out) {
    if (!options)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_synth: null options");
    return guarded([&] {
        deblur::SynthOptions opt;
        opt.input_dir = opt_str(options->input_dir);
        opt.output_dir = opt_str(options->output_dir);
        if (options->windows && options->window_count > 0)
            opt.windows.assign(options->windows, options->windows + options->window_count);
        if (options->stride > 0)
            opt.stride = options->stride;
        if (options->gamma > 0.0)
            opt.gamma = options->gamma;
        opt.seed = options->seed;
        deblur::SynthSummary s = deblur::run_synth(opt);
        if (pairs_out)
            *pairs_out = s.pairs;
    });
}

deblur_status deblur_augment_preview(const deblur_augment_preview_options* options) {
    if (!options)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_augment_preview: null options");
    return guarded([&] {
        deblur::AugmentPreviewOptions opt;
        opt.blur_path = opt_str(options->blur_path);
        opt.sharp_path = opt_str(options->sharp_path);
        opt.output_dir = opt_str(options->output_dir);
        if (options->count > 0)
            opt.count = options->count;
        opt.seed = options->seed;
        deblur::run_augment_preview(opt);
    });
}

deblur_status deblur_train(const deblur_train_options* options,
                           deblur_train_summary* summary_out) {
    if (!options)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_train: null options");
    return guarded([&] {
        deblur::TrainOptions opt;
        opt.dataset_dir = opt_str(options->dataset_dir);
        opt.output_dir = opt_str(options->output_dir);
        if (options->preset)
            opt.preset = options->preset;
        opt.config_path = opt_str(options->config_path);
        opt.resume_checkpoint = opt_str(options->resume_checkpoint);
        for (int32_t i = 0; i < options->override_count; ++i) {
            const std::string entry = opt_str(options->overrides[i]);
            const auto space = entry.find(' ');
            if (space == std::string::npos)
                throw deblur::ValueError("override must be 'key value': " + entry);
            opt.overrides.emplace_back(entry.substr(0, space), entry.substr(space + 1));
        }
        deblur::TrainSummary s = deblur::run_train(opt);
        if (summary_out) {
            summary_out->iterations = s.iterations;
            summary_out->content_loss = s.last.content;
            summary_out->adversarial_g_loss = s.last.adversarial_g;
            summary_out->adversarial_d_loss = s.last.adversarial_d;
            summary_out->total_loss = s.last.total;
            copy_str(summary_out->checkpoint_path, sizeof(summary_out->checkpoint_path),
                     s.checkpoint_path);
        }
    });
}

deblur_status deblur_infer(const deblur_infer_options* options, int32_t* written_out,
                           int32_t* failed_out) {
    if (!options)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_infer: null options");
    return guarded([&] {
        deblur::InferOptions opt;
        opt.checkpoint = opt_str(options->checkpoint);
        opt.input_path = opt_str(options->input_path);
        opt.output_dir = opt_str(options->output_dir);
        opt.save_pyramid = options->save_pyramid != 0;
        deblur::InferSummary s = deblur::run_infer(opt);
        if (written_out)
            *written_out = s.written;
        if (failed_out)
            *failed_out = static_cast<int32_t>(s.failed.size());
        if (!s.failed.empty())
            g_last_error = s.failed.front();
    });
}

deblur_status deblur_model_open(const char* checkpoint_path, deblur_model** model_out) {
    if (!checkpoint_path || !model_out)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_model_open: null argument");
    return guarded([&] {
        auto* m = new deblur_model{deblur::load_checkpoint(checkpoint_path)};
        *model_out = m;
    });
}

void deblur_model_close(deblur_model* model) {
    delete model;
}

deblur_status deblur_model_scales(const deblur_model* model, int32_t* scales_out) {
    if (!model || !scales_out)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_model_scales: null argument");
    *scales_out = model->state.cfg.gen.scales;
    return DEBLUR_OK;
}

deblur_status deblur_model_run(deblur_model* model, const double* rgb, int32_t height,
                               int32_t width, double* output) {
    if (!model || !rgb || !output)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_model_run: null argument");
    if (height < 1 || width < 1)
        return fail(DEBLUR_ERR_SHAPE, "deblur_model_run: empty image");
    return guarded([&] {
        const std::size_t count = 3u * static_cast<std::size_t>(height) * width;
        deblur::Tensor image = deblur::Tensor::from_data(
            deblur::Shape{1, 3, height, width}, std::vector<double>(rgb, rgb + count));
        const int K = model->state.cfg.gen.scales;
        const int div = 1 << (K - 1);
        const int pad_h = (div - height % div) % div;
        const int pad_w = (div - width % div) % div;
        deblur::Tensor padded =
            (pad_h || pad_w) ? deblur::pad_reflect(image, 0, pad_h, 0, pad_w) : image;
        std::vector<deblur::Tensor> latents =
            deblur::generator_forward(deblur::gaussian_pyramid(padded, K), model->state.g);
        deblur::Tensor result =
            deblur::clip01(deblur::crop(latents[0], 0, 0, height, width));
        std::copy(result.v.begin(), result.v.end(), output);
    });
}

deblur_status deblur_eval(const deblur_eval_options* options,
                          deblur_eval_summary* summary_out) {
    if (!options)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_eval: null options");
    return guarded([&] {
        deblur::EvalOptions opt;
        opt.checkpoint = opt_str(options->checkpoint);
        opt.dataset_dir = opt_str(options->dataset_dir);
        opt.output_path = opt_str(options->output_path);
        opt.scales = options->scales;
        opt.quantize = options->quantize != 0;
        deblur::EvalSummary s = deblur::run_eval(opt);
        if (summary_out) {
            summary_out->images = s.images;
            summary_out->errors = s.errors;
            summary_out->mean_psnr = s.mean_psnr;
            summary_out->mean_ssim = s.mean_ssim;
            summary_out->mean_msssim = s.mean_msssim;
        }
    });
}

namespace {

deblur_status metric_helper(const double* a, const double* b, int32_t channels,
                            int32_t height, int32_t width, double* out, int which) {
    if (!a || !b || !out)
        return fail(DEBLUR_ERR_ARGUMENT, "metric: null argument");
    return guarded([&] {
        const deblur::Shape shape{1, channels, height, width};
        const std::size_t count = shape.elems();
        deblur::Tensor ta = deblur::Tensor::from_data(shape, std::vector<double>(a, a + count));
        deblur::Tensor tb = deblur::Tensor::from_data(shape, std::vector<double>(b, b + count));
        if (which == 0)
            *out = deblur::psnr(ta, tb);
        else if (which == 1)
            *out = deblur::ssim(ta, tb);
        else
            *out = deblur::ms_ssim(ta, tb);
    });
}

} // namespace

deblur_status deblur_metric_psnr(const double* a, const double* b, int32_t channels,
                                 int32_t height, int32_t width, double* out) {
    return metric_helper(a, b, channels, height, width, out, 0);
}

deblur_status deblur_metric_ssim(const double* a, const double* b, int32_t channels,
                                 int32_t height, int32_t width, double* out) {
    return metric_helper(a, b, channels, height, width, out, 1);
}

deblur_status deblur_metric_msssim(const double* a, const double* b, int32_t channels,
                                   int32_t height, int32_t width, double* out) {
    return metric_helper(a, b, channels, height, width, out, 2);
}

deblur_status deblur_gradcheck(const char* scope, uint64_t seed,
                               deblur_gradcheck_report* report_out) {
    if (!scope)
        return fail(DEBLUR_ERR_ARGUMENT, "deblur_gradcheck: null scope");
    return guarded([&] {
        deblur::GradCheckSummary s = deblur::run_gradcheck(scope, seed);
        if (report_out) {
            report_out->passed = s.pass ? 1 : 0;
            report_out->max_rel_err = s.max_rel_err;
            report_out->tolerance = s.checks.empty() ? 0.0 : s.checks.front().second.tolerance;
            report_out->coords_checked = s.coords_checked;
            copy_str(report_out->worst, sizeof(report_out->worst), s.worst);
        }
    });
}

} // extern "C"
