#include "deblur/trainer.hpp"

#include "deblur/errors.hpp"
#include "deblur/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace deblur {

TrainConfig TrainConfig::desk() {
    TrainConfig c;
    c.gen = GeneratorSpec::desk();
    c.patch_size = 64;
    c.disc = DiscriminatorSpec::desk(64);
    c.total_iterations = 500;
    c.checkpoint_every = 0;
    return c;
}

TrainConfig TrainConfig::paper() {
    TrainConfig c;
    c.gen = GeneratorSpec::paper();
    c.patch_size = 256;
    c.disc = DiscriminatorSpec::paper();
    return c;
}

double TrainConfig::lr_at(std::int64_t iteration) const {
    const std::int64_t decays = lr_decay_step > 0 ? iteration / lr_decay_step : 0;
    return initial_lr * std::pow(lr_decay_factor, static_cast<double>(decays));
}

void TrainConfig::validate() const {
    if (batch_size < 1)
        throw ValueError("train config: batch size must be >= 1");
    if (!(initial_lr > 0.0))
        throw ValueError("train config: learning rate must be positive");
    if (lr_decay_step < 1)
        throw ValueError("train config: decay step must be >= 1");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
        throw ValueError("train config: decay factor must be in (0,1)");
    if (total_iterations < 0)
        throw ValueError("train config: negative iteration count");
    if (lambda < 0.0)
        throw ValueError("train config: negative lambda");
    if (patch_size < 1)
        throw ValueError("train config: patch size must be positive");
    const int div = 1 << (gen.scales - 1);
    if (patch_size % div != 0)
        throw ValueError("train config: patch size not divisible by 2^(scales-1)");
    gen.validate();
    if (lambda > 0.0) {
        disc.validate();
        if (disc.input_size != patch_size)
            throw ValueError("train config: discriminator input size " +
                             std::to_string(disc.input_size) +
                             " must equal the patch size " + std::to_string(patch_size));
    }
}

namespace {

AdamState make_adam_state(const std::function<void(const ParamVisitor&)>& visit) {
    AdamState s;
    visit([&](const std::string&, double*, std::size_t size, Shape) {
        s.buffers.emplace_back(size);
    });
    return s;
}

// Applies one ADAM step across a whole network in visitor order.
template <typename Params, typename Grads>
void adam_apply(Params& params, Grads& grads, AdamState& st, double lr) {
    ++st.step;
    std::vector<std::pair<double*, std::size_t>> pviews;
    visit_params(params, [&](const std::string&, double* d, std::size_t n, Shape) {
        pviews.emplace_back(d, n);
    });
    std::size_t idx = 0;
    visit_grads(grads, params, [&](const std::string&, double* gd, std::size_t gn, Shape) {
        adam_update({pviews[idx].first, pviews[idx].second}, {gd, gn},
                    st.buffers[idx], st.step, st.hyper, lr);
        ++idx;
    });
}

} // namespace

AdamState make_adam_for(GeneratorParams& params) {
    return make_adam_state([&](const ParamVisitor& fn) { visit_params(params, fn); });
}

AdamState make_adam_for(DiscriminatorParams& params) {
    return make_adam_state([&](const ParamVisitor& fn) { visit_params(params, fn); });
}

void apply_adam(GeneratorParams& params, GeneratorGrads& grads, AdamState& state, double lr) {
    adam_apply(params, grads, state, lr);
}

void apply_adam(DiscriminatorParams& params, DiscriminatorGrads& grads, AdamState& state,
                double lr) {
    adam_apply(params, grads, state, lr);
}

namespace {

Tensor stack_batch(const std::vector<PyramidPair>& batch, std::size_t level, bool sharp) {
    const Tensor& first = sharp ? batch.front().sharp[level] : batch.front().blurry[level];
    Tensor out(static_cast<int>(batch.size()), first.shape.c, first.shape.h, first.shape.w);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Tensor& src = sharp ? batch[i].sharp[level] : batch[i].blurry[level];
        if (!(src.shape == first.shape))
            throw ShapeError("train_step: batch items disagree in shape at level " +
                             std::to_string(level + 1));
        std::copy(src.v.begin(), src.v.end(),
                  out.v.begin() + static_cast<std::ptrdiff_t>(i * src.v.size()));
    }
    return out;
}

} // namespace

TrainState init_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.g = init_generator(cfg.gen, cfg.seed);
    // Content-only training still carries a (tiny) discriminator so the
    // checkpoint layout does not depend on lambda.
    const DiscriminatorSpec dspec =
        cfg.disc.convs.empty() ? DiscriminatorSpec::desk(8) : cfg.disc;
    st.d = init_discriminator(dspec, cfg.seed);
    st.adam_g = make_adam_state([&](const ParamVisitor& fn) { visit_params(st.g, fn); });
    st.adam_d = make_adam_state([&](const ParamVisitor& fn) { visit_params(st.d, fn); });
    return st;
}

LossBreakdown train_step(TrainState& state, const std::vector<PyramidPair>& batch) {
    if (batch.empty())
        throw ValueError("train_step: empty batch");
    const TrainConfig& cfg = state.cfg;
    const int K = cfg.gen.scales;
    for (const PyramidPair& p : batch)
        if (static_cast<int>(p.blurry.size()) != K || static_cast<int>(p.sharp.size()) != K)
            throw ShapeError("train_step: pyramid level count does not match the generator");

    std::vector<Tensor> blurry(static_cast<std::size_t>(K));
    std::vector<Tensor> sharp(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        blurry[static_cast<std::size_t>(k)] = stack_batch(batch, static_cast<std::size_t>(k), false);
        sharp[static_cast<std::size_t>(k)] = stack_batch(batch, static_cast<std::size_t>(k), true);
    }

    const double lr = cfg.lr_at(state.iteration);
    LossBreakdown out;

    GeneratorForward fwd;
    std::vector<Tensor> latents = generator_forward(blurry, state.g, &fwd);

    if (cfg.lambda > 0.0) {
        // Discriminator update first: real sharps vs generated finest latents.
        DiscriminatorCache real_cache, fake_cache;
        std::vector<double> d_real = discriminator_forward(sharp[0], state.d, &real_cache);
        std::vector<double> d_fake = discriminator_forward(latents[0], state.d, &fake_cache);
        out.adversarial_d = adversarial_d_loss(d_real, d_fake);
        auto [g_real, g_fake] = adversarial_d_loss_grad(d_real, d_fake);
        DiscriminatorGrads dg_real = discriminator_backward(real_cache, state.d, g_real);
        DiscriminatorGrads dg_fake = discriminator_backward(fake_cache, state.d, g_fake);
        // Sum the two passes in a fixed order.
        std::vector<std::pair<double*, std::size_t>> acc;
        visit_grads(dg_real, state.d, [&](const std::string&, double* d, std::size_t n, Shape) {
            acc.emplace_back(d, n);
        });
        std::size_t idx = 0;
        visit_grads(dg_fake, state.d, [&](const std::string&, double* d, std::size_t n, Shape) {
            for (std::size_t i = 0; i < n; ++i)
                acc[idx].first[i] += d[i];
            ++idx;
        });
        adam_apply(state.d, dg_real, state.adam_d, lr);
    }

    // Generator update against the (possibly just updated) discriminator.
    auto [content, per_level] = content_loss(latents, sharp);
    out.content = content;
    out.per_level_content = per_level;
    std::vector<Tensor> grad_latents = content_loss_grad(latents, sharp);

    if (cfg.lambda > 0.0) {
        DiscriminatorCache adv_cache;
        std::vector<double> d_fake = discriminator_forward(latents[0], state.d, &adv_cache);
        out.adversarial_g = adversarial_g_loss(d_fake, cfg.adv_non_saturating);
        std::vector<double> g_probs = adversarial_g_loss_grad(d_fake, cfg.adv_non_saturating);
        DiscriminatorGrads through_d = discriminator_backward(adv_cache, state.d, g_probs);
        for (std::size_t i = 0; i < grad_latents[0].v.size(); ++i)
            grad_latents[0].v[i] += cfg.lambda * through_d.input.v[i];
    }

    out.total = total_loss(out.content, out.adversarial_g, cfg.lambda);
    if (!std::isfinite(out.total) || !std::isfinite(out.adversarial_d))
        throw NumericalError("train_step: non-finite loss at iteration " +
                             std::to_string(state.iteration));

    GeneratorGrads gg = generator_backward(fwd, state.g, grad_latents);
    adam_apply(state.g, gg, state.adam_g, lr);

    ++state.iteration;
    return out;
}

std::vector<PyramidPair> sample_batch(const std::vector<BlurPair>& dataset,
                                      const TrainConfig& cfg, std::int64_t iteration) {
    if (dataset.empty())
        throw ValueError("sample_batch: empty dataset");
    std::vector<PyramidPair> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int slot = 0; slot < cfg.batch_size; ++slot) {
        Rng rng = Rng::stream(cfg.seed, {0x6261746368ULL /* "batch" */,
                                         static_cast<std::uint64_t>(iteration),
                                         static_cast<std::uint64_t>(slot)});
        const BlurPair& src = dataset[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(dataset.size())))];
        if (src.blurry.shape.h < cfg.patch_size || src.blurry.shape.w < cfg.patch_size)
            throw ShapeError("sample_batch: image smaller than the patch size");
        const int y0 = src.blurry.shape.h == cfg.patch_size
                           ? 0
                           : rng.uniform_int(src.blurry.shape.h - cfg.patch_size + 1);
        const int x0 = src.blurry.shape.w == cfg.patch_size
                           ? 0
                           : rng.uniform_int(src.blurry.shape.w - cfg.patch_size + 1);
        BlurPair cropped;
        cropped.blurry = crop(src.blurry, y0, x0, cfg.patch_size, cfg.patch_size);
        cropped.sharp = crop(src.sharp, y0, x0, cfg.patch_size, cfg.patch_size);
        BlurPair augmented = augment(cropped, cfg.aug, rng);
        batch.push_back(build_pyramid_pair(augmented.blurry, augmented.sharp,
                                           cfg.gen.scales));
    }
    return batch;
}

namespace {

struct DatasetEval {
    double content = 0.0;
    double model_psnr = 0.0;
    double baseline_psnr = 0.0;
};

DatasetEval eval_on_dataset(TrainState& state, const std::vector<BlurPair>& dataset) {
    DatasetEval e;
    for (const BlurPair& pair : dataset) {
        PyramidPair pp = build_pyramid_pair(pair.blurry, pair.sharp, state.cfg.gen.scales);
        std::vector<Tensor> latents = generator_forward(pp.blurry, state.g);
        e.content += content_loss(latents, pp.sharp).first;
        e.model_psnr += psnr(clip01(latents[0]), pp.sharp[0]);
        e.baseline_psnr += psnr(pp.blurry[0], pp.sharp[0]);
    }
    const double n = static_cast<double>(dataset.size());
    e.content /= n;
    e.model_psnr /= n;
    e.baseline_psnr /= n;
    return e;
}

} // namespace

SmokeReport overfit_smoke(TrainState& state, const std::vector<BlurPair>& dataset,
                          std::int64_t iterations) {
    if (dataset.empty())
        throw ValueError("overfit_smoke: empty dataset");
    // Pure content descent on the fixed pairs.
    state.cfg.lambda = 0.0;
    state.cfg.aug.flip_h = state.cfg.aug.flip_v = state.cfg.aug.rotate = false;
    state.cfg.aug.permute_channels = state.cfg.aug.saturation = state.cfg.aug.noise = false;

    SmokeReport rep;
    const DatasetEval before = eval_on_dataset(state, dataset);
    rep.initial_content = before.content;
    rep.baseline_psnr = before.baseline_psnr;

    for (std::int64_t i = 0; i < iterations; ++i) {
        std::vector<PyramidPair> batch = sample_batch(dataset, state.cfg, state.iteration);
        LossBreakdown lb = train_step(state, batch);
        rep.content_trace.push_back(lb.content);
    }

    const DatasetEval after = eval_on_dataset(state, dataset);
    rep.final_content = after.content;
    rep.train_psnr = after.model_psnr;
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

struct TensorEntry {
    std::string key;
    Shape shape;
    std::size_t offset = 0;
};

// Every serialized buffer of a training state, in a fixed order.
void collect_views(TrainState& st,
                   const std::function<void(const std::string&, double*, std::size_t, Shape)>& fn) {
    visit_params(st.g, fn);
    visit_params(st.d, fn);
    std::size_t idx = 0;
    visit_params(st.g, [&](const std::string& key, double*, std::size_t n, Shape shape) {
        fn("adam." + key + ".m", st.adam_g.buffers[idx].m.data(), n, shape);
        fn("adam." + key + ".v", st.adam_g.buffers[idx].v.data(), n, shape);
        ++idx;
    });
    idx = 0;
    visit_params(st.d, [&](const std::string& key, double*, std::size_t n, Shape shape) {
        fn("adam." + key + ".m", st.adam_d.buffers[idx].m.data(), n, shape);
        fn("adam." + key + ".v", st.adam_d.buffers[idx].v.data(), n, shape);
        ++idx;
    });
}

std::string disc_convs_str(const DiscriminatorSpec& s) {
    std::string out;
    for (std::size_t i = 0; i < s.convs.size(); ++i) {
        if (i)
            out += ",";
        out += std::to_string(s.convs[i].out_channels) + ":" + std::to_string(s.convs[i].stride);
    }
    return out;
}

std::vector<DiscConvSpec> parse_disc_convs(const std::string& text) {
    std::vector<DiscConvSpec> convs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw IoError("checkpoint: malformed discriminator layer list");
        convs.push_back({std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    }
    return convs;
}

} // namespace

void save_checkpoint(TrainState& state, const std::string& path) {
    std::vector<TensorEntry> entries;
    std::size_t offset = 0;
    collect_views(state, [&](const std::string& key, double*, std::size_t n, Shape shape) {
        entries.push_back({key, shape, offset});
        offset += n;
    });

    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    if (!f)
        throw IoError("save_checkpoint: cannot open " + tmp);

    const GeneratorSpec& gs = state.cfg.gen;
    const DiscriminatorSpec& ds = state.d.spec;
    f << "deblur-checkpoint v1\n";
    f << "generator.scales " << gs.scales << "\n";
    f << "generator.resblocks " << gs.resblocks_per_scale << "\n";
    f << "generator.channels " << gs.feature_channels << "\n";
    f << "generator.filter " << gs.filter_size << "\n";
    f << "generator.upconv_kernel " << gs.upconv_kernel << "\n";
    f << "generator.upconv_stride " << gs.upconv_stride << "\n";
    f << "generator.image_channels " << gs.image_channels << "\n";
    f << "discriminator.in_channels " << ds.in_channels << "\n";
    f << "discriminator.filter " << ds.filter_size << "\n";
    f << "discriminator.leaky_slope " << fmt_double(ds.leaky_slope) << "\n";
    f << "discriminator.input_size " << ds.input_size << "\n";
    f << "discriminator.fc_width " << ds.fc_width << "\n";
    f << "discriminator.convs " << disc_convs_str(ds) << "\n";
    f << "iteration " << state.iteration << "\n";
    f << "seed " << state.cfg.seed << "\n";
    f << "adam.step.g " << state.adam_g.step << "\n";
    f << "adam.step.d " << state.adam_d.step << "\n";
    f << "tensors " << entries.size() << "\n";
    for (const TensorEntry& e : entries)
        f << e.key << " " << e.shape.n << " " << e.shape.c << " " << e.shape.h << " "
          << e.shape.w << " " << e.offset << "\n";
    f << "data\n";
    collect_views(state, [&](const std::string&, double* d, std::size_t n, Shape) {
        f.write(reinterpret_cast<const char*>(d), static_cast<std::streamsize>(n * sizeof(double)));
    });
    f.close();
    if (!f)
        throw IoError("save_checkpoint: write failed for " + tmp);
    std::remove(path.c_str());
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("save_checkpoint: cannot move " + tmp + " into place");
}

TrainState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("load_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != "deblur-checkpoint v1")
        throw IoError("load_checkpoint: " + path + " is not a checkpoint file");

    std::map<std::string, std::string> kv;
    std::size_t tensor_count = 0;
    while (std::getline(f, line)) {
        if (line == "data")
            break;
        const auto space = line.find(' ');
        if (space == std::string::npos)
            throw IoError("load_checkpoint: malformed header line: " + line);
        const std::string key = line.substr(0, space);
        const std::string value = line.substr(space + 1);
        if (key == "tensors") {
            tensor_count = static_cast<std::size_t>(std::stoull(value));
            break;
        }
        kv[key] = value;
    }

    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end())
            throw IoError("load_checkpoint: missing header field " + key);
        return it->second;
    };

    TrainConfig cfg;
    cfg.gen.scales = std::stoi(need("generator.scales"));
    cfg.gen.resblocks_per_scale = std::stoi(need("generator.resblocks"));
    cfg.gen.feature_channels = std::stoi(need("generator.channels"));
    cfg.gen.filter_size = std::stoi(need("generator.filter"));
    cfg.gen.upconv_kernel = std::stoi(need("generator.upconv_kernel"));
    cfg.gen.upconv_stride = std::stoi(need("generator.upconv_stride"));
    cfg.gen.image_channels = std::stoi(need("generator.image_channels"));
    cfg.disc.in_channels = std::stoi(need("discriminator.in_channels"));
    cfg.disc.filter_size = std::stoi(need("discriminator.filter"));
    cfg.disc.leaky_slope = std::stod(need("discriminator.leaky_slope"));
    cfg.disc.input_size = std::stoi(need("discriminator.input_size"));
    cfg.disc.fc_width = std::stoi(need("discriminator.fc_width"));
    cfg.disc.convs = parse_disc_convs(need("discriminator.convs"));
    cfg.seed = std::stoull(need("seed"));
    cfg.patch_size = cfg.disc.input_size;

    TrainState st;
    st.cfg = cfg;
    st.g = init_generator(cfg.gen, 0);
    st.d = init_discriminator(cfg.disc, 0);
    st.adam_g = make_adam_state([&](const ParamVisitor& fn) { visit_params(st.g, fn); });
    st.adam_d = make_adam_state([&](const ParamVisitor& fn) { visit_params(st.d, fn); });
    st.iteration = std::stoll(need("iteration"));
    st.adam_g.step = std::stoll(need("adam.step.g"));
    st.adam_d.step = std::stoll(need("adam.step.d"));

    std::map<std::string, std::pair<Shape, std::size_t>> manifest;
    for (std::size_t i = 0; i < tensor_count; ++i) {
        if (!std::getline(f, line))
            throw IoError("load_checkpoint: truncated tensor manifest");
        std::stringstream ss(line);
        std::string key;
        Shape shape;
        std::size_t off = 0;
        if (!(ss >> key >> shape.n >> shape.c >> shape.h >> shape.w >> off))
            throw IoError("load_checkpoint: malformed manifest line: " + line);
        manifest[key] = {shape, off};
    }
    if (!std::getline(f, line) || line != "data")
        throw IoError("load_checkpoint: missing data section");

    const std::streampos data_start = f.tellg();
    std::size_t expected = 0;
    collect_views(st, [&](const std::string& key, double*, std::size_t n, Shape shape) {
        auto it = manifest.find(key);
        if (it == manifest.end())
            throw IoError("load_checkpoint: missing tensor " + key);
        if (!(it->second.first == shape))
            throw IoError("load_checkpoint: shape mismatch for " + key + ": file has " +
                          it->second.first.str() + ", expected " + shape.str());
        expected += n;
    });
    if (manifest.size() != tensor_count)
        throw IoError("load_checkpoint: manifest count mismatch");

    collect_views(st, [&](const std::string& key, double* d, std::size_t n, Shape) {
        const std::size_t off = manifest[key].second;
        f.seekg(data_start + static_cast<std::streamoff>(off * sizeof(double)));
        f.read(reinterpret_cast<char*>(d), static_cast<std::streamsize>(n * sizeof(double)));
        if (!f)
            throw IoError("load_checkpoint: truncated data for " + key);
    });
    return st;
}

TrainState load_checkpoint(const std::string& path, const TrainConfig& expected) {
    TrainState st = load_checkpoint(path);
    if (!(st.cfg.gen == expected.gen))
        throw IoError("load_checkpoint: generator spec in " + path +
                      " does not match the configured one");
    if (expected.lambda > 0.0 && !(st.d.spec == expected.disc))
        throw IoError("load_checkpoint: discriminator spec in " + path +
                      " does not match the configured one");
    st.cfg = expected;
    return st;
}

} // namespace deblur
