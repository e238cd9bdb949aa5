#include "deblur/model.hpp"

#include "deblur/errors.hpp"

#include <algorithm>
#include <cmath>

namespace deblur {

GeneratorSpec GeneratorSpec::paper() {
    return GeneratorSpec{};
}

GeneratorSpec GeneratorSpec::desk() {
    GeneratorSpec s;
    s.resblocks_per_scale = 2;
    s.feature_channels = 16;
    return s;
}

void GeneratorSpec::validate() const {
    if (scales < 1)
        throw ValueError("generator spec: scales must be >= 1");
    if (resblocks_per_scale < 0)
        throw ValueError("generator spec: negative ResBlock count");
    if (feature_channels < 1 || image_channels < 1)
        throw ValueError("generator spec: channel counts must be positive");
    if (filter_size < 1 || filter_size % 2 == 0)
        throw ValueError("generator spec: filter size must be odd");
    // Exact 2x upsampling needs stride 2 and a symmetric crop.
    if (upconv_stride != 2)
        throw ValueError("generator spec: upconvolution stride must be 2");
    if (upconv_kernel < upconv_stride || (upconv_kernel - upconv_stride) % 2 != 0)
        throw ValueError("generator spec: upconvolution kernel cannot double the resolution exactly");
}

namespace {

// Fan-in-scaled uniform weights, zero bias. The gain damps the residual
// branch outputs and the image-producing tails; without it the variance
// compounds across the stacked ResBlocks and scale stages and the initial
// latents start far outside [0,1].
constexpr double kResidualBranchGain = 0.1;
constexpr double kTailGain = 0.1;

ConvParams make_conv(int out_c, int in_c, int k, int stride, int pad, Rng& rng,
                     double gain = 1.0) {
    ConvParams p;
    p.weight = Tensor(out_c, in_c, k, k);
    const double bound = gain * std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
    for (auto& w : p.weight.v)
        w = rng.uniform(-bound, bound);
    p.bias.assign(static_cast<std::size_t>(out_c), 0.0);
    p.stride = stride;
    p.pad = pad;
    return p;
}

// Transposed-conv weight layout is (in_c, out_c, kh, kw).
ConvParams make_upconv(int in_c, int out_c, int k, int stride, int pad, Rng& rng) {
    ConvParams p;
    p.weight = Tensor(in_c, out_c, k, k);
    const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * k * k));
    for (auto& w : p.weight.v)
        w = rng.uniform(-bound, bound);
    p.bias.assign(static_cast<std::size_t>(out_c), 0.0);
    p.stride = stride;
    p.pad = pad;
    return p;
}

ConvParams zeros_like(const ConvParams& p) {
    ConvParams g;
    g.weight = Tensor(p.weight.shape);
    g.bias.assign(p.bias.size(), 0.0);
    g.stride = p.stride;
    g.pad = p.pad;
    return g;
}

void add_into(ConvParams& dst, const Tensor& w, const std::vector<double>& b) {
    for (std::size_t i = 0; i < dst.weight.v.size(); ++i)
        dst.weight.v[i] += w.v[i];
    for (std::size_t i = 0; i < dst.bias.size(); ++i)
        dst.bias[i] += b[i];
}

void add_into(Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.v.size(); ++i)
        dst.v[i] += src.v[i];
}

} // namespace

GeneratorParams init_generator(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = Rng::stream(seed, {0x67656e /* "gen" */});
    GeneratorParams params;
    params.spec = spec;
    params.stages.resize(static_cast<std::size_t>(spec.scales));
    const int k = spec.filter_size;
    const int pad = spec.conv_pad();
    const int F = spec.feature_channels;
    const int C = spec.image_channels;
    for (int s = spec.scales - 1; s >= 0; --s) {
        StageParams& st = params.stages[static_cast<std::size_t>(s)];
        const bool coarsest = (s == spec.scales - 1);
        const int head_in = coarsest ? C : C + F;
        st.head = make_conv(F, head_in, k, 1, pad, rng);
        st.blocks.resize(static_cast<std::size_t>(spec.resblocks_per_scale));
        for (auto& rb : st.blocks) {
            rb.conv1 = make_conv(F, F, k, 1, pad, rng);
            rb.conv2 = make_conv(F, F, k, 1, pad, rng, kResidualBranchGain);
        }
        st.tail = make_conv(C, F, k, 1, pad, rng, kTailGain);
        st.has_up = (s > 0);
        if (st.has_up)
            st.up = make_upconv(F, F, spec.upconv_kernel, spec.upconv_stride,
                                spec.upconv_pad(), rng);
    }
    return params;
}

Tensor resblock_forward(const Tensor& x, const ResBlockParams& p) {
    if (p.conv1.weight.shape.c != x.shape.c || p.conv2.weight.shape.n != x.shape.c)
        throw ShapeError("resblock: channel mismatch");
    Tensor out = conv2d(relu(conv2d(x, p.conv1)), p.conv2);
    add_into(out, x);
    return out;
}

StageResult stage_forward(const Tensor& blurry_k, const Tensor& coarser_feat,
                          const StageParams& p, const GeneratorSpec& spec,
                          StageCache* cache) {
    StageCache local;
    StageCache& c = cache ? *cache : local;

    if (coarser_feat.empty()) {
        c.input = blurry_k;
    } else {
        if (coarser_feat.shape.h != blurry_k.shape.h || coarser_feat.shape.w != blurry_k.shape.w)
            throw ShapeError("stage_forward: upsampled feature " + coarser_feat.shape.str() +
                             " does not match blurry input " + blurry_k.shape.str());
        c.input = concat_channels(blurry_k, coarser_feat);
    }

    c.head_out = conv2d(c.input, p.head);
    c.blocks.clear();
    c.blocks.reserve(p.blocks.size());
    Tensor x = c.head_out;
    for (const ResBlockParams& rb : p.blocks) {
        ResBlockCache bc;
        bc.input = x;
        bc.pre1 = conv2d(x, rb.conv1);
        Tensor y = conv2d(relu(bc.pre1), rb.conv2);
        add_into(y, x);
        x = std::move(y);
        c.blocks.push_back(std::move(bc));
    }
    c.feat = std::move(x);

    StageResult r;
    r.latent = conv2d(c.feat, p.tail);
    add_into(r.latent, blurry_k); // residual prediction on the blurry input
    if (p.has_up) {
        c.up_out = upconv2d(c.feat, p.up);
        r.up_feat = c.up_out;
    } else {
        c.up_out = Tensor();
    }
    (void)spec;
    return r;
}

std::vector<Tensor> generator_forward(const std::vector<Tensor>& pyramid,
                                      const GeneratorParams& params,
                                      GeneratorForward* cache) {
    const GeneratorSpec& spec = params.spec;
    if (static_cast<int>(pyramid.size()) != spec.scales)
        throw ShapeError("generator_forward: expected " + std::to_string(spec.scales) +
                         " pyramid levels, got " + std::to_string(pyramid.size()));
    for (int k = 0; k + 1 < spec.scales; ++k) {
        const Shape& fine = pyramid[static_cast<std::size_t>(k)].shape;
        const Shape& coarse = pyramid[static_cast<std::size_t>(k + 1)].shape;
        if (coarse.h * 2 != fine.h || coarse.w * 2 != fine.w || coarse.n != fine.n)
            throw ShapeError("generator_forward: levels " + fine.str() + " and " +
                             coarse.str() + " do not halve exactly");
    }

    GeneratorForward local;
    GeneratorForward& f = cache ? *cache : local;
    f.stages.assign(static_cast<std::size_t>(spec.scales), StageCache{});
    f.latents.assign(static_cast<std::size_t>(spec.scales), Tensor{});

    Tensor up_feat;
    for (int k = spec.scales - 1; k >= 0; --k) {
        StageResult r = stage_forward(pyramid[static_cast<std::size_t>(k)], up_feat,
                                      params.stages[static_cast<std::size_t>(k)], spec,
                                      &f.stages[static_cast<std::size_t>(k)]);
        f.latents[static_cast<std::size_t>(k)] = std::move(r.latent);
        up_feat = std::move(r.up_feat);
    }
    return f.latents;
}

GeneratorGrads generator_backward(const GeneratorForward& fwd,
                                  const GeneratorParams& params,
                                  const std::vector<Tensor>& grad_latents) {
    const GeneratorSpec& spec = params.spec;
    if (grad_latents.size() != fwd.latents.size())
        throw ShapeError("generator_backward: wrong latent gradient count");

    GeneratorGrads g;
    g.stages.reserve(params.stages.size());
    for (const StageParams& st : params.stages) {
        StageParams zs;
        zs.head = zeros_like(st.head);
        zs.blocks.resize(st.blocks.size());
        for (std::size_t i = 0; i < st.blocks.size(); ++i) {
            zs.blocks[i].conv1 = zeros_like(st.blocks[i].conv1);
            zs.blocks[i].conv2 = zeros_like(st.blocks[i].conv2);
        }
        zs.tail = zeros_like(st.tail);
        zs.has_up = st.has_up;
        if (st.has_up)
            zs.up = zeros_like(st.up);
        g.stages.push_back(std::move(zs));
    }
    g.blurry.assign(params.stages.size(), Tensor{});

    Tensor grad_up_pending; // dL/d(up_out) of the stage about to be processed
    for (int k = 0; k < spec.scales; ++k) {
        const StageCache& c = fwd.stages[static_cast<std::size_t>(k)];
        const StageParams& p = params.stages[static_cast<std::size_t>(k)];
        StageParams& pg = g.stages[static_cast<std::size_t>(k)];
        const Tensor& g_latent = grad_latents[static_cast<std::size_t>(k)];

        // latent = blurry + tail(feat): the skip routes the latent gradient
        // straight to the blurry input.
        g.blurry[static_cast<std::size_t>(k)] = g_latent;

        ConvGrads tail_g = conv2d_backward(c.feat, p.tail, g_latent);
        Tensor g_feat = std::move(tail_g.input);
        add_into(pg.tail, tail_g.weight, tail_g.bias);

        if (p.has_up) {
            if (grad_up_pending.empty())
                throw ShapeError("generator_backward: missing upconv gradient");
            ConvGrads up_g = upconv2d_backward(c.feat, p.up, grad_up_pending);
            add_into(g_feat, up_g.input);
            add_into(pg.up, up_g.weight, up_g.bias);
        }

        Tensor gx = std::move(g_feat);
        for (int i = static_cast<int>(p.blocks.size()) - 1; i >= 0; --i) {
            const ResBlockCache& bc = c.blocks[static_cast<std::size_t>(i)];
            const ResBlockParams& rb = p.blocks[static_cast<std::size_t>(i)];
            ResBlockParams& rbg = pg.blocks[static_cast<std::size_t>(i)];
            ConvGrads c2g = conv2d_backward(relu(bc.pre1), rb.conv2, gx);
            add_into(rbg.conv2, c2g.weight, c2g.bias);
            Tensor g_pre1 = relu_backward(bc.pre1, c2g.input);
            ConvGrads c1g = conv2d_backward(bc.input, rb.conv1, g_pre1);
            add_into(rbg.conv1, c1g.weight, c1g.bias);
            add_into(gx, c1g.input); // shortcut add
        }

        ConvGrads head_g = conv2d_backward(c.input, p.head, gx);
        add_into(pg.head, head_g.weight, head_g.bias);

        if (k == spec.scales - 1) {
            add_into(g.blurry[static_cast<std::size_t>(k)], head_g.input);
        } else {
            auto [gb, gu] = split_channels(head_g.input, spec.image_channels);
            add_into(g.blurry[static_cast<std::size_t>(k)], gb);
            grad_up_pending = std::move(gu);
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

DiscriminatorSpec DiscriminatorSpec::paper() {
    DiscriminatorSpec s;
    s.convs = {{32, 2}, {64, 1}, {64, 2}, {128, 1}, {128, 2},
               {256, 1}, {256, 4}, {512, 1}, {512, 4}, {1024, 2}};
    s.fc_width = 1024;
    s.input_size = 256;
    return s;
}

DiscriminatorSpec DiscriminatorSpec::desk(int input_size) {
    if (input_size < 8 || (input_size & (input_size - 1)) != 0)
        throw ValueError("desk discriminator needs a power-of-two input size >= 8");
    DiscriminatorSpec s;
    s.input_size = input_size;
    int ch = 8;
    for (int size = input_size; size > 1; size /= 2) {
        s.convs.push_back({ch, 2});
        ch = std::min(ch * 2, 64);
    }
    s.fc_width = s.convs.back().out_channels;
    return s;
}

std::vector<int> DiscriminatorSpec::spatial_trace() const {
    std::vector<int> trace;
    int size = input_size;
    for (const DiscConvSpec& c : convs) {
        size = (size + 2 * conv_pad() - filter_size) / c.stride + 1;
        if (size < 1)
            throw ShapeError("discriminator spec: stride schedule collapses below 1x1");
        trace.push_back(size);
    }
    return trace;
}

void DiscriminatorSpec::validate() const {
    if (convs.empty())
        throw ValueError("discriminator spec: no convolution layers");
    if (filter_size < 1 || filter_size % 2 == 0)
        throw ValueError("discriminator spec: filter size must be odd");
    const std::vector<int> trace = spatial_trace();
    if (trace.back() != 1)
        throw ShapeError("discriminator spec: final feature map is " +
                         std::to_string(trace.back()) + "x" + std::to_string(trace.back()) +
                         ", expected 1x1");
    if (convs.back().out_channels != fc_width)
        throw ShapeError("discriminator spec: flatten width " +
                         std::to_string(convs.back().out_channels) +
                         " does not match fc width " + std::to_string(fc_width));
}

DiscriminatorParams init_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = Rng::stream(seed, {0x64697363 /* "disc" */});
    DiscriminatorParams p;
    p.spec = spec;
    int in_c = spec.in_channels;
    for (const DiscConvSpec& c : spec.convs) {
        p.convs.push_back(make_conv(c.out_channels, in_c, spec.filter_size, c.stride,
                                    spec.conv_pad(), rng));
        in_c = c.out_channels;
    }
    p.fc = make_conv(spec.fc_width, spec.fc_width, 1, 1, 0, rng);
    return p;
}

std::vector<double> discriminator_forward(const Tensor& images,
                                          const DiscriminatorParams& params,
                                          DiscriminatorCache* cache) {
    const DiscriminatorSpec& spec = params.spec;
    if (images.shape.c != spec.in_channels || images.shape.h != spec.input_size ||
        images.shape.w != spec.input_size)
        throw ShapeError("discriminator_forward: input " + images.shape.str() +
                         " incompatible with expected " + std::to_string(spec.in_channels) +
                         "x" + std::to_string(spec.input_size) + "x" +
                         std::to_string(spec.input_size));

    DiscriminatorCache local;
    DiscriminatorCache& c = cache ? *cache : local;
    c.conv_in.clear();
    c.conv_pre.clear();

    Tensor x = images;
    for (const ConvParams& conv : params.convs) {
        c.conv_in.push_back(x);
        Tensor z = conv2d(x, conv);
        c.conv_pre.push_back(z);
        x = leaky_relu(z, spec.leaky_slope);
    }
    // 1x1 spatial extent by construction; the fc layer is a 1x1 conv.
    c.conv_in.push_back(x);
    c.fc_out = conv2d(x, params.fc);

    const int n = images.shape.n;
    c.logits.assign(static_cast<std::size_t>(n), 0.0);
    c.probs.assign(static_cast<std::size_t>(n), 0.0);
    for (int bi = 0; bi < n; ++bi) {
        double mean = 0.0;
        for (int ch = 0; ch < spec.fc_width; ++ch)
            mean += c.fc_out.at(bi, ch, 0, 0);
        mean /= static_cast<double>(spec.fc_width);
        c.logits[static_cast<std::size_t>(bi)] = mean;
        c.probs[static_cast<std::size_t>(bi)] = 1.0 / (1.0 + std::exp(-mean));
    }
    return c.probs;
}

DiscriminatorGrads discriminator_backward(const DiscriminatorCache& cache,
                                          const DiscriminatorParams& params,
                                          const std::vector<double>& grad_probs) {
    const DiscriminatorSpec& spec = params.spec;
    const std::size_t n = cache.probs.size();
    if (grad_probs.size() != n)
        throw ShapeError("discriminator_backward: gradient count mismatch");

    DiscriminatorGrads g;
    g.convs.reserve(params.convs.size());
    for (const ConvParams& conv : params.convs)
        g.convs.push_back(zeros_like(conv));
    g.fc = zeros_like(params.fc);

    // prob = sigmoid(mean(fc_out)): spread the logit gradient evenly.
    Tensor g_fc_out(cache.fc_out.shape);
    for (std::size_t bi = 0; bi < n; ++bi) {
        const double p = cache.probs[bi];
        const double g_logit = grad_probs[bi] * p * (1.0 - p);
        const double per_unit = g_logit / static_cast<double>(spec.fc_width);
        for (int ch = 0; ch < spec.fc_width; ++ch)
            g_fc_out.at(static_cast<int>(bi), ch, 0, 0) = per_unit;
    }

    ConvGrads fc_g = conv2d_backward(cache.conv_in.back(), params.fc, g_fc_out);
    add_into(g.fc, fc_g.weight, fc_g.bias);
    Tensor gx = std::move(fc_g.input);

    for (int i = static_cast<int>(params.convs.size()) - 1; i >= 0; --i) {
        Tensor gz = leaky_relu_backward(cache.conv_pre[static_cast<std::size_t>(i)],
                                        spec.leaky_slope, gx);
        ConvGrads cg = conv2d_backward(cache.conv_in[static_cast<std::size_t>(i)],
                                       params.convs[static_cast<std::size_t>(i)], gz);
        add_into(g.convs[static_cast<std::size_t>(i)], cg.weight, cg.bias);
        gx = std::move(cg.input);
    }
    g.input = std::move(gx);
    return g;
}

// ---------------------------------------------------------------------------
// Parameter traversal
// ---------------------------------------------------------------------------

namespace {

void visit_conv(const std::string& key, ConvParams& c, const ParamVisitor& fn) {
    fn(key + ".w", c.weight.v.data(), c.weight.v.size(), c.weight.shape);
    fn(key + ".b", c.bias.data(), c.bias.size(),
       Shape{static_cast<int>(c.bias.size()), 1, 1, 1});
}

void visit_stages(std::vector<StageParams>& stages, const ParamVisitor& fn) {
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const std::string base = "g.s" + std::to_string(s + 1); // 1 = finest scale
        visit_conv(base + ".head", stages[s].head, fn);
        for (std::size_t i = 0; i < stages[s].blocks.size(); ++i) {
            visit_conv(base + ".rb" + std::to_string(i) + ".c1", stages[s].blocks[i].conv1, fn);
            visit_conv(base + ".rb" + std::to_string(i) + ".c2", stages[s].blocks[i].conv2, fn);
        }
        visit_conv(base + ".tail", stages[s].tail, fn);
        if (stages[s].has_up)
            visit_conv(base + ".up", stages[s].up, fn);
    }
}

void visit_disc(std::vector<ConvParams>& convs, ConvParams& fc, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < convs.size(); ++i)
        visit_conv("d.conv" + std::to_string(i + 1), convs[i], fn);
    visit_conv("d.fc", fc, fn);
}

} // namespace

void visit_params(GeneratorParams& p, const ParamVisitor& fn) {
    visit_stages(p.stages, fn);
}

void visit_params(DiscriminatorParams& p, const ParamVisitor& fn) {
    visit_disc(p.convs, p.fc, fn);
}

void visit_grads(GeneratorGrads& g, const GeneratorParams& p, const ParamVisitor& fn) {
    (void)p;
    visit_stages(g.stages, fn);
}

void visit_grads(DiscriminatorGrads& g, const DiscriminatorParams& p, const ParamVisitor& fn) {
    (void)p;
    visit_disc(g.convs, g.fc, fn);
}

std::size_t param_count(GeneratorParams& p) {
    std::size_t total = 0;
    visit_params(p, [&](const std::string&, double*, std::size_t size, Shape) { total += size; });
    return total;
}

std::size_t param_count(DiscriminatorParams& p) {
    std::size_t total = 0;
    visit_params(p, [&](const std::string&, double*, std::size_t size, Shape) { total += size; });
    return total;
}

} // namespace deblur
