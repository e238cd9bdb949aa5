#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deblur/errors.hpp"
#include "deblur/model.hpp"
#include "deblur/pipeline.hpp"

#include <cmath>
#include <set>

using namespace deblur;

namespace {

void zero_params(ConvParams& p) {
    std::fill(p.weight.v.begin(), p.weight.v.end(), 0.0);
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
}

} // namespace

TEST_CASE("resblock with zero weights is the identity") {
    Rng rng(1);
    Tensor x = Tensor::randn(Shape{1, 16, 8, 8}, rng);
    GeneratorParams params = init_generator(GeneratorSpec::desk(), 7);
    ResBlockParams rb = params.stages[0].blocks[0];
    zero_params(rb.conv1);
    zero_params(rb.conv2);
    Tensor y = resblock_forward(x, rb);
    CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("resblock output can be negative: no activation after the addition") {
    Tensor x = Tensor::full(Shape{1, 16, 4, 4}, -0.5);
    GeneratorParams params = init_generator(GeneratorSpec::desk(), 7);
    ResBlockParams rb = params.stages[0].blocks[0];
    zero_params(rb.conv1); // branch contributes nothing, shortcut passes -0.5
    Tensor y = resblock_forward(x, rb);
    for (double v : y.v)
        CHECK(v == -0.5);
}

TEST_CASE("resblock gradcheck at 1e-4") {
    GradCheckSummary s = run_gradcheck("resblock", 11);
    CHECK(s.pass);
    CHECK(s.max_rel_err <= 1e-4);
}

TEST_CASE("stage_forward shapes: paper spec coarsest stage at 64x64") {
    GeneratorSpec spec = GeneratorSpec::paper();
    GeneratorParams params = init_generator(spec, 3);
    Rng rng(4);
    Tensor blurry = Tensor::uniform(Shape{1, 3, 64, 64}, rng, 0.0, 1.0);
    StageResult r = stage_forward(blurry, Tensor{}, params.stages.back(), spec);
    CHECK(r.latent.shape == Shape{1, 3, 64, 64});
    CHECK(r.up_feat.shape == Shape{1, spec.feature_channels, 128, 128});
}

TEST_CASE("stage_forward shapes: desk spec at 16x16 and finest stage has no up_feat") {
    GeneratorSpec spec = GeneratorSpec::desk();
    GeneratorParams params = init_generator(spec, 5);
    Rng rng(5);
    Tensor blurry = Tensor::uniform(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
    StageResult coarse = stage_forward(blurry, Tensor{}, params.stages.back(), spec);
    CHECK(coarse.latent.shape == Shape{1, 3, 16, 16});

    Tensor fine_in = Tensor::uniform(Shape{1, 3, 32, 32}, rng, 0.0, 1.0);
    StageResult fine = stage_forward(fine_in, coarse.up_feat, params.stages.front(), spec);
    CHECK(fine.latent.shape == Shape{1, 3, 32, 32});
    CHECK(fine.up_feat.empty());
}

TEST_CASE("generator output pyramid shapes equal input shapes") {
    GeneratorSpec spec = GeneratorSpec::desk();
    GeneratorParams params = init_generator(spec, 6);
    Rng rng(6);
    std::vector<Tensor> pyramid = {Tensor::uniform(Shape{2, 3, 256, 256}, rng, 0.0, 1.0),
                                   Tensor::uniform(Shape{2, 3, 128, 128}, rng, 0.0, 1.0),
                                   Tensor::uniform(Shape{2, 3, 64, 64}, rng, 0.0, 1.0)};
    std::vector<Tensor> latents = generator_forward(pyramid, params);
    REQUIRE(latents.size() == 3);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(latents[k].shape == pyramid[k].shape);
}

TEST_CASE("full paper-spec topology runs end to end on a small pyramid") {
    GeneratorSpec spec = GeneratorSpec::paper();
    GeneratorParams params = init_generator(spec, 8);
    Rng rng(8);
    std::vector<Tensor> pyramid = {Tensor::uniform(Shape{1, 3, 16, 16}, rng, 0.0, 1.0),
                                   Tensor::uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0),
                                   Tensor::uniform(Shape{1, 3, 4, 4}, rng, 0.0, 1.0)};
    std::vector<Tensor> latents = generator_forward(pyramid, params);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(latents[k].shape == pyramid[k].shape);
        CHECK(latents[k].all_finite());
    }
}

TEST_CASE("generator forward is deterministic") {
    GeneratorSpec spec = GeneratorSpec::desk();
    GeneratorParams params = init_generator(spec, 9);
    Rng rng(9);
    std::vector<Tensor> pyramid = {Tensor::uniform(Shape{1, 3, 32, 32}, rng, 0.0, 1.0),
                                   Tensor::uniform(Shape{1, 3, 16, 16}, rng, 0.0, 1.0),
                                   Tensor::uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0)};
    std::vector<Tensor> a = generator_forward(pyramid, params);
    std::vector<Tensor> b = generator_forward(pyramid, params);
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(max_abs_diff(a[k], b[k]) == 0.0);
}

TEST_CASE("generator rejects wrong level counts and broken halving") {
    GeneratorParams params = init_generator(GeneratorSpec::desk(), 10);
    std::vector<Tensor> two = {Tensor(1, 3, 32, 32), Tensor(1, 3, 16, 16)};
    CHECK_THROWS_AS(generator_forward(two, params), ShapeError);
    std::vector<Tensor> bad = {Tensor(1, 3, 32, 32), Tensor(1, 3, 16, 16),
                               Tensor(1, 3, 9, 9)};
    CHECK_THROWS_AS(generator_forward(bad, params), ShapeError);
}

TEST_CASE("paper architecture audit: 40 convs per scale, 120 total, receptive field 161") {
    GeneratorSpec spec = GeneratorSpec::paper();
    CHECK(spec.resblocks_per_scale == 19);
    CHECK(spec.feature_channels == 64);
    CHECK(spec.filter_size == 5);
    CHECK(spec.convs_per_scale() == 40);
    CHECK(spec.total_convs() == 120);
    CHECK(spec.upconv_count() == 2);
    CHECK(spec.receptive_field() == 161);
    CHECK(spec.receptive_field() >= 64); // covers the whole coarsest patch

    GeneratorSpec desk = GeneratorSpec::desk();
    CHECK(desk.convs_per_scale() == 6);
    CHECK(desk.receptive_field() == 25);

    GeneratorSpec single;
    single.resblocks_per_scale = 0;
    CHECK(single.convs_per_scale() * (single.filter_size - 1) + 1 == 9);
    // One 5x5 convolution sees exactly 5 pixels across.
    GeneratorSpec one_conv;
    one_conv.resblocks_per_scale = 0;
    CHECK(1 + 1 * (one_conv.filter_size - 1) == 5);
}

TEST_CASE("parameter inventory contains convolutions only (no normalization state)") {
    GeneratorSpec spec = GeneratorSpec::paper();
    GeneratorParams params = init_generator(spec, 12);
    int weights = 0, biases = 0;
    std::set<std::string> keys;
    visit_params(params, [&](const std::string& key, double*, std::size_t, Shape) {
        CHECK(keys.insert(key).second); // unique
        const bool is_w = key.ends_with(".w");
        const bool is_b = key.ends_with(".b");
        CHECK((is_w || is_b));
        weights += is_w ? 1 : 0;
        biases += is_b ? 1 : 0;
        CHECK(key.find("bn") == std::string::npos);
        CHECK(key.find("norm") == std::string::npos);
    });
    // 120 convolutions plus K-1 upconvolutions, each a weight/bias pair.
    CHECK(weights == spec.total_convs() + spec.upconv_count());
    CHECK(biases == weights);
}

TEST_CASE("discriminator full-scale trace: 256x256 collapses to 1x1x1024") {
    DiscriminatorSpec spec = DiscriminatorSpec::paper();
    spec.validate();
    const std::vector<int> expected = {128, 128, 64, 64, 32, 32, 8, 8, 2, 1};
    CHECK(spec.spatial_trace() == expected);
    CHECK(spec.convs.back().out_channels == 1024);
    CHECK(spec.fc_width == 1024);
    const std::vector<int> strides = {2, 1, 2, 1, 2, 1, 4, 1, 4, 2};
    REQUIRE(spec.convs.size() == strides.size());
    for (std::size_t i = 0; i < strides.size(); ++i)
        CHECK(spec.convs[i].stride == strides[i]);
}

TEST_CASE("discriminator with zero weights outputs exactly 0.5") {
    DiscriminatorSpec spec = DiscriminatorSpec::desk(32);
    DiscriminatorParams params = init_discriminator(spec, 13);
    visit_params(params, [&](const std::string&, double* d, std::size_t n, Shape) {
        std::fill(d, d + n, 0.0);
    });
    Rng rng(13);
    Tensor images = Tensor::uniform(Shape{2, 3, 32, 32}, rng, 0.0, 1.0);
    std::vector<double> probs = discriminator_forward(images, params);
    for (double p : probs)
        CHECK(p == 0.5);
}

TEST_CASE("discriminator output stays inside (0,1) for wild inputs") {
    DiscriminatorSpec spec = DiscriminatorSpec::desk(32);
    DiscriminatorParams params = init_discriminator(spec, 14);
    Rng rng(14);
    Tensor images = Tensor::randn(Shape{3, 3, 32, 32}, rng, 1000.0);
    std::vector<double> probs = discriminator_forward(images, params);
    for (double p : probs) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        CHECK(std::isfinite(p));
    }
}

TEST_CASE("discriminator rejects incompatible input sizes") {
    DiscriminatorSpec spec = DiscriminatorSpec::desk(32);
    DiscriminatorParams params = init_discriminator(spec, 15);
    CHECK_THROWS_AS(discriminator_forward(Tensor(1, 3, 48, 48), params), ShapeError);
}

TEST_CASE("generator spec rejects upconvolutions that cannot double exactly") {
    GeneratorSpec spec = GeneratorSpec::desk();
    spec.upconv_kernel = 3; // odd kernel minus stride 2: no symmetric crop
    CHECK_THROWS_AS(spec.validate(), ValueError);
    spec.upconv_kernel = 4;
    spec.upconv_stride = 3;
    CHECK_THROWS_AS(spec.validate(), ValueError);
    spec.upconv_stride = 2;
    CHECK_NOTHROW(spec.validate());
    CHECK(spec.upconv_pad() == 1);
}

TEST_CASE("generator and discriminator desk-scale gradchecks") {
    GradCheckSummary gen = run_gradcheck("generator", 21);
    CHECK(gen.pass);
    CHECK(gen.max_rel_err <= 1e-4);
    GradCheckSummary disc = run_gradcheck("discriminator", 22);
    CHECK(disc.pass);
    CHECK(disc.max_rel_err <= 1e-4);
}
