#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deblur/adam.hpp"
#include "deblur/errors.hpp"
#include "deblur/gradcheck.hpp"
#include "deblur/ops.hpp"
#include "deblur/parallel.hpp"
#include "deblur/rng.hpp"
#include "deblur/tensor.hpp"

#include "test_util.hpp"

#include <cmath>

using namespace deblur;

namespace {

// Direct zero-padded cross-correlation, written independently of the library
// loops: one scalar sum per output element, nothing shared with conv2d.
Tensor conv2d_oracle(const Tensor& in, const ConvParams& p) {
    const int out_c = p.weight.shape.n;
    const int in_c = p.weight.shape.c;
    const int kh = p.weight.shape.h, kw = p.weight.shape.w;
    const int oh = (in.shape.h + 2 * p.pad - kh) / p.stride + 1;
    const int ow = (in.shape.w + 2 * p.pad - kw) / p.stride + 1;
    Tensor out(in.shape.n, out_c, oh, ow);
    for (int b = 0; b < in.shape.n; ++b)
        for (int oc = 0; oc < out_c; ++oc)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = p.bias[static_cast<std::size_t>(oc)];
                    for (int ic = 0; ic < in_c; ++ic)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * p.stride - p.pad + ky;
                                const int ix = ox * p.stride - p.pad + kx;
                                if (iy < 0 || iy >= in.shape.h || ix < 0 || ix >= in.shape.w)
                                    continue;
                                acc += in.at(b, ic, iy, ix) * p.weight.at(oc, ic, ky, kx);
                            }
                    out.at(b, oc, oy, ox) = acc;
                }
    return out;
}

// Scatter-add oracle for the transposed convolution: every input element
// stamps a weighted kernel into the output.
Tensor upconv2d_oracle(const Tensor& in, const ConvParams& p) {
    const int in_c = p.weight.shape.n;
    const int out_c = p.weight.shape.c;
    const int kh = p.weight.shape.h, kw = p.weight.shape.w;
    const int oh = p.stride * (in.shape.h - 1) + kh - 2 * p.pad;
    const int ow = p.stride * (in.shape.w - 1) + kw - 2 * p.pad;
    Tensor out(in.shape.n, out_c, oh, ow);
    for (int b = 0; b < in.shape.n; ++b)
        for (int j = 0; j < out_c; ++j)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x)
                    out.at(b, j, y, x) = p.bias[static_cast<std::size_t>(j)];
    for (int b = 0; b < in.shape.n; ++b)
        for (int i = 0; i < in_c; ++i)
            for (int iy = 0; iy < in.shape.h; ++iy)
                for (int ix = 0; ix < in.shape.w; ++ix)
                    for (int j = 0; j < out_c; ++j)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int oy = iy * p.stride - p.pad + ky;
                                const int ox = ix * p.stride - p.pad + kx;
                                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow)
                                    continue;
                                out.at(b, j, oy, ox) +=
                                    in.at(b, i, iy, ix) * p.weight.at(i, j, ky, kx);
                            }
    return out;
}

ConvParams random_conv(int out_c, int in_c, int k, int stride, int pad, Rng& rng) {
    ConvParams p;
    p.weight = Tensor::randn(Shape{out_c, in_c, k, k}, rng, 0.5);
    p.bias.resize(static_cast<std::size_t>(out_c));
    for (auto& b : p.bias)
        b = rng.normal();
    p.stride = stride;
    p.pad = pad;
    return p;
}

} // namespace

TEST_CASE("tensor basics and concat/slice round trip") {
    Tensor t(2, 3, 4, 5);
    CHECK(t.size() == 2u * 3 * 4 * 5);
    t.at(1, 2, 3, 4) = 7.0;
    CHECK(t.v.back() == 7.0);

    Rng rng(42);
    Tensor a = Tensor::randn(Shape{1, 3, 8, 8}, rng);
    Tensor b = Tensor::randn(Shape{1, 64, 8, 8}, rng);
    Tensor cat = concat_channels(a, b);
    CHECK(cat.shape == Shape{1, 67, 8, 8});
    auto [a2, b2] = split_channels(cat, 3);
    CHECK(max_abs_diff(a, a2) == 0.0);
    CHECK(max_abs_diff(b, b2) == 0.0);

    Tensor c = Tensor::randn(Shape{1, 2, 9, 8}, rng);
    CHECK_THROWS_AS(concat_channels(a, c), ShapeError);
}

TEST_CASE("tensor dump round trip") {
    testutil::TempDir dir("tensor_dump");
    Rng rng(7);
    Tensor t = Tensor::randn(Shape{2, 3, 5, 4}, rng);
    const std::string path = (dir / "t.bin").string();
    save_tensor(t, path);
    Tensor back = load_tensor(path);
    CHECK(back.shape == t.shape);
    CHECK(max_abs_diff(t, back) == 0.0);
}

TEST_CASE("conv2d identity kernel") {
    Tensor in = Tensor::full(Shape{1, 1, 3, 3}, 1.0);
    ConvParams p;
    p.weight = Tensor::full(Shape{1, 1, 1, 1}, 1.0);
    p.bias = {0.0};
    Tensor out = conv2d(in, p);
    CHECK(out.shape == in.shape);
    CHECK(max_abs_diff(out, in) == 0.0);
}

TEST_CASE("conv2d averaging kernel matches direct summation") {
    Tensor in = Tensor::from_data(Shape{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    ConvParams p;
    p.weight = Tensor::full(Shape{1, 1, 3, 3}, 1.0 / 9.0);
    p.bias = {0.0};
    p.pad = 1;
    Tensor out = conv2d(in, p);
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(5.0).epsilon(1e-15));
    Tensor expected = conv2d_oracle(in, p);
    CHECK(max_abs_diff(out, expected) < 1e-14);
}

TEST_CASE("conv2d rejects channel mismatch") {
    Tensor in(1, 2, 4, 4);
    ConvParams p;
    p.weight = Tensor(1, 3, 3, 3);
    p.bias = {0.0};
    CHECK_THROWS_AS(conv2d(in, p), ShapeError);
}

TEST_CASE("conv2d agrees with the oracle on random shapes and strides") {
    Rng rng(123);
    for (int stride : {1, 2}) {
        for (int pad : {0, 1, 2}) {
            Tensor in = Tensor::randn(Shape{2, 3, 9, 7}, rng);
            ConvParams p = random_conv(4, 3, 3, stride, pad, rng);
            CHECK(max_abs_diff(conv2d(in, p), conv2d_oracle(in, p)) < 1e-12);
        }
    }
}

TEST_CASE("conv2d stride-1 same padding preserves spatial size") {
    Rng rng(5);
    for (int k : {1, 3, 5}) {
        Tensor in = Tensor::randn(Shape{1, 2, 10, 12}, rng);
        ConvParams p = random_conv(3, 2, k, 1, (k - 1) / 2, rng);
        CHECK(conv2d(in, p).shape == Shape{1, 3, 10, 12});
    }
}

TEST_CASE("conv2d_backward: zero grad_out gives zero gradients") {
    Rng rng(9);
    Tensor in = Tensor::randn(Shape{1, 2, 6, 6}, rng);
    ConvParams p = random_conv(3, 2, 5, 1, 2, rng);
    Tensor zero(conv2d_output_shape(in.shape, p));
    ConvGrads g = conv2d_backward(in, p, zero);
    CHECK(max_abs_diff(g.input, Tensor(in.shape)) == 0.0);
    CHECK(max_abs_diff(g.weight, Tensor(p.weight.shape)) == 0.0);
    for (double b : g.bias)
        CHECK(b == 0.0);
}

TEST_CASE("conv2d_backward grad_bias equals grad_out reduced over batch and space") {
    Rng rng(11);
    Tensor in = Tensor::randn(Shape{2, 2, 6, 6}, rng);
    ConvParams p = random_conv(3, 2, 5, 1, 2, rng);
    Tensor gout = Tensor::randn(conv2d_output_shape(in.shape, p), rng);
    ConvGrads g = conv2d_backward(in, p, gout);
    for (int oc = 0; oc < 3; ++oc) {
        double acc = 0.0;
        for (int b = 0; b < 2; ++b)
            for (int y = 0; y < gout.shape.h; ++y)
                for (int x = 0; x < gout.shape.w; ++x)
                    acc += gout.at(b, oc, y, x);
        CHECK(g.bias[static_cast<std::size_t>(oc)] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("conv2d_backward matches finite differences (1x2x6x6, 3x2x5x5, pad 2)") {
    Rng rng(2024);
    auto in = Tensor::randn(Shape{1, 2, 6, 6}, rng);
    auto p = random_conv(3, 2, 5, 1, 2, rng);
    auto proj = Tensor::randn(conv2d_output_shape(in.shape, p), rng);

    ConvGrads grads;
    auto compute = [&]() { grads = conv2d_backward(in, p, proj); };
    compute();
    std::vector<GradSlot> slots = {
        {"input", in.v.data(), grads.input.v.data(), in.v.size()},
        {"weight", p.weight.v.data(), grads.weight.v.data(), p.weight.v.size()},
        {"bias", p.bias.data(), grads.bias.data(), p.bias.size()},
    };
    Rng sample(77);
    GradCheckReport rep = gradcheck(
        slots, [] {}, [&]() { return dot(conv2d(in, p), proj); }, 1e-4, 1e-5, sample, 40);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("upconv2d copies values into blocks for a 2x2 ones kernel") {
    Tensor in = Tensor::from_data(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
    ConvParams p;
    p.weight = Tensor::full(Shape{1, 1, 2, 2}, 1.0);
    p.bias = {0.0};
    p.stride = 2;
    p.pad = 0;
    Tensor out = upconv2d(in, p);
    CHECK(out.shape == Shape{1, 1, 4, 4});
    CHECK(max_abs_diff(out, upconv2d_oracle(in, p)) == 0.0);
    // Each input value lands in its own 2x2 block.
    CHECK(out.at(0, 0, 0, 0) == 1.0);
    CHECK(out.at(0, 0, 0, 1) == 1.0);
    CHECK(out.at(0, 0, 1, 0) == 1.0);
    CHECK(out.at(0, 0, 1, 1) == 1.0);
    CHECK(out.at(0, 0, 2, 3) == 4.0);
    CHECK(out.at(0, 0, 3, 3) == 4.0);
}

TEST_CASE("upconv2d zero input gives zero output") {
    Tensor in(1, 3, 4, 4);
    Rng rng(3);
    ConvParams p;
    p.weight = Tensor::randn(Shape{3, 2, 4, 4}, rng);
    p.bias = {0.0, 0.0};
    p.stride = 2;
    p.pad = 1;
    Tensor out = upconv2d(in, p);
    CHECK(out.shape == Shape{1, 2, 8, 8});
    CHECK(max_abs_diff(out, Tensor(out.shape)) == 0.0);
}

TEST_CASE("upconv2d matches the scatter oracle and doubles resolution") {
    Rng rng(31);
    Tensor in = Tensor::randn(Shape{2, 3, 5, 6}, rng);
    ConvParams p;
    p.weight = Tensor::randn(Shape{3, 4, 4, 4}, rng, 0.5);
    p.bias = {0.1, -0.2, 0.3, 0.4};
    p.stride = 2;
    p.pad = 1;
    Tensor out = upconv2d(in, p);
    CHECK(out.shape == Shape{2, 4, 10, 12});
    CHECK(max_abs_diff(out, upconv2d_oracle(in, p)) < 1e-12);
}

TEST_CASE("conv2d/upconv2d adjoint inner-product identity") {
    Rng rng(57);
    // <conv(x), y> == <x, upconv(y)> when upconv reuses the conv weight with
    // zero bias.
    Tensor x = Tensor::randn(Shape{1, 3, 8, 8}, rng);
    ConvParams p = random_conv(5, 3, 4, 2, 1, rng);
    Tensor cy = conv2d(x, p);
    Tensor y = Tensor::randn(cy.shape, rng);

    ConvParams pt = p;
    pt.bias.assign(3, 0.0);
    ConvParams p_nobias = p;
    p_nobias.bias.assign(p.bias.size(), 0.0);
    const double lhs = dot(conv2d(x, p_nobias), y);
    const double rhs = dot(x, upconv2d(y, pt));
    CHECK(std::abs(lhs - rhs) < 1e-10);
}

TEST_CASE("upconv2d backward matches finite differences") {
    Rng rng(91);
    auto in = Tensor::randn(Shape{1, 3, 4, 4}, rng);
    ConvParams p;
    p.weight = Tensor::randn(Shape{3, 2, 4, 4}, rng, 0.5);
    p.bias = {0.3, -0.1};
    p.stride = 2;
    p.pad = 1;
    auto proj = Tensor::randn(upconv2d_output_shape(in.shape, p), rng);

    ConvGrads grads = upconv2d_backward(in, p, proj);
    std::vector<GradSlot> slots = {
        {"input", in.v.data(), grads.input.v.data(), in.v.size()},
        {"weight", p.weight.v.data(), grads.weight.v.data(), p.weight.v.size()},
        {"bias", p.bias.data(), grads.bias.data(), p.bias.size()},
    };
    Rng sample(78);
    GradCheckReport rep = gradcheck(
        slots, [] {}, [&]() { return dot(upconv2d(in, p), proj); }, 1e-4, 1e-5, sample, 40);
    CHECK(rep.pass);
}

TEST_CASE("activation values") {
    Tensor x = Tensor::from_data(Shape{1, 1, 1, 4}, {-1.0, 2.0, -2.0, 0.0});
    Tensor r = relu(x);
    CHECK(r.v[0] == 0.0);
    CHECK(r.v[1] == 2.0);
    Tensor l = leaky_relu(x, 0.2);
    CHECK(l.v[2] == doctest::Approx(-0.4).epsilon(1e-15));
    CHECK(l.v[1] == 2.0);
    Tensor s = sigmoid(x);
    CHECK(s.v[3] == 0.5);
}

TEST_CASE("activation backwards match finite differences") {
    Rng rng(15);
    Tensor x = Tensor::randn(Shape{1, 2, 5, 5}, rng);
    for (auto& v : x.v) // keep the finite differences away from the kinks
        if (std::abs(v) < 1e-3)
            v = v >= 0 ? 1e-3 : -1e-3;
    Tensor proj = Tensor::randn(x.shape, rng);

    SUBCASE("relu") {
        Tensor g = relu_backward(x, proj);
        std::vector<GradSlot> slots = {{"x", x.v.data(), g.v.data(), x.v.size()}};
        Rng sample(1);
        CHECK(gradcheck(slots, [] {}, [&]() { return dot(relu(x), proj); },
                        1e-4, 1e-5, sample, 40)
                  .pass);
    }
    SUBCASE("leaky_relu") {
        Tensor g = leaky_relu_backward(x, 0.2, proj);
        std::vector<GradSlot> slots = {{"x", x.v.data(), g.v.data(), x.v.size()}};
        Rng sample(2);
        CHECK(gradcheck(slots, [] {}, [&]() { return dot(leaky_relu(x, 0.2), proj); },
                        1e-4, 1e-5, sample, 40)
                  .pass);
    }
    SUBCASE("sigmoid") {
        Tensor g = sigmoid_backward(sigmoid(x), proj);
        std::vector<GradSlot> slots = {{"x", x.v.data(), g.v.data(), x.v.size()}};
        Rng sample(3);
        CHECK(gradcheck(slots, [] {}, [&]() { return dot(sigmoid(x), proj); },
                        1e-4, 1e-5, sample, 40)
                  .pass);
    }
}

TEST_CASE("adam: zero gradients leave parameters bit-identical from a fresh state") {
    std::vector<double> param = {1.5, -0.25, 3.0};
    const std::vector<double> before = param;
    std::vector<double> grad = {0.0, 0.0, 0.0};
    AdamBuffers buf(param.size());
    AdamHyper hp;
    adam_update(param, grad, buf, 1, hp, 0.1);
    CHECK(param == before);
    for (double m : buf.m)
        CHECK(m == 0.0);
}

TEST_CASE("adam: moments decay toward zero once gradients stop") {
    std::vector<double> param = {1.0};
    AdamBuffers buf(1);
    AdamHyper hp;
    std::vector<double> grad = {1.0};
    adam_update(param, grad, buf, 1, hp, 0.01);
    const double m_after_step = buf.m[0];
    grad[0] = 0.0;
    for (int step = 2; step <= 20; ++step)
        adam_update(param, grad, buf, step, hp, 0.01);
    CHECK(std::abs(buf.m[0]) < std::abs(m_after_step));
    CHECK(std::abs(buf.m[0]) == doctest::Approx(m_after_step * std::pow(0.9, 19)).epsilon(1e-12));
}

TEST_CASE("adam single-scalar first step matches the hand-evaluated update") {
    std::vector<double> param = {1.0};
    std::vector<double> grad = {1.0};
    AdamBuffers buf(1);
    AdamHyper hp; // beta1 0.9, beta2 0.999, eps 1e-8
    adam_update(param, grad, buf, 1, hp, 0.1);

    // Direct evaluation of the update equations.
    const double m = (1.0 - 0.9) * 1.0;
    const double v = (1.0 - 0.999) * 1.0;
    const double mhat = m / (1.0 - 0.9);
    const double vhat = v / (1.0 - 0.999);
    const double expected = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(param[0] == doctest::Approx(expected).epsilon(1e-16));
    CHECK(param[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam rejects non-finite gradients") {
    std::vector<double> param = {1.0};
    std::vector<double> grad = {std::nan("")};
    AdamBuffers buf(1);
    AdamHyper hp;
    CHECK_THROWS_AS(adam_update(param, grad, buf, 1, hp, 0.1), NumericalError);
}

TEST_CASE("gradcheck harness: linear layer passes, corrupted backward fails") {
    Rng rng(4);
    Tensor x = Tensor::randn(Shape{1, 2, 4, 4}, rng);
    ConvParams p = random_conv(2, 2, 1, 1, 0, rng);
    Tensor proj = Tensor::randn(conv2d_output_shape(x.shape, p), rng);

    ConvGrads g = conv2d_backward(x, p, proj);
    std::vector<GradSlot> slots = {
        {"input", x.v.data(), g.input.v.data(), x.v.size()},
        {"weight", p.weight.v.data(), g.weight.v.data(), p.weight.v.size()},
    };
    Rng sample(5);
    GradCheckReport ok = gradcheck(slots, [] {}, [&]() { return dot(conv2d(x, p), proj); },
                                   1e-4, 1e-5, sample, 30);
    CHECK(ok.pass);
    CHECK(ok.max_rel_err < 1e-8); // linear function: exact up to rounding

    // Negative control: scale the analytic gradient by two.
    Tensor corrupted = g.input;
    for (auto& v : corrupted.v)
        v *= 2.0;
    std::vector<GradSlot> bad = {{"input", x.v.data(), corrupted.v.data(), x.v.size()}};
    Rng sample2(6);
    GradCheckReport fail_rep = gradcheck(bad, [] {}, [&]() { return dot(conv2d(x, p), proj); },
                                         1e-4, 1e-5, sample2, 30);
    CHECK_FALSE(fail_rep.pass);
}

TEST_CASE("ops are deterministic across thread counts") {
    Rng rng(99);
    Tensor in = Tensor::randn(Shape{2, 8, 32, 32}, rng);
    ConvParams p = random_conv(8, 8, 5, 1, 2, rng);
    set_num_threads(1);
    Tensor serial = conv2d(in, p);
    ConvGrads gs = conv2d_backward(in, p, serial);
    set_num_threads(4);
    Tensor parallel = conv2d(in, p);
    ConvGrads gp = conv2d_backward(in, p, parallel);
    set_num_threads(0);
    CHECK(max_abs_diff(serial, parallel) == 0.0);
    CHECK(max_abs_diff(gs.input, gp.input) == 0.0);
    CHECK(max_abs_diff(gs.weight, gp.weight) == 0.0);
}

TEST_CASE("pad_reflect mirrors without repeating the edge") {
    Tensor t = Tensor::from_data(Shape{1, 1, 1, 4}, {1, 2, 3, 4});
    Tensor padded = pad_reflect(t, 0, 0, 2, 2);
    const std::vector<double> expected = {3, 2, 1, 2, 3, 4, 3, 2};
    for (std::size_t i = 0; i < expected.size(); ++i)
        CHECK(padded.v[i] == expected[i]);
    Tensor back = crop(padded, 0, 2, 1, 4);
    CHECK(max_abs_diff(back, t) == 0.0);
}
