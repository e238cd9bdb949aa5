#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deblur/errors.hpp"
#include "deblur/metrics.hpp"
#include "deblur/rng.hpp"

#include <cmath>
#include <vector>

using namespace deblur;

namespace {

// Naive SSIM reference: explicit per-window double loops on the luma plane,
// no separable filtering. Shares nothing with the implementation.
double ssim_oracle(const Tensor& ta, const Tensor& tb) {
    const int h = ta.shape.h, w = ta.shape.w;
    std::vector<double> a(static_cast<std::size_t>(h) * w);
    std::vector<double> b(a.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (ta.shape.c == 3) {
                a[i] = 0.299 * ta.at(0, 0, y, x) + 0.587 * ta.at(0, 1, y, x) +
                       0.114 * ta.at(0, 2, y, x);
                b[i] = 0.299 * tb.at(0, 0, y, x) + 0.587 * tb.at(0, 1, y, x) +
                       0.114 * tb.at(0, 2, y, x);
            } else {
                a[i] = ta.at(0, 0, y, x);
                b[i] = tb.at(0, 0, y, x);
            }
        }

    double win[11][11];
    double wsum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5.0, dx = j - 5.0;
            win[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
            wsum += win[i][j];
        }
    for (auto& row : win)
        for (auto& v : row)
            v /= wsum;

    const double c1 = 1e-4, c2 = 9e-4;
    double acc = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= h; ++y)
        for (int x = 0; x + 11 <= w; ++x) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double va = a[static_cast<std::size_t>(y + i) * w + x + j];
                    const double vb = b[static_cast<std::size_t>(y + i) * w + x + j];
                    mx += win[i][j] * va;
                    my += win[i][j] * vb;
                    xx += win[i][j] * va * va;
                    yy += win[i][j] * vb * vb;
                    xy += win[i][j] * va * vb;
                }
            const double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
            acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                   ((mx * mx + my * my + c1) * (sx + sy + c2));
            ++count;
        }
    return acc / count;
}

Tensor checker(int size, double lo, double hi) {
    Tensor t(1, 1, size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            t.at(0, 0, y, x) = ((x + y) % 2 == 0) ? hi : lo;
    return t;
}

} // namespace

TEST_CASE("psnr: identical images hit the 99 dB cap") {
    Rng rng(1);
    Tensor img = Tensor::uniform(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
    CHECK(psnr(img, img) == 99.0);
}

TEST_CASE("psnr: uniform 0.1 difference gives exactly 20 dB") {
    Tensor a = Tensor::full(Shape{1, 3, 8, 8}, 0.5);
    Tensor b = Tensor::full(Shape{1, 3, 8, 8}, 0.6);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("psnr: all-zeros vs all-ones is 0 dB") {
    Tensor zeros(1, 3, 8, 8);
    Tensor ones = Tensor::full(Shape{1, 3, 8, 8}, 1.0);
    CHECK(psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("psnr is symmetric and rejects shape mismatch") {
    Rng rng(2);
    Tensor a = Tensor::uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor b = Tensor::uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK_THROWS_AS(psnr(a, Tensor(1, 3, 8, 9)), ShapeError);
}

TEST_CASE("psnr decreases monotonically with noise amplitude") {
    Rng rng(3);
    Tensor base = Tensor::uniform(Shape{1, 3, 16, 16}, rng, 0.2, 0.8);
    Tensor pattern = Tensor::uniform(Shape{1, 3, 16, 16}, rng, -1.0, 1.0);
    double prev = psnr(base, base);
    for (double amp : {0.01, 0.02, 0.04, 0.08, 0.16}) {
        Tensor noisy = base;
        for (std::size_t i = 0; i < noisy.v.size(); ++i)
            noisy.v[i] += amp * pattern.v[i];
        const double cur = psnr(base, noisy);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("ssim(x,x) is exactly 1.0 across 50 random images") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor img = Tensor::uniform(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
        CHECK(ssim(img, img) == 1.0);
    }
}

TEST_CASE("ssim matches the naive per-window oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = Tensor::uniform(Shape{1, 3, 24, 20}, rng, 0.0, 1.0);
        Tensor b = a;
        for (auto& v : b.v)
            v = std::min(1.0, std::max(0.0, v + rng.normal(0.0, 0.08)));
        CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("ssim of an inverted checker is negative") {
    Tensor x = checker(64, 0.1, 0.9);
    Tensor inv = x;
    for (auto& v : inv.v)
        v = 1.0 - v;
    const double s = ssim(x, inv);
    CHECK(s < 0.0);
    CHECK(s == doctest::Approx(ssim_oracle(x, inv)).epsilon(1e-12));
}

TEST_CASE("ssim is invariant to a shared mean shift on equal-mean pairs") {
    Rng rng(6);
    Tensor a = Tensor::uniform(Shape{1, 1, 32, 32}, rng, 0.3, 0.5);
    Tensor b = a;
    for (auto& v : b.v)
        v += rng.normal(0.0, 1e-3); // zero-mean structural difference
    const double base = ssim(a, b);
    for (double shift : {0.05, 0.1, 0.2}) {
        Tensor as = a, bs = b;
        for (auto& v : as.v)
            v += shift;
        for (auto& v : bs.v)
            v += shift;
        CHECK(std::abs(ssim(as, bs) - base) < 1e-6);
    }
}

TEST_CASE("ssim rejects images smaller than the window") {
    Tensor tiny(1, 1, 8, 8);
    CHECK_THROWS_AS(ssim(tiny, tiny), ShapeError);
}

TEST_CASE("ms_ssim(x,x) is exactly 1.0 and needs 176 px") {
    Rng rng(7);
    Tensor img = Tensor::uniform(Shape{1, 3, 176, 180}, rng, 0.0, 1.0);
    CHECK(ms_ssim(img, img) == 1.0);
    Tensor small = Tensor::uniform(Shape{1, 3, 160, 180}, rng, 0.0, 1.0);
    CHECK_THROWS_AS(ms_ssim(small, small), ShapeError);
}

TEST_CASE("ms_ssim drops when one image is degraded") {
    Rng rng(8);
    Tensor img = Tensor::uniform(Shape{1, 1, 176, 176}, rng, 0.0, 1.0);
    Tensor noisy = img;
    for (auto& v : noisy.v)
        v = std::min(1.0, std::max(0.0, v + rng.normal(0.0, 0.05)));
    const double clean = ms_ssim(img, img);
    const double degraded = ms_ssim(img, noisy);
    CHECK(degraded < clean);
    CHECK(degraded > 0.0);
    CHECK(degraded <= 1.0);
}
