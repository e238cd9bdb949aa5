#include "deblur/metrics.hpp"

#include "deblur/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace deblur {

double psnr(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("psnr: shapes " + a.shape.str() + " vs " + b.shape.str());
    if (a.v.empty())
        throw ShapeError("psnr: empty tensors");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr int kWin = 11;

// 2-D plane holding the luma channel.
struct Plane {
    int h = 0, w = 0;
    std::vector<double> v;
    double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane luma(const Tensor& t) {
    Plane p;
    p.h = t.shape.h;
    p.w = t.shape.w;
    p.v.resize(static_cast<std::size_t>(p.h) * p.w);
    if (t.shape.c == 3) {
        for (int y = 0; y < p.h; ++y) {
            const double* r = t.row(0, 0, y);
            const double* g = t.row(0, 1, y);
            const double* b = t.row(0, 2, y);
            for (int x = 0; x < p.w; ++x)
                p.v[static_cast<std::size_t>(y) * p.w + x] =
                    0.299 * r[x] + 0.587 * g[x] + 0.114 * b[x];
        }
    } else if (t.shape.c == 1) {
        std::copy(t.row(0, 0, 0), t.row(0, 0, 0) + p.v.size(), p.v.begin());
    } else {
        throw ShapeError("ssim: expected 1 or 3 channels, got " + std::to_string(t.shape.c));
    }
    return p;
}

std::array<double, kWin> gaussian_window() {
    std::array<double, kWin> w{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& x : w)
        x /= sum;
    return w;
}

// Gaussian-weighted local mean, valid windowing (output shrinks by kWin-1).
Plane filter_valid(const Plane& in) {
    static const std::array<double, kWin> win = gaussian_window();
    Plane tmp;
    tmp.h = in.h;
    tmp.w = in.w - kWin + 1;
    tmp.v.resize(static_cast<std::size_t>(tmp.h) * tmp.w);
    for (int y = 0; y < tmp.h; ++y)
        for (int x = 0; x < tmp.w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k)
                acc += win[static_cast<std::size_t>(k)] * in.at(y, x + k);
            tmp.at(y, x) = acc;
        }
    Plane out;
    out.h = in.h - kWin + 1;
    out.w = tmp.w;
    out.v.resize(static_cast<std::size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k)
                acc += win[static_cast<std::size_t>(k)] * tmp.at(y + k, x);
            out.at(y, x) = acc;
        }
    return out;
}

Plane multiply(const Plane& a, const Plane& b) {
    Plane out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i)
        out.v[i] *= b.v[i];
    return out;
}

struct SsimSums {
    double ssim = 0.0; // mean of the full SSIM map
    double cs = 0.0;   // mean of the contrast-structure term only
};

SsimSums ssim_pass(const Plane& x, const Plane& y) {
    if (x.h < kWin || x.w < kWin)
        throw ShapeError("ssim: image smaller than the 11x11 window");
    const Plane mu_x = filter_valid(x);
    const Plane mu_y = filter_valid(y);
    const Plane xx = filter_valid(multiply(x, x));
    const Plane yy = filter_valid(multiply(y, y));
    const Plane xy = filter_valid(multiply(x, y));

    double ssim_acc = 0.0;
    double cs_acc = 0.0;
    for (std::size_t i = 0; i < mu_x.v.size(); ++i) {
        const double mx = mu_x.v[i];
        const double my = mu_y.v[i];
        const double sx = xx.v[i] - mx * mx;
        const double sy = yy.v[i] - my * my;
        const double sxy = xy.v[i] - mx * my;
        const double cs = (2.0 * sxy + kC2) / (sx + sy + kC2);
        const double lum = (2.0 * mx * my + kC1) / (mx * mx + my * my + kC1);
        ssim_acc += lum * cs;
        cs_acc += cs;
    }
    SsimSums s;
    s.ssim = ssim_acc / static_cast<double>(mu_x.v.size());
    s.cs = cs_acc / static_cast<double>(mu_x.v.size());
    return s;
}

// 2x2 mean pooling used between MS-SSIM levels.
Plane downsample2x2(const Plane& in) {
    Plane out;
    out.h = in.h / 2;
    out.w = in.w / 2;
    out.v.resize(static_cast<std::size_t>(out.h) * out.w);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(y, x) = 0.25 * (in.at(2 * y, 2 * x) + in.at(2 * y, 2 * x + 1) +
                                   in.at(2 * y + 1, 2 * x) + in.at(2 * y + 1, 2 * x + 1));
    return out;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("ssim: shapes " + a.shape.str() + " vs " + b.shape.str());
    return ssim_pass(luma(a), luma(b)).ssim;
}

double ms_ssim(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("ms_ssim: shapes " + a.shape.str() + " vs " + b.shape.str());
    if (std::min(a.shape.h, a.shape.w) < kMsSsimMinSide)
        throw ShapeError("ms_ssim: min side " +
                         std::to_string(std::min(a.shape.h, a.shape.w)) +
                         " below the 5-level requirement of " +
                         std::to_string(kMsSsimMinSide));
    static constexpr std::array<double, kMsSsimLevels> weights = {
        0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

    Plane x = luma(a);
    Plane y = luma(b);
    double result = 1.0;
    for (int level = 0; level < kMsSsimLevels; ++level) {
        const SsimSums s = ssim_pass(x, y);
        // Negative similarity at some scale: clamp so the weighted geometric
        // mean stays real.
        const double term = level == kMsSsimLevels - 1 ? std::max(0.0, s.ssim)
                                                       : std::max(0.0, s.cs);
        result *= std::pow(term, weights[static_cast<std::size_t>(level)]);
        if (level + 1 < kMsSsimLevels) {
            x = downsample2x2(x);
            y = downsample2x2(y);
        }
    }
    return result;
}

} // namespace deblur
