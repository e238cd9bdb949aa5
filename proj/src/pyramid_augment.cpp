#include "deblur/pyramid_augment.hpp"

#include "deblur/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace deblur {

namespace {

inline int mirror101(int i, int n) {
    if (i < 0)
        i = -i;
    if (i >= n)
        i = 2 * n - 2 - i;
    return i;
}

constexpr double kBinomial5[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Separable 5-tap filter, then keep every second sample.
Tensor downsample2(const Tensor& in) {
    const int H = in.shape.h, W = in.shape.w;
    Tensor tmp(in.shape.n, in.shape.c, H, W);
    for (int bi = 0; bi < in.shape.n; ++bi)
        for (int c = 0; c < in.shape.c; ++c)
            for (int y = 0; y < H; ++y) {
                double* drow = tmp.row(bi, c, y);
                const double* r0 = in.row(bi, c, mirror101(y - 2, H));
                const double* r1 = in.row(bi, c, mirror101(y - 1, H));
                const double* r2 = in.row(bi, c, y);
                const double* r3 = in.row(bi, c, mirror101(y + 1, H));
                const double* r4 = in.row(bi, c, mirror101(y + 2, H));
                for (int x = 0; x < W; ++x)
                    drow[x] = kBinomial5[0] * r0[x] + kBinomial5[1] * r1[x] +
                              kBinomial5[2] * r2[x] + kBinomial5[3] * r3[x] +
                              kBinomial5[4] * r4[x];
            }
    Tensor out(in.shape.n, in.shape.c, H / 2, W / 2);
    for (int bi = 0; bi < in.shape.n; ++bi)
        for (int c = 0; c < in.shape.c; ++c)
            for (int oy = 0; oy < out.shape.h; ++oy) {
                const double* srow = tmp.row(bi, c, 2 * oy);
                double* drow = out.row(bi, c, oy);
                for (int ox = 0; ox < out.shape.w; ++ox) {
                    const int x = 2 * ox;
                    drow[ox] = kBinomial5[0] * srow[mirror101(x - 2, W)] +
                               kBinomial5[1] * srow[mirror101(x - 1, W)] +
                               kBinomial5[2] * srow[x] +
                               kBinomial5[3] * srow[mirror101(x + 1, W)] +
                               kBinomial5[4] * srow[mirror101(x + 2, W)];
                }
            }
    return out;
}

} // namespace

std::vector<Tensor> gaussian_pyramid(const Tensor& image, int levels) {
    if (levels < 1)
        throw ValueError("gaussian_pyramid: need at least one level");
    const int div = 1 << (levels - 1);
    if (image.shape.h % div != 0 || image.shape.w % div != 0)
        throw ShapeError("gaussian_pyramid: " + image.shape.str() +
                         " not divisible by " + std::to_string(div));
    std::vector<Tensor> pyr;
    pyr.reserve(levels);
    pyr.push_back(image);
    for (int k = 1; k < levels; ++k)
        pyr.push_back(downsample2(pyr.back()));
    return pyr;
}

PyramidPair build_pyramid_pair(const Tensor& blurry, const Tensor& sharp, int levels) {
    if (!(blurry.shape == sharp.shape))
        throw ShapeError("build_pyramid_pair: blurry/sharp shape mismatch");
    PyramidPair pp;
    pp.blurry = gaussian_pyramid(blurry, levels);
    pp.sharp = gaussian_pyramid(sharp, levels);
    return pp;
}

Tensor flip_horizontal(const Tensor& t) {
    Tensor out(t.shape);
    for (int bi = 0; bi < t.shape.n; ++bi)
        for (int c = 0; c < t.shape.c; ++c)
            for (int y = 0; y < t.shape.h; ++y) {
                const double* srow = t.row(bi, c, y);
                double* drow = out.row(bi, c, y);
                for (int x = 0; x < t.shape.w; ++x)
                    drow[x] = srow[t.shape.w - 1 - x];
            }
    return out;
}

Tensor flip_vertical(const Tensor& t) {
    Tensor out(t.shape);
    for (int bi = 0; bi < t.shape.n; ++bi)
        for (int c = 0; c < t.shape.c; ++c)
            for (int y = 0; y < t.shape.h; ++y)
                std::copy(t.row(bi, c, t.shape.h - 1 - y),
                          t.row(bi, c, t.shape.h - 1 - y) + t.shape.w,
                          out.row(bi, c, y));
    return out;
}

Tensor rotate90(const Tensor& t, int quarter_turns) {
    int q = ((quarter_turns % 4) + 4) % 4;
    if (q == 0)
        return t;
    if (q == 2)
        return flip_horizontal(flip_vertical(t));
    // One counterclockwise quarter turn: (y, x) -> (H-1-x inverted axes).
    Tensor out(t.shape.n, t.shape.c, t.shape.w, t.shape.h);
    for (int bi = 0; bi < t.shape.n; ++bi)
        for (int c = 0; c < t.shape.c; ++c)
            for (int y = 0; y < t.shape.h; ++y) {
                const double* srow = t.row(bi, c, y);
                for (int x = 0; x < t.shape.w; ++x)
                    out.at(bi, c, t.shape.w - 1 - x, y) = srow[x];
            }
    return q == 1 ? out : flip_horizontal(flip_vertical(out));
}

Tensor permute_rgb(const Tensor& t, int permutation_index) {
    if (t.shape.c != 3)
        throw ShapeError("permute_rgb: expected 3 channels");
    static constexpr std::array<std::array<int, 3>, 6> perms = {{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    if (permutation_index < 0 || permutation_index >= 6)
        throw ValueError("permute_rgb: index out of range");
    const auto& p = perms[static_cast<std::size_t>(permutation_index)];
    Tensor out(t.shape);
    const std::size_t plane = static_cast<std::size_t>(t.shape.h) * t.shape.w;
    for (int bi = 0; bi < t.shape.n; ++bi)
        for (int c = 0; c < 3; ++c)
            std::copy(t.v.begin() + static_cast<std::ptrdiff_t>(t.plane(bi, p[c])),
                      t.v.begin() + static_cast<std::ptrdiff_t>(t.plane(bi, p[c]) + plane),
                      out.v.begin() + static_cast<std::ptrdiff_t>(out.plane(bi, c)));
    return out;
}

Tensor rgb_to_hsv(const Tensor& image) {
    if (image.shape.c != 3)
        throw ShapeError("rgb_to_hsv: expected 3 channels");
    Tensor out(image.shape);
    const std::size_t plane = static_cast<std::size_t>(image.shape.h) * image.shape.w;
    for (int bi = 0; bi < image.shape.n; ++bi) {
        const double* r = image.v.data() + image.plane(bi, 0);
        const double* g = image.v.data() + image.plane(bi, 1);
        const double* b = image.v.data() + image.plane(bi, 2);
        double* ho = out.v.data() + out.plane(bi, 0);
        double* so = out.v.data() + out.plane(bi, 1);
        double* vo = out.v.data() + out.plane(bi, 2);
        for (std::size_t i = 0; i < plane; ++i) {
            const double mx = std::max({r[i], g[i], b[i]});
            const double mn = std::min({r[i], g[i], b[i]});
            const double d = mx - mn;
            double h = 0.0;
            if (d > 0.0) {
                if (mx == r[i])
                    h = (g[i] - b[i]) / d;
                else if (mx == g[i])
                    h = 2.0 + (b[i] - r[i]) / d;
                else
                    h = 4.0 + (r[i] - g[i]) / d;
                h /= 6.0;
                if (h < 0.0)
                    h += 1.0;
            }
            ho[i] = h;
            so[i] = mx > 0.0 ? d / mx : 0.0;
            vo[i] = mx;
        }
    }
    return out;
}

Tensor hsv_to_rgb(const Tensor& image) {
    if (image.shape.c != 3)
        throw ShapeError("hsv_to_rgb: expected 3 channels");
    Tensor out(image.shape);
    const std::size_t plane = static_cast<std::size_t>(image.shape.h) * image.shape.w;
    for (int bi = 0; bi < image.shape.n; ++bi) {
        const double* h = image.v.data() + image.plane(bi, 0);
        const double* s = image.v.data() + image.plane(bi, 1);
        const double* v = image.v.data() + image.plane(bi, 2);
        double* ro = out.v.data() + out.plane(bi, 0);
        double* go = out.v.data() + out.plane(bi, 1);
        double* bo = out.v.data() + out.plane(bi, 2);
        for (std::size_t i = 0; i < plane; ++i) {
            const double sat = std::min(1.0, std::max(0.0, s[i]));
            double hh = h[i] - std::floor(h[i]);
            hh *= 6.0;
            const int sector = std::min(5, static_cast<int>(hh));
            const double f = hh - sector;
            const double p = v[i] * (1.0 - sat);
            const double q = v[i] * (1.0 - sat * f);
            const double t = v[i] * (1.0 - sat * (1.0 - f));
            switch (sector) {
            case 0: ro[i] = v[i]; go[i] = t;    bo[i] = p;    break;
            case 1: ro[i] = q;    go[i] = v[i]; bo[i] = p;    break;
            case 2: ro[i] = p;    go[i] = v[i]; bo[i] = t;    break;
            case 3: ro[i] = p;    go[i] = q;    bo[i] = v[i]; break;
            case 4: ro[i] = t;    go[i] = p;    bo[i] = v[i]; break;
            default: ro[i] = v[i]; go[i] = p;   bo[i] = q;    break;
            }
        }
    }
    return out;
}

Tensor scale_saturation(const Tensor& rgb, double factor) {
    Tensor hsv = rgb_to_hsv(rgb);
    const std::size_t plane = static_cast<std::size_t>(rgb.shape.h) * rgb.shape.w;
    for (int bi = 0; bi < rgb.shape.n; ++bi) {
        double* s = hsv.v.data() + hsv.plane(bi, 1);
        for (std::size_t i = 0; i < plane; ++i)
            s[i] = std::min(1.0, std::max(0.0, s[i] * factor));
    }
    return hsv_to_rgb(hsv);
}

BlurPair augment(const BlurPair& pair, const AugmentConfig& cfg, Rng& rng) {
    if (!(pair.blurry.shape == pair.sharp.shape))
        throw ShapeError("augment: blurry/sharp shape mismatch");

    BlurPair out = pair;
    auto both = [&](auto&& fn) {
        out.blurry = fn(out.blurry);
        out.sharp = fn(out.sharp);
    };

    if (cfg.flip_h && rng.uniform01() < 0.5)
        both([](const Tensor& t) { return flip_horizontal(t); });
    if (cfg.flip_v && rng.uniform01() < 0.5)
        both([](const Tensor& t) { return flip_vertical(t); });
    if (cfg.rotate) {
        const int q = rng.uniform_int(4);
        if (q != 0)
            both([q](const Tensor& t) { return rotate90(t, q); });
    }
    if (cfg.permute_channels && out.blurry.shape.c == 3) {
        const int p = rng.uniform_int(6);
        if (p != 0)
            both([p](const Tensor& t) { return permute_rgb(t, p); });
    }
    if (cfg.saturation && out.blurry.shape.c == 3) {
        const double u = rng.uniform(cfg.sat_lo, cfg.sat_hi);
        both([u](const Tensor& t) { return scale_saturation(t, u); });
    }
    if (cfg.noise) {
        // A std must be nonnegative, so the hyper-draw is taken in absolute value.
        const double sigma = std::abs(rng.normal(0.0, cfg.noise_hyper_std));
        for (auto& x : out.blurry.v)
            x += rng.normal(0.0, sigma);
    }
    out.blurry = clip01(out.blurry);
    out.sharp = clip01(out.sharp);
    return out;
}

} // namespace deblur
