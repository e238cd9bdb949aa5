#include "deblur/blur_synth.hpp"

#include "deblur/errors.hpp"
#include "deblur/ops.hpp"

#include <algorithm>
#include <cmath>

namespace deblur {

UniformKernel UniformKernel::box(int size) {
    if (size < 1 || size % 2 == 0)
        throw ValueError("box kernel size must be odd and positive");
    UniformKernel k;
    k.kh = k.kw = size;
    k.taps.assign(static_cast<std::size_t>(size) * size,
                  1.0 / (static_cast<double>(size) * size));
    return k;
}

UniformKernel UniformKernel::delta() {
    UniformKernel k;
    k.kh = k.kw = 1;
    k.taps = {1.0};
    return k;
}

static void check_crf(const GammaCRF& crf) {
    if (!(crf.gamma > 0.0))
        throw ValueError("gamma must be positive");
}

Tensor crf_apply(const Tensor& signal, const GammaCRF& crf) {
    check_crf(crf);
    Tensor out = signal;
    const double inv = 1.0 / crf.gamma;
    for (auto& x : out.v) {
        if (x < 0.0)
            throw ValueError("crf_apply: negative input");
        x = std::pow(x, inv);
    }
    return out;
}

Tensor crf_invert(const Tensor& observed, const GammaCRF& crf) {
    check_crf(crf);
    Tensor out = observed;
    for (auto& x : out.v) {
        if (x < 0.0)
            throw ValueError("crf_invert: negative input");
        x = std::pow(x, crf.gamma);
    }
    return out;
}

Tensor synthesize_blur(const std::vector<Tensor>& window, const GammaCRF& crf) {
    check_crf(crf);
    if (window.empty())
        throw ValueError("synthesize_blur: empty window");
    const Shape shape = window.front().shape;
    for (const Tensor& f : window)
        if (!(f.shape == shape))
            throw ShapeError("synthesize_blur: frames differ in shape");

    Tensor acc(shape);
    for (const Tensor& f : window)
        for (std::size_t i = 0; i < acc.v.size(); ++i) {
            const double x = f.v[i];
            if (x < 0.0)
                throw ValueError("synthesize_blur: negative frame value");
            acc.v[i] += std::pow(x, crf.gamma);
        }
    const double m = static_cast<double>(window.size());
    const double invGamma = 1.0 / crf.gamma;
    for (auto& x : acc.v)
        x = std::pow(x / m, invGamma);
    return acc;
}

const Tensor& select_sharp(const std::vector<Tensor>& window) {
    if (window.empty())
        throw ValueError("select_sharp: empty window");
    return window[window.size() / 2];
}

Tensor uniform_kernel_blur(const Tensor& sharp, const UniformKernel& k,
                           double noise_sigma, Rng& rng) {
    if (k.kh < 1 || k.kw < 1 || k.kh % 2 == 0 || k.kw % 2 == 0)
        throw ValueError("uniform_kernel_blur: kernel dimensions must be odd");
    if (static_cast<int>(k.taps.size()) != k.kh * k.kw)
        throw ValueError("uniform_kernel_blur: tap count does not match dimensions");
    double sum = 0.0;
    for (double t : k.taps) {
        if (t < 0.0)
            throw ValueError("uniform_kernel_blur: negative tap");
        sum += t;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ValueError("uniform_kernel_blur: kernel is not normalized");
    if (noise_sigma < 0.0)
        throw ValueError("uniform_kernel_blur: negative noise sigma");

    const int py = (k.kh - 1) / 2;
    const int px = (k.kw - 1) / 2;
    const Tensor padded = pad_reflect(sharp, py, py, px, px);
    Tensor out(sharp.shape);
    for (int bi = 0; bi < sharp.shape.n; ++bi)
        for (int c = 0; c < sharp.shape.c; ++c)
            for (int y = 0; y < sharp.shape.h; ++y) {
                double* orow = out.row(bi, c, y);
                for (int ky = 0; ky < k.kh; ++ky) {
                    const double* prow = padded.row(bi, c, y + ky);
                    const double* taps = k.taps.data() + static_cast<std::size_t>(ky) * k.kw;
                    for (int kx = 0; kx < k.kw; ++kx) {
                        const double t = taps[kx];
                        for (int x = 0; x < sharp.shape.w; ++x)
                            orow[x] += t * prow[x + kx];
                    }
                }
            }
    if (noise_sigma > 0.0)
        for (auto& x : out.v)
            x += rng.normal(0.0, noise_sigma);
    return clip01(out);
}

DatasetResult generate_dataset(const FrameSequence& sequence,
                               const std::vector<int>& window_sizes,
                               int stride, const GammaCRF& crf,
                               std::uint64_t seed) {
    if (sequence.frames.empty())
        throw ValueError("generate_dataset: empty frame sequence");
    if (window_sizes.empty())
        throw ValueError("generate_dataset: no window sizes");
    for (int w : window_sizes)
        if (w < 1 || w % 2 == 0)
            throw ValueError("generate_dataset: window sizes must be odd and positive");
    if (stride < 1)
        throw ValueError("generate_dataset: stride must be >= 1");

    const int n = static_cast<int>(sequence.frames.size());
    const int max_window = *std::max_element(window_sizes.begin(), window_sizes.end());

    DatasetResult result;
    if (max_window > n) {
        result.too_short = true;
        return result;
    }
    // Placements are spaced so any drawn window size fits.
    std::uint64_t index = 0;
    for (int start = 0; start + max_window <= n; start += stride, ++index) {
        Rng rng = Rng::stream(seed, {0x77696e646f77ULL, index}); // "window"
        const int m = window_sizes[rng.uniform_int(static_cast<int>(window_sizes.size()))];
        std::vector<Tensor> window(sequence.frames.begin() + start,
                                   sequence.frames.begin() + start + m);
        BlurPair pair;
        pair.blurry = synthesize_blur(window, crf);
        pair.sharp = select_sharp(window);
        pair.window_start = start;
        pair.window_length = m;
        pair.gamma = crf.gamma;
        result.pairs.push_back(std::move(pair));
    }
    return result;
}

} // namespace deblur
