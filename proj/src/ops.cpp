#include "deblur/ops.hpp"

#include "deblur/errors.hpp"
#include "deblur/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace deblur {

namespace {

inline int ceil_div(int a, int b) {
    return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

inline int floor_div(int a, int b) {
    return a >= 0 ? a / b : -((-a + b - 1) / b);
}

void check_conv_args(const Shape& in, const ConvParams& p, const char* who, bool transposed) {
    const int expect_in = transposed ? p.weight.shape.n : p.weight.shape.c;
    const int out_c = transposed ? p.weight.shape.c : p.weight.shape.n;
    if (in.c != expect_in)
        throw ShapeError(std::string(who) + ": input has " + std::to_string(in.c) +
                         " channels, weight expects " + std::to_string(expect_in));
    if (static_cast<int>(p.bias.size()) != out_c)
        throw ShapeError(std::string(who) + ": bias size " + std::to_string(p.bias.size()) +
                         " does not match " + std::to_string(out_c) + " output channels");
    if (p.stride < 1)
        throw ValueError(std::string(who) + ": stride must be >= 1");
    if (p.pad < 0)
        throw ValueError(std::string(who) + ": negative padding");
    if (transposed && p.stride < 2)
        throw ValueError(std::string(who) + ": transposed convolution requires stride >= 2");
}

// Decides whether a conv-sized workload is worth forking for.
inline std::int64_t conv_flops(const Shape& out, const Shape& w) {
    return out.elems() * static_cast<std::int64_t>(w.c) * w.h * w.w;
}

constexpr std::int64_t kParallelCutoff = 1 << 19;

void maybe_parallel_rows(std::int64_t rows, std::int64_t flops,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (flops < kParallelCutoff || num_threads() <= 1)
        fn(0, rows);
    else
        parallel_for(rows, fn);
}

} // namespace

Shape conv2d_output_shape(const Shape& in, const ConvParams& p) {
    check_conv_args(in, p, "conv2d", false);
    const int oh = (in.h + 2 * p.pad - p.weight.shape.h) / p.stride + 1;
    const int ow = (in.w + 2 * p.pad - p.weight.shape.w) / p.stride + 1;
    if (oh <= 0 || ow <= 0)
        throw ShapeError("conv2d: kernel " + p.weight.shape.str() + " does not fit input " + in.str());
    return Shape{in.n, p.weight.shape.n, oh, ow};
}

Shape upconv2d_output_shape(const Shape& in, const ConvParams& p) {
    check_conv_args(in, p, "upconv2d", true);
    const int oh = p.stride * (in.h - 1) + p.weight.shape.h - 2 * p.pad;
    const int ow = p.stride * (in.w - 1) + p.weight.shape.w - 2 * p.pad;
    if (oh <= 0 || ow <= 0)
        throw ShapeError("upconv2d: configuration produces empty output for input " + in.str());
    return Shape{in.n, p.weight.shape.c, oh, ow};
}

Tensor conv2d(const Tensor& input, const ConvParams& p) {
    const Shape os = conv2d_output_shape(input.shape, p);
    Tensor out(os);
    const int in_c = input.shape.c, H = input.shape.h, W = input.shape.w;
    const int kh = p.weight.shape.h, kw = p.weight.shape.w;
    const int s = p.stride, pad = p.pad;

    const std::int64_t rows = static_cast<std::int64_t>(os.n) * os.c * os.h;
    maybe_parallel_rows(rows, conv_flops(os, p.weight.shape), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            const int oy = static_cast<int>(r % os.h);
            const int oc = static_cast<int>((r / os.h) % os.c);
            const int bi = static_cast<int>(r / (static_cast<std::int64_t>(os.h) * os.c));
            double* orow = out.row(bi, oc, oy);
            std::fill(orow, orow + os.w, p.bias[oc]);
            for (int ic = 0; ic < in_c; ++ic) {
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * s - pad + ky;
                    if (iy < 0 || iy >= H)
                        continue;
                    const double* irow = input.row(bi, ic, iy);
                    const double* wrow = p.weight.row(oc, ic, ky);
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wrow[kx];
                        const int xlo = std::max(0, ceil_div(pad - kx, s));
                        const int xhi = std::min(os.w, floor_div(W - 1 + pad - kx, s) + 1);
                        if (s == 1) {
                            const double* ip = irow - pad + kx;
                            for (int ox = xlo; ox < xhi; ++ox)
                                orow[ox] += wv * ip[ox];
                        } else {
                            int ix = xlo * s - pad + kx;
                            for (int ox = xlo; ox < xhi; ++ox, ix += s)
                                orow[ox] += wv * irow[ix];
                        }
                    }
                }
            }
        }
    });
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& p, const Tensor& grad_out) {
    const Shape os = conv2d_output_shape(input.shape, p);
    if (!(grad_out.shape == os))
        throw ShapeError("conv2d_backward: grad_out " + grad_out.shape.str() +
                         " does not match output " + os.str());
    const int in_c = input.shape.c, H = input.shape.h, W = input.shape.w;
    const int kh = p.weight.shape.h, kw = p.weight.shape.w;
    const int s = p.stride, pad = p.pad;

    ConvGrads g;
    g.input = Tensor(input.shape);
    g.weight = Tensor(p.weight.shape);
    g.bias.assign(p.bias.size(), 0.0);

    for (int oc = 0; oc < os.c; ++oc) {
        double acc = 0.0;
        for (int bi = 0; bi < os.n; ++bi)
            for (int oy = 0; oy < os.h; ++oy) {
                const double* grow = grad_out.row(bi, oc, oy);
                for (int ox = 0; ox < os.w; ++ox)
                    acc += grow[ox];
            }
        g.bias[oc] = acc;
    }

    const std::int64_t flops = conv_flops(os, p.weight.shape);
    maybe_parallel_rows(os.c, flops, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t oc = lo; oc < hi; ++oc) {
            for (int bi = 0; bi < os.n; ++bi) {
                for (int oy = 0; oy < os.h; ++oy) {
                    const double* grow = grad_out.row(bi, static_cast<int>(oc), oy);
                    for (int ic = 0; ic < in_c; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * s - pad + ky;
                            if (iy < 0 || iy >= H)
                                continue;
                            const double* irow = input.row(bi, ic, iy);
                            double* gwrow = g.weight.row(static_cast<int>(oc), ic, ky);
                            for (int kx = 0; kx < kw; ++kx) {
                                const int xlo = std::max(0, ceil_div(pad - kx, s));
                                const int xhi = std::min(os.w, floor_div(W - 1 + pad - kx, s) + 1);
                                double acc = 0.0;
                                if (s == 1) {
                                    const double* ip = irow - pad + kx;
                                    for (int ox = xlo; ox < xhi; ++ox)
                                        acc += grow[ox] * ip[ox];
                                } else {
                                    int ix = xlo * s - pad + kx;
                                    for (int ox = xlo; ox < xhi; ++ox, ix += s)
                                        acc += grow[ox] * irow[ix];
                                }
                                gwrow[kx] += acc;
                            }
                        }
                    }
                }
            }
        }
    });

    const std::int64_t gin_rows = static_cast<std::int64_t>(os.n) * in_c;
    maybe_parallel_rows(gin_rows, flops, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            const int ic = static_cast<int>(r % in_c);
            const int bi = static_cast<int>(r / in_c);
            for (int oc = 0; oc < os.c; ++oc) {
                for (int oy = 0; oy < os.h; ++oy) {
                    const double* grow = grad_out.row(bi, oc, oy);
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * s - pad + ky;
                        if (iy < 0 || iy >= H)
                            continue;
                        double* girow = g.input.row(bi, ic, iy);
                        const double* wrow = p.weight.row(oc, ic, ky);
                        for (int kx = 0; kx < kw; ++kx) {
                            const double wv = wrow[kx];
                            const int xlo = std::max(0, ceil_div(pad - kx, s));
                            const int xhi = std::min(os.w, floor_div(W - 1 + pad - kx, s) + 1);
                            if (s == 1) {
                                double* gp = girow - pad + kx;
                                for (int ox = xlo; ox < xhi; ++ox)
                                    gp[ox] += wv * grow[ox];
                            } else {
                                int ix = xlo * s - pad + kx;
                                for (int ox = xlo; ox < xhi; ++ox, ix += s)
                                    girow[ix] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    });

    return g;
}

Tensor upconv2d(const Tensor& input, const ConvParams& p) {
    const Shape os = upconv2d_output_shape(input.shape, p);
    Tensor out(os);
    const int in_c = input.shape.c, H = input.shape.h, W = input.shape.w;
    const int kh = p.weight.shape.h, kw = p.weight.shape.w;
    const int s = p.stride, pad = p.pad;

    const std::int64_t rows = static_cast<std::int64_t>(os.n) * os.c * os.h;
    maybe_parallel_rows(rows, conv_flops(os, p.weight.shape), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            const int oy = static_cast<int>(r % os.h);
            const int j = static_cast<int>((r / os.h) % os.c);
            const int bi = static_cast<int>(r / (static_cast<std::int64_t>(os.h) * os.c));
            double* orow = out.row(bi, j, oy);
            std::fill(orow, orow + os.w, p.bias[j]);
            for (int ky = 0; ky < kh; ++ky) {
                const int t = oy + pad - ky;
                if (t % s != 0)
                    continue;
                const int iy = t / s;
                if (iy < 0 || iy >= H)
                    continue;
                for (int i = 0; i < in_c; ++i) {
                    const double* irow = input.row(bi, i, iy);
                    const double* wrow = p.weight.row(i, j, ky);
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wrow[kx];
                        // ox = ix*s - pad + kx must land inside the output row
                        const int ilo = std::max(0, ceil_div(pad - kx, s));
                        const int ihi = std::min(W, floor_div(os.w - 1 + pad - kx, s) + 1);
                        int ox = ilo * s - pad + kx;
                        for (int ix = ilo; ix < ihi; ++ix, ox += s)
                            orow[ox] += wv * irow[ix];
                    }
                }
            }
        }
    });
    return out;
}

ConvGrads upconv2d_backward(const Tensor& input, const ConvParams& p, const Tensor& grad_out) {
    const Shape os = upconv2d_output_shape(input.shape, p);
    if (!(grad_out.shape == os))
        throw ShapeError("upconv2d_backward: grad_out " + grad_out.shape.str() +
                         " does not match output " + os.str());
    const int in_c = input.shape.c, H = input.shape.h, W = input.shape.w;
    const int kh = p.weight.shape.h, kw = p.weight.shape.w;
    const int s = p.stride, pad = p.pad;

    ConvGrads g;
    g.input = Tensor(input.shape);
    g.weight = Tensor(p.weight.shape);
    g.bias.assign(p.bias.size(), 0.0);

    for (int j = 0; j < os.c; ++j) {
        double acc = 0.0;
        for (int bi = 0; bi < os.n; ++bi)
            for (int oy = 0; oy < os.h; ++oy) {
                const double* grow = grad_out.row(bi, j, oy);
                for (int ox = 0; ox < os.w; ++ox)
                    acc += grow[ox];
            }
        g.bias[j] = acc;
    }

    const std::int64_t flops = conv_flops(os, p.weight.shape);
    const std::int64_t gin_rows = static_cast<std::int64_t>(input.shape.n) * in_c * H;
    maybe_parallel_rows(gin_rows, flops, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t r = lo; r < hi; ++r) {
            const int iy = static_cast<int>(r % H);
            const int i = static_cast<int>((r / H) % in_c);
            const int bi = static_cast<int>(r / (static_cast<std::int64_t>(H) * in_c));
            double* girow = g.input.row(bi, i, iy);
            for (int j = 0; j < os.c; ++j) {
                for (int ky = 0; ky < kh; ++ky) {
                    const int oy = iy * s - pad + ky;
                    if (oy < 0 || oy >= os.h)
                        continue;
                    const double* grow = grad_out.row(bi, j, oy);
                    const double* wrow = p.weight.row(i, j, ky);
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wrow[kx];
                        const int ilo = std::max(0, ceil_div(pad - kx, s));
                        const int ihi = std::min(W, floor_div(os.w - 1 + pad - kx, s) + 1);
                        int ox = ilo * s - pad + kx;
                        for (int ix = ilo; ix < ihi; ++ix, ox += s)
                            girow[ix] += wv * grow[ox];
                    }
                }
            }
        }
    });

    maybe_parallel_rows(in_c, flops, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            for (int bi = 0; bi < input.shape.n; ++bi) {
                for (int iy = 0; iy < H; ++iy) {
                    const double* irow = input.row(bi, static_cast<int>(i), iy);
                    for (int j = 0; j < os.c; ++j) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oy = iy * s - pad + ky;
                            if (oy < 0 || oy >= os.h)
                                continue;
                            const double* grow = grad_out.row(bi, j, oy);
                            double* gwrow = g.weight.row(static_cast<int>(i), j, ky);
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ilo = std::max(0, ceil_div(pad - kx, s));
                                const int ihi = std::min(W, floor_div(os.w - 1 + pad - kx, s) + 1);
                                double acc = 0.0;
                                int ox = ilo * s - pad + kx;
                                for (int ix = ilo; ix < ihi; ++ix, ox += s)
                                    acc += irow[ix] * grow[ox];
                                gwrow[kx] += acc;
                            }
                        }
                    }
                }
            }
        }
    });

    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.v)
        v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (!(x.shape == grad_out.shape))
        throw ShapeError("relu_backward: shape mismatch");
    Tensor g(x.shape);
    for (std::size_t i = 0; i < x.v.size(); ++i)
        g.v[i] = x.v[i] > 0.0 ? grad_out.v[i] : 0.0;
    return g;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = x;
    for (auto& v : out.v)
        v = v > 0.0 ? v : slope * v;
    return out;
}

Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& grad_out) {
    if (!(x.shape == grad_out.shape))
        throw ShapeError("leaky_relu_backward: shape mismatch");
    Tensor g(x.shape);
    for (std::size_t i = 0; i < x.v.size(); ++i)
        g.v[i] = x.v[i] > 0.0 ? grad_out.v[i] : slope * grad_out.v[i];
    return g;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.v)
        v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out) {
    if (!(y.shape == grad_out.shape))
        throw ShapeError("sigmoid_backward: shape mismatch");
    Tensor g(y.shape);
    for (std::size_t i = 0; i < y.v.size(); ++i)
        g.v[i] = grad_out.v[i] * y.v[i] * (1.0 - y.v[i]);
    return g;
}

namespace {

// Mirror about the edge pixel (the edge itself is not repeated).
inline int mirror101(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0)
            i = -i;
        if (i >= n)
            i = 2 * n - 2 - i;
    }
    return i;
}

} // namespace

Tensor pad_reflect(const Tensor& t, int top, int bottom, int left, int right) {
    if (top < 0 || bottom < 0 || left < 0 || right < 0)
        throw ValueError("pad_reflect: negative padding");
    if ((top >= t.shape.h || bottom >= t.shape.h) && t.shape.h > 1)
        throw ValueError("pad_reflect: vertical padding exceeds image size");
    if ((left >= t.shape.w || right >= t.shape.w) && t.shape.w > 1)
        throw ValueError("pad_reflect: horizontal padding exceeds image size");
    Tensor out(t.shape.n, t.shape.c, t.shape.h + top + bottom, t.shape.w + left + right);
    for (int bi = 0; bi < t.shape.n; ++bi)
        for (int c = 0; c < t.shape.c; ++c)
            for (int y = 0; y < out.shape.h; ++y) {
                const int sy = mirror101(y - top, t.shape.h);
                const double* srow = t.row(bi, c, sy);
                double* drow = out.row(bi, c, y);
                for (int x = 0; x < out.shape.w; ++x)
                    drow[x] = srow[mirror101(x - left, t.shape.w)];
            }
    return out;
}

Tensor crop(const Tensor& t, int y0, int x0, int h, int w) {
    if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > t.shape.h || x0 + w > t.shape.w)
        throw ShapeError("crop: window out of bounds");
    Tensor out(t.shape.n, t.shape.c, h, w);
    for (int bi = 0; bi < t.shape.n; ++bi)
        for (int c = 0; c < t.shape.c; ++c)
            for (int y = 0; y < h; ++y) {
                const double* srow = t.row(bi, c, y0 + y) + x0;
                std::copy(srow, srow + w, out.row(bi, c, y));
            }
    return out;
}

} // namespace deblur
