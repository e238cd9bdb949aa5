#include "deblur/tensor.hpp"

#include "deblur/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace deblur {

static_assert(std::endian::native == std::endian::little,
              "tensor dump format assumes a little-endian host");

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
}

Tensor Tensor::full(Shape s, double value) {
    Tensor t(s);
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
}

Tensor Tensor::from_data(Shape s, std::vector<double> data) {
    if (data.size() != s.elems())
        throw ShapeError("from_data: " + std::to_string(data.size()) +
                         " values for shape " + s.str());
    Tensor t;
    t.shape = s;
    t.v = std::move(data);
    return t;
}

Tensor Tensor::randn(Shape s, Rng& rng, double stddev, double mean) {
    Tensor t(s);
    for (auto& x : t.v)
        x = rng.normal(mean, stddev);
    return t;
}

Tensor Tensor::uniform(Shape s, Rng& rng, double lo, double hi) {
    Tensor t(s);
    for (auto& x : t.v)
        x = rng.uniform(lo, hi);
    return t;
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x))
            return false;
    return true;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape.n != b.shape.n || a.shape.h != b.shape.h || a.shape.w != b.shape.w)
        throw ShapeError("concat_channels: incompatible shapes " + a.shape.str() +
                         " and " + b.shape.str());
    Tensor out(a.shape.n, a.shape.c + b.shape.c, a.shape.h, a.shape.w);
    const std::size_t plane = static_cast<std::size_t>(a.shape.h) * a.shape.w;
    for (int bi = 0; bi < a.shape.n; ++bi) {
        double* dst = out.v.data() + out.plane(bi, 0);
        std::memcpy(dst, a.v.data() + a.plane(bi, 0), a.shape.c * plane * sizeof(double));
        std::memcpy(dst + a.shape.c * plane, b.v.data() + b.plane(bi, 0),
                    b.shape.c * plane * sizeof(double));
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, int c_front) {
    if (c_front <= 0 || c_front >= t.shape.c)
        throw ShapeError("split_channels: cannot split " + std::to_string(t.shape.c) +
                         " channels at " + std::to_string(c_front));
    Tensor a(t.shape.n, c_front, t.shape.h, t.shape.w);
    Tensor b(t.shape.n, t.shape.c - c_front, t.shape.h, t.shape.w);
    const std::size_t plane = static_cast<std::size_t>(t.shape.h) * t.shape.w;
    for (int bi = 0; bi < t.shape.n; ++bi) {
        const double* src = t.v.data() + t.plane(bi, 0);
        std::memcpy(a.v.data() + a.plane(bi, 0), src, c_front * plane * sizeof(double));
        std::memcpy(b.v.data() + b.plane(bi, 0), src + c_front * plane,
                    (t.shape.c - c_front) * plane * sizeof(double));
    }
    return {std::move(a), std::move(b)};
}

Tensor clip01(const Tensor& t) {
    Tensor out = t;
    for (auto& x : out.v)
        x = std::min(1.0, std::max(0.0, x));
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("max_abs_diff: shapes " + a.shape.str() + " vs " + b.shape.str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

double dot(const Tensor& a, const Tensor& b) {
    if (!(a.shape == b.shape))
        throw ShapeError("dot: shapes " + a.shape.str() + " vs " + b.shape.str());
    double s = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        s += a.v[i] * b.v[i];
    return s;
}

void save_tensor(const Tensor& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("save_tensor: cannot open " + path);
    const std::int64_t dims[4] = {t.shape.n, t.shape.c, t.shape.h, t.shape.w};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!f)
        throw IoError("save_tensor: write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("load_tensor: cannot open " + path);
    std::int64_t dims[4];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f)
        throw IoError("load_tensor: truncated header in " + path);
    for (std::int64_t d : dims)
        if (d <= 0 || d > (1 << 24))
            throw IoError("load_tensor: implausible dimension in " + path);
    Tensor t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
             static_cast<int>(dims[2]), static_cast<int>(dims[3]));
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!f)
        throw IoError("load_tensor: truncated data in " + path);
    return t;
}

} // namespace deblur
