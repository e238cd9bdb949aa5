#pragma once

#include "deblur/rng.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace deblur {

// (batch, channels, height, width), row-major within each channel plane.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    bool operator==(const Shape&) const = default;
    std::size_t elems() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::string str() const;
};

// Dense rank-4 tensor of doubles. The universal carrier for images (values in
// [0,1]) and feature maps (unbounded). Convolution weights reuse the same
// storage with shape (out_c, in_c, kh, kw).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), v(s.elems(), 0.0) {}
    Tensor(int n, int c, int h, int w) : Tensor(Shape{n, c, h, w}) {}

    static Tensor full(Shape s, double value);
    static Tensor from_data(Shape s, std::vector<double> data);
    static Tensor randn(Shape s, Rng& rng, double stddev = 1.0, double mean = 0.0);
    static Tensor uniform(Shape s, Rng& rng, double lo, double hi);

    double& at(int b, int ch, int y, int x) {
        return v[idx(b, ch, y, x)];
    }
    double at(int b, int ch, int y, int x) const {
        return v[idx(b, ch, y, x)];
    }
    double* row(int b, int ch, int y) {
        return v.data() + idx(b, ch, y, 0);
    }
    const double* row(int b, int ch, int y) const {
        return v.data() + idx(b, ch, y, 0);
    }
    // Offset of one channel plane.
    std::size_t plane(int b, int ch) const {
        return (static_cast<std::size_t>(b) * shape.c + ch) * shape.h * shape.w;
    }

    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    bool all_finite() const;

    Shape shape{};
    std::vector<double> v;

private:
    std::size_t idx(int b, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(b) * shape.c + ch) * shape.h + y) * shape.w + x;
    }
};

// a's channels precede b's; batch/height/width must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Inverse of concat_channels: first c_front channels, then the rest.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, int c_front);

// Elementwise helpers used throughout the pipeline.
Tensor clip01(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

// Flat binary dump: four little-endian int64 (n,c,h,w) followed by the data as
// little-endian IEEE doubles. Used for golden-file tests.
void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

} // namespace deblur
