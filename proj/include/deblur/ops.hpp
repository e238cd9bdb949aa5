#pragma once

#include "deblur/tensor.hpp"

#include <vector>

namespace deblur {

// Convolution parameters. For conv2d the weight is (out_c, in_c, kh, kw);
// for upconv2d it is (in_c, out_c, kh, kw) so that conv2d and upconv2d with
// the same storage are exact adjoints of each other.
struct ConvParams {
    Tensor weight;
    std::vector<double> bias;
    int stride = 1;
    int pad = 0;
};

Shape conv2d_output_shape(const Shape& in, const ConvParams& p);
Shape upconv2d_output_shape(const Shape& in, const ConvParams& p);

// Cross-correlation (no kernel flip) plus bias. Stride-1 with pad=(k-1)/2
// preserves spatial size for odd k.
Tensor conv2d(const Tensor& input, const ConvParams& p);

struct ConvGrads {
    Tensor input;
    Tensor weight;
    std::vector<double> bias;
};

// Gradients of <grad_out, conv2d(input, p)> with respect to every argument.
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& p, const Tensor& grad_out);

// Transposed convolution; spatial size = stride*(in-1) + k - 2*pad.
// With kernel 4, stride 2, pad 1 it doubles the resolution exactly.
Tensor upconv2d(const Tensor& input, const ConvParams& p);
ConvGrads upconv2d_backward(const Tensor& input, const ConvParams& p, const Tensor& grad_out);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& x, double slope, const Tensor& grad_out);

Tensor sigmoid(const Tensor& x);
// Takes the forward output, not the input.
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

// Border reflection without repeating the edge pixel (pad must be < size).
Tensor pad_reflect(const Tensor& t, int top, int bottom, int left, int right);
Tensor crop(const Tensor& t, int y0, int x0, int h, int w);

} // namespace deblur
