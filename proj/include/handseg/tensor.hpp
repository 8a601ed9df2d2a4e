#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace handseg {

using real = double;

/// Dimensions of a dense 3-D tensor, channel-major.
struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t elems() const {
        return static_cast<std::size_t>(channels) * height * width;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense channels x height x width array of real values. Row-major within
/// each channel; the universal carrier for images, feature maps, masks and
/// gradients.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, real fill = 0);
    Tensor(Shape shape, std::vector<real> data);

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.channels; }
    int height() const { return shape_.height; }
    int width() const { return shape_.width; }
    std::size_t size() const { return data_.size(); }

    real& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
    }
    real at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x];
    }

    std::vector<real>& data() { return data_; }
    const std::vector<real>& data() const { return data_; }

    real* channel_ptr(int c) {
        return data_.data() + static_cast<std::size_t>(c) * shape_.height * shape_.width;
    }
    const real* channel_ptr(int c) const {
        return data_.data() + static_cast<std::size_t>(c) * shape_.height * shape_.width;
    }

    bool all_finite() const;

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

private:
    Shape shape_;
    std::vector<real> data_;
};

/// Weights and biases of one convolution layer: out x in x kh x kw kernels
/// plus one bias per output channel. Kernel dims must be odd (same-padding
/// centering).
struct KernelBank {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    std::vector<real> weights;
    std::vector<real> bias;

    static KernelBank zeros(int out_c, int in_c, int kh, int kw);

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel_h * kernel_w;
    }
    real& w(int o, int c, int ky, int kx) {
        return weights[((static_cast<std::size_t>(o) * in_channels + c) * kernel_h + ky) * kernel_w + kx];
    }
    real w(int o, int c, int ky, int kx) const {
        return weights[((static_cast<std::size_t>(o) * in_channels + c) * kernel_h + ky) * kernel_w + kx];
    }
};

struct ConvGrads {
    Tensor grad_input;
    std::vector<real> grad_weights;  // KernelBank layout
    std::vector<real> grad_bias;
};

/// Stride-1 zero-padded convolution preserving spatial dims.
Tensor conv2d_forward(const Tensor& input, const KernelBank& kernels);

/// Exact gradients of sum(grad_output * conv2d_forward(input, kernels))
/// with respect to input, weights and bias.
ConvGrads conv2d_backward(const Tensor& input, const KernelBank& kernels,
                          const Tensor& grad_output);

Tensor leaky_relu_forward(const Tensor& x, real slope);
Tensor leaky_relu_backward(const Tensor& x, real slope, const Tensor& grad_out);

/// Numerically stable elementwise logistic function.
Tensor sigmoid(const Tensor& x);
real sigmoid_scalar(real v);

/// Per-channel bilinear interpolation with edge clamping. Serves both
/// downscaling and upscaling; resizing to the same size is a bit-exact copy.
Tensor resize_bilinear(const Tensor& input, int out_h, int out_w);

/// Exact adjoint of resize_bilinear: scatters grad_out back onto an
/// in_h x in_w grid with the forward interpolation weights.
Tensor resize_bilinear_backward(const Tensor& grad_out, int in_h, int in_w);

/// Box-average downsample by an integer factor with ceiling-division output
/// dims; edge boxes may be smaller. Used to coarsen ground-truth masks.
Tensor area_downsample(const Tensor& input, int factor);

Tensor concat_channels(const std::vector<Tensor>& parts);

/// Adjoint of concat_channels: splits a gradient tensor back into parts with
/// the given channel counts.
std::vector<Tensor> split_channels(const Tensor& t, const std::vector<int>& channel_counts);

}  // namespace handseg
