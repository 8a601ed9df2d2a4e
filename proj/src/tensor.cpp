#include "handseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace handseg {

std::string Shape::str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Tensor::Tensor(Shape shape, real fill) : shape_(shape), data_(shape.elems(), fill) {
    if (shape.channels < 1 || shape.height < 1 || shape.width < 1) {
        throw std::invalid_argument("tensor shape must be positive, got " + shape.str());
    }
}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(shape), data_(std::move(data)) {
    if (shape.channels < 1 || shape.height < 1 || shape.width < 1) {
        throw std::invalid_argument("tensor shape must be positive, got " + shape.str());
    }
    if (data_.size() != shape.elems()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape.str());
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](real v) { return std::isfinite(v); });
}

KernelBank KernelBank::zeros(int out_c, int in_c, int kh, int kw) {
    if (out_c < 1 || in_c < 1 || kh < 1 || kw < 1) {
        throw std::invalid_argument("kernel bank dims must be positive");
    }
    if (kh % 2 == 0 || kw % 2 == 0) {
        throw std::invalid_argument("kernel dims must be odd, got " + std::to_string(kh) + "x" +
                                    std::to_string(kw));
    }
    KernelBank k;
    k.out_channels = out_c;
    k.in_channels = in_c;
    k.kernel_h = kh;
    k.kernel_w = kw;
    k.weights.assign(k.weight_count(), 0);
    k.bias.assign(static_cast<std::size_t>(out_c), 0);
    return k;
}

namespace {

void check_conv_args(const Tensor& input, const KernelBank& k) {
    if (input.channels() != k.in_channels) {
        throw std::invalid_argument("conv2d: input shape " + input.shape().str() +
                                    " does not match kernel in_channels " +
                                    std::to_string(k.in_channels));
    }
    if (k.kernel_h % 2 == 0 || k.kernel_w % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel dims must be odd");
    }
    if (k.weights.size() != k.weight_count() ||
        k.bias.size() != static_cast<std::size_t>(k.out_channels)) {
        throw std::invalid_argument("conv2d: kernel bank storage does not match declared dims");
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const KernelBank& k) {
    check_conv_args(input, k);
    const int h = input.height();
    const int w = input.width();
    const int ph = k.kernel_h / 2;
    const int pw = k.kernel_w / 2;
    Tensor out({k.out_channels, h, w});
    for (int o = 0; o < k.out_channels; ++o) {
        real* op = out.channel_ptr(o);
        const real b = k.bias[o];
        for (int i = 0; i < h * w; ++i) op[i] = b;
        for (int c = 0; c < k.in_channels; ++c) {
            const real* ip = input.channel_ptr(c);
            for (int ky = 0; ky < k.kernel_h; ++ky) {
                const int dy = ky - ph;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(h, h - dy);
                for (int kx = 0; kx < k.kernel_w; ++kx) {
                    const int dx = kx - pw;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    const real wv = k.w(o, c, ky, kx);
                    for (int y = y0; y < y1; ++y) {
                        real* orow = op + static_cast<std::size_t>(y) * w;
                        const real* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const KernelBank& k, const Tensor& grad_output) {
    check_conv_args(input, k);
    const Shape want{k.out_channels, input.height(), input.width()};
    if (!(grad_output.shape() == want)) {
        throw std::invalid_argument("conv2d_backward: grad_output shape " +
                                    grad_output.shape().str() + " expected " + want.str());
    }
    const int h = input.height();
    const int w = input.width();
    const int ph = k.kernel_h / 2;
    const int pw = k.kernel_w / 2;

    ConvGrads g;
    g.grad_input = Tensor(input.shape());
    g.grad_weights.assign(k.weight_count(), 0);
    g.grad_bias.assign(static_cast<std::size_t>(k.out_channels), 0);

    for (int o = 0; o < k.out_channels; ++o) {
        const real* gp = grad_output.channel_ptr(o);
        real bsum = 0;
        for (int i = 0; i < h * w; ++i) bsum += gp[i];
        g.grad_bias[o] = bsum;
        for (int c = 0; c < k.in_channels; ++c) {
            const real* ip = input.channel_ptr(c);
            real* gip = g.grad_input.channel_ptr(c);
            for (int ky = 0; ky < k.kernel_h; ++ky) {
                const int dy = ky - ph;
                const int y0 = std::max(0, -dy);
                const int y1 = std::min(h, h - dy);
                for (int kx = 0; kx < k.kernel_w; ++kx) {
                    const int dx = kx - pw;
                    const int x0 = std::max(0, -dx);
                    const int x1 = std::min(w, w - dx);
                    const real wv = k.w(o, c, ky, kx);
                    real wsum = 0;
                    for (int y = y0; y < y1; ++y) {
                        const real* grow = gp + static_cast<std::size_t>(y) * w;
                        const real* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
                        real* girow = gip + static_cast<std::size_t>(y + dy) * w + dx;
                        for (int x = x0; x < x1; ++x) {
                            wsum += grow[x] * irow[x];
                            girow[x] += wv * grow[x];
                        }
                    }
                    g.grad_weights[((static_cast<std::size_t>(o) * k.in_channels + c) * k.kernel_h +
                                    ky) * k.kernel_w + kx] = wsum;
                }
            }
        }
    }
    return g;
}

Tensor leaky_relu_forward(const Tensor& x, real slope) {
    if (!(slope > 0 && slope < 1)) {
        throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
    }
    Tensor out(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] >= 0 ? xd[i] : slope * xd[i];
    return out;
}

Tensor leaky_relu_backward(const Tensor& x, real slope, const Tensor& grad_out) {
    if (!(x.shape() == grad_out.shape())) {
        throw std::invalid_argument("leaky_relu_backward: shape mismatch " + x.shape().str() +
                                    " vs " + grad_out.shape().str());
    }
    Tensor out(x.shape());
    const auto& xd = x.data();
    const auto& gd = grad_out.data();
    auto& od = out.data();
    // derivative at exactly 0 taken as 1
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] >= 0 ? gd[i] : slope * gd[i];
    return out;
}

real sigmoid_scalar(real v) {
    if (v >= 0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const real e = std::exp(v);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape());
    const auto& xd = x.data();
    auto& od = out.data();
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = sigmoid_scalar(xd[i]);
    return out;
}

namespace {

struct Lerp {
    int lo;
    int hi;
    real frac;
};

// Sample positions map corners onto corners; a single output row/column
// samples the source center. Clamped to the edges, so interpolation never
// extrapolates.
Lerp lerp_coeff(int out_i, int out_n, int in_n) {
    real s;
    if (out_n == 1) {
        s = (in_n - 1) / 2.0;
    } else {
        s = static_cast<real>(out_i) * (in_n - 1) / (out_n - 1);
    }
    s = std::clamp<real>(s, 0, in_n - 1);
    Lerp l;
    l.lo = static_cast<int>(s);
    if (l.lo > in_n - 1) l.lo = in_n - 1;
    l.hi = std::min(l.lo + 1, in_n - 1);
    l.frac = s - l.lo;
    return l;
}

}  // namespace

Tensor resize_bilinear(const Tensor& input, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) {
        throw std::invalid_argument("resize_bilinear: output dims must be >= 1");
    }
    const int in_h = input.height();
    const int in_w = input.width();
    Tensor out({input.channels(), out_h, out_w});
    std::vector<Lerp> xs(out_w);
    for (int x = 0; x < out_w; ++x) xs[x] = lerp_coeff(x, out_w, in_w);
    for (int c = 0; c < input.channels(); ++c) {
        const real* ip = input.channel_ptr(c);
        real* op = out.channel_ptr(c);
        for (int y = 0; y < out_h; ++y) {
            const Lerp ly = lerp_coeff(y, out_h, in_h);
            const real* r0 = ip + static_cast<std::size_t>(ly.lo) * in_w;
            const real* r1 = ip + static_cast<std::size_t>(ly.hi) * in_w;
            real* orow = op + static_cast<std::size_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const Lerp& lx = xs[x];
                const real top = r0[lx.lo] * (1 - lx.frac) + r0[lx.hi] * lx.frac;
                const real bot = r1[lx.lo] * (1 - lx.frac) + r1[lx.hi] * lx.frac;
                orow[x] = top * (1 - ly.frac) + bot * ly.frac;
            }
        }
    }
    return out;
}

Tensor resize_bilinear_backward(const Tensor& grad_out, int in_h, int in_w) {
    if (in_h < 1 || in_w < 1) {
        throw std::invalid_argument("resize_bilinear_backward: input dims must be >= 1");
    }
    const int out_h = grad_out.height();
    const int out_w = grad_out.width();
    Tensor grad_in({grad_out.channels(), in_h, in_w});
    std::vector<Lerp> xs(out_w);
    for (int x = 0; x < out_w; ++x) xs[x] = lerp_coeff(x, out_w, in_w);
    for (int c = 0; c < grad_out.channels(); ++c) {
        const real* gp = grad_out.channel_ptr(c);
        real* ip = grad_in.channel_ptr(c);
        for (int y = 0; y < out_h; ++y) {
            const Lerp ly = lerp_coeff(y, out_h, in_h);
            real* r0 = ip + static_cast<std::size_t>(ly.lo) * in_w;
            real* r1 = ip + static_cast<std::size_t>(ly.hi) * in_w;
            const real* grow = gp + static_cast<std::size_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const Lerp& lx = xs[x];
                const real g = grow[x];
                r0[lx.lo] += g * (1 - lx.frac) * (1 - ly.frac);
                r0[lx.hi] += g * lx.frac * (1 - ly.frac);
                r1[lx.lo] += g * (1 - lx.frac) * ly.frac;
                r1[lx.hi] += g * lx.frac * ly.frac;
            }
        }
    }
    return grad_in;
}

Tensor area_downsample(const Tensor& input, int factor) {
    if (factor < 1) throw std::invalid_argument("area_downsample: factor must be >= 1");
    const int in_h = input.height();
    const int in_w = input.width();
    const int out_h = (in_h + factor - 1) / factor;
    const int out_w = (in_w + factor - 1) / factor;
    Tensor out({input.channels(), out_h, out_w});
    for (int c = 0; c < input.channels(); ++c) {
        for (int Y = 0; Y < out_h; ++Y) {
            const int y0 = Y * factor;
            const int y1 = std::min(in_h, y0 + factor);
            for (int X = 0; X < out_w; ++X) {
                const int x0 = X * factor;
                const int x1 = std::min(in_w, x0 + factor);
                real sum = 0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) sum += input.at(c, y, x);
                out.at(c, Y, X) = sum / ((y1 - y0) * (x1 - x0));
            }
        }
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no parts");
    const int h = parts.front().height();
    const int w = parts.front().width();
    int total_c = 0;
    for (const auto& p : parts) {
        if (p.height() != h || p.width() != w) {
            throw std::invalid_argument("concat_channels: spatial mismatch " +
                                        parts.front().shape().str() + " vs " + p.shape().str());
        }
        total_c += p.channels();
    }
    Tensor out({total_c, h, w});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), out.data().begin() + off);
        off += p.data().size();
    }
    return out;
}

std::vector<Tensor> split_channels(const Tensor& t, const std::vector<int>& channel_counts) {
    int total = 0;
    for (int c : channel_counts) total += c;
    if (total != t.channels()) {
        throw std::invalid_argument("split_channels: channel counts sum to " +
                                    std::to_string(total) + ", tensor has " +
                                    std::to_string(t.channels()));
    }
    std::vector<Tensor> parts;
    parts.reserve(channel_counts.size());
    std::size_t off = 0;
    for (int c : channel_counts) {
        Tensor p({c, t.height(), t.width()});
        std::copy(t.data().begin() + off, t.data().begin() + off + p.size(), p.data().begin());
        off += p.size();
        parts.push_back(std::move(p));
    }
    return parts;
}

}  // namespace handseg
