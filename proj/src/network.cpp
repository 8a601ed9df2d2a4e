#include "handseg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace handseg {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

namespace {

void fill_uniform_fanin(KernelBank& k, std::mt19937_64& rng) {
    // uniform(-b, b) with b = sqrt(6/fan_in) has variance 2/fan_in, which keeps
    // the activation scale roughly constant through rectified layers
    const real bound =
        std::sqrt(6.0 / (static_cast<real>(k.in_channels) * k.kernel_h * k.kernel_w));
    std::uniform_real_distribution<real> dist(-bound, bound);
    for (auto& w : k.weights) w = dist(rng);
    // biases stay zero
}

ConvLayer make_layer(int in_c, int out_c, int ks, real slope, ConvLayer::Act act,
                     std::mt19937_64& rng) {
    ConvLayer layer;
    layer.kernels = KernelBank::zeros(out_c, in_c, ks, ks);
    fill_uniform_fanin(layer.kernels, rng);
    layer.slope = slope;
    layer.act = act;
    return layer;
}

RefineNet make_refine(int in_c, const std::vector<int>& channels, const std::vector<int>& ksizes,
                      real slope, std::mt19937_64& rng) {
    RefineNet net;
    int c = in_c;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        const bool last = i + 1 == channels.size();
        net.layers.push_back(make_layer(c, channels[i], ksizes[i], slope,
                                        last ? ConvLayer::Act::Sigmoid : ConvLayer::Act::LeakyRelu,
                                        rng));
        c = channels[i];
    }
    return net;
}

}  // namespace

CascadeModel init_cascade(std::uint64_t seed, const ArchConfig& config) {
    if (config.chain_channels.size() != 3 || config.chain_ksizes.size() != 3 ||
        config.pyramid_factors.size() != 3 || config.refine_channels.size() != 3 ||
        config.refine_ksizes.size() != 3) {
        throw std::invalid_argument("init_cascade: config must list exactly 3 entries per table");
    }
    if (!std::is_sorted(config.pyramid_factors.begin(), config.pyramid_factors.end()) ||
        std::adjacent_find(config.pyramid_factors.begin(), config.pyramid_factors.end()) !=
            config.pyramid_factors.end()) {
        throw std::invalid_argument("init_cascade: pyramid factors must be strictly increasing");
    }
    if (config.refine_channels.back() != 1) {
        throw std::invalid_argument("init_cascade: refinement net must end in 1 channel");
    }
    if (!(config.leaky_slope > 0 && config.leaky_slope < 1)) {
        throw std::invalid_argument("init_cascade: leaky slope must be in (0,1)");
    }
    std::mt19937_64 rng(seed);
    CascadeModel model;
    model.part1.pyramid_factors = config.pyramid_factors;
    for (int ci = 0; ci < 3; ++ci) {
        Chain chain;
        int c = 3;
        for (int li = 0; li < 3; ++li) {
            chain.layers.push_back(make_layer(c, config.chain_channels[li],
                                              config.chain_ksizes[li], config.leaky_slope,
                                              ConvLayer::Act::LeakyRelu, rng));
            c = config.chain_channels[li];
        }
        model.part1.chains.push_back(std::move(chain));
    }
    const int concat_c = 3 * config.chain_channels.back();
    model.part1.head = KernelBank::zeros(1, concat_c, 1, 1);
    fill_uniform_fanin(model.part1.head, rng);
    model.part2 = make_refine(4, config.refine_channels, config.refine_ksizes,
                              config.leaky_slope, rng);
    model.coarse_output_factor = config.pyramid_factors.back();
    return model;
}

RefineNet build_fullres_variant(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return make_refine(3, {16, 16, 1}, {5, 5, 5}, 0.01, rng);
}

RefineNet build_no_image_variant(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return make_refine(1, {8, 4, 1}, {3, 3, 3}, 0.01, rng);
}

Tensor layer_forward(const ConvLayer& layer, const Tensor& input) {
    Tensor pre = conv2d_forward(input, layer.kernels);
    switch (layer.act) {
        case ConvLayer::Act::LeakyRelu:
            return leaky_relu_forward(pre, layer.slope);
        case ConvLayer::Act::Sigmoid:
            return sigmoid(pre);
        case ConvLayer::Act::None:
            return pre;
    }
    return pre;
}

Tensor part1_forward(const MultiScaleNet& net, const Tensor& image) {
    // Inference-only path: same computation as part1_forward_trace but without
    // retaining per-layer activations.
    const int max_f = net.pyramid_factors.back();
    if (image.height() < max_f || image.width() < max_f) {
        throw std::invalid_argument("part1_forward: image " + image.shape().str() +
                                    " smaller than coarsest pyramid factor " +
                                    std::to_string(max_f));
    }
    const int coarse_h = ceil_div(image.height(), max_f);
    const int coarse_w = ceil_div(image.width(), max_f);
    std::vector<Tensor> merged;
    merged.reserve(net.chains.size());
    for (std::size_t ci = 0; ci < net.chains.size(); ++ci) {
        const int f = net.pyramid_factors[ci];
        Tensor cur = resize_bilinear(image, ceil_div(image.height(), f),
                                     ceil_div(image.width(), f));
        for (const auto& layer : net.chains[ci].layers) {
            cur = leaky_relu_forward(conv2d_forward(cur, layer.kernels), layer.slope);
        }
        merged.push_back(resize_bilinear(cur, coarse_h, coarse_w));
    }
    return sigmoid(conv2d_forward(concat_channels(merged), net.head));
}

Part1Trace part1_forward_trace(const MultiScaleNet& net, const Tensor& image) {
    const int max_f = net.pyramid_factors.back();
    if (image.height() < max_f || image.width() < max_f) {
        throw std::invalid_argument("part1_forward: image " + image.shape().str() +
                                    " smaller than coarsest pyramid factor " +
                                    std::to_string(max_f));
    }
    Part1Trace trace;
    const int coarse_h = ceil_div(image.height(), max_f);
    const int coarse_w = ceil_div(image.width(), max_f);
    std::vector<int> out_channels;
    for (std::size_t ci = 0; ci < net.chains.size(); ++ci) {
        const int f = net.pyramid_factors[ci];
        Tensor level = resize_bilinear(image, ceil_div(image.height(), f),
                                       ceil_div(image.width(), f));
        std::vector<LayerTrace> layer_traces;
        Tensor cur = level;
        for (const auto& layer : net.chains[ci].layers) {
            LayerTrace lt;
            lt.input = cur;
            lt.pre_act = conv2d_forward(cur, layer.kernels);
            cur = leaky_relu_forward(lt.pre_act, layer.slope);
            layer_traces.push_back(std::move(lt));
        }
        trace.level_images.push_back(std::move(level));
        trace.chains.push_back(std::move(layer_traces));
        trace.merged_outputs.push_back(resize_bilinear(cur, coarse_h, coarse_w));
        out_channels.push_back(cur.channels());
        trace.chain_outputs.push_back(std::move(cur));
    }
    trace.concat = concat_channels(trace.merged_outputs);
    trace.logits = conv2d_forward(trace.concat, net.head);
    trace.output = sigmoid(trace.logits);
    return trace;
}

Tensor refine_forward(const RefineNet& net, const Tensor& input) {
    Tensor cur = input;
    for (const auto& layer : net.layers) cur = layer_forward(layer, cur);
    return cur;
}

Tensor part2_forward(const RefineNet& net, const Tensor& image, const Tensor& coarse,
                     int coarse_factor) {
    const int want_h = ceil_div(image.height(), coarse_factor);
    const int want_w = ceil_div(image.width(), coarse_factor);
    if (coarse.channels() != 1 || coarse.height() != want_h || coarse.width() != want_w) {
        throw std::invalid_argument("part2_forward: coarse map " + coarse.shape().str() +
                                    " expected 1x" + std::to_string(want_h) + "x" +
                                    std::to_string(want_w));
    }
    Tensor up = resize_bilinear(coarse, image.height(), image.width());
    Tensor input = concat_channels({image, up});
    return refine_forward(net, input);
}

std::pair<Tensor, Tensor> cascade_forward(const CascadeModel& model, const Tensor& image) {
    Tensor coarse = part1_forward(model.part1, image);
    Tensor fine = part2_forward(model.part2, image, coarse, model.coarse_output_factor);
    return {std::move(coarse), std::move(fine)};
}

std::size_t param_count(const MultiScaleNet& net) {
    std::size_t n = 0;
    for (const auto& chain : net.chains)
        for (const auto& layer : chain.layers)
            n += layer.kernels.weight_count() + layer.kernels.bias.size();
    return n + net.head.weight_count() + net.head.bias.size();
}

std::size_t param_count(const RefineNet& net) {
    std::size_t n = 0;
    for (const auto& layer : net.layers)
        n += layer.kernels.weight_count() + layer.kernels.bias.size();
    return n;
}

std::vector<std::span<real>> collect_params(MultiScaleNet& net) {
    std::vector<std::span<real>> spans;
    for (auto& chain : net.chains)
        for (auto& layer : chain.layers) {
            spans.emplace_back(layer.kernels.weights);
            spans.emplace_back(layer.kernels.bias);
        }
    spans.emplace_back(net.head.weights);
    spans.emplace_back(net.head.bias);
    return spans;
}

std::vector<std::span<real>> collect_params(RefineNet& net) {
    std::vector<std::span<real>> spans;
    for (auto& layer : net.layers) {
        spans.emplace_back(layer.kernels.weights);
        spans.emplace_back(layer.kernels.bias);
    }
    return spans;
}

GradBuffers zero_grads(const std::vector<std::span<real>>& params) {
    GradBuffers grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p.size(), 0.0);
    return grads;
}

RefineTrace refine_forward_trace(const RefineNet& net, const Tensor& input) {
    RefineTrace trace;
    Tensor cur = input;
    for (const auto& layer : net.layers) {
        LayerTrace lt;
        lt.input = cur;
        lt.pre_act = conv2d_forward(cur, layer.kernels);
        switch (layer.act) {
            case ConvLayer::Act::LeakyRelu:
                cur = leaky_relu_forward(lt.pre_act, layer.slope);
                break;
            case ConvLayer::Act::Sigmoid:
                cur = sigmoid(lt.pre_act);
                break;
            case ConvLayer::Act::None:
                cur = lt.pre_act;
                break;
        }
        trace.layers.push_back(std::move(lt));
    }
    trace.output = std::move(cur);
    return trace;
}

namespace {

void accumulate(std::vector<real>& buf, const std::vector<real>& g) {
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

}  // namespace

Tensor refine_backward(const RefineNet& net, const RefineTrace& trace, const Tensor& grad_output,
                       GradBuffers& grads) {
    // grad_output is taken with respect to the final layer's pre-activation
    // when that layer is a sigmoid (the loss differentiates through it).
    Tensor grad = grad_output;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const auto& layer = net.layers[li];
        const auto& lt = trace.layers[li];
        Tensor grad_pre;
        if (layer.act == ConvLayer::Act::LeakyRelu) {
            grad_pre = leaky_relu_backward(lt.pre_act, layer.slope, grad);
        } else {
            grad_pre = grad;  // Sigmoid handled by the loss; None is identity
        }
        ConvGrads cg = conv2d_backward(lt.input, layer.kernels, grad_pre);
        accumulate(grads[2 * li], cg.grad_weights);
        accumulate(grads[2 * li + 1], cg.grad_bias);
        grad = std::move(cg.grad_input);
    }
    return grad;
}

void part1_backward(const MultiScaleNet& net, const Part1Trace& trace, const Tensor& grad_logits,
                    GradBuffers& grads) {
    const std::size_t head_idx = 2 * 3 * net.chains.size();
    ConvGrads head_g = conv2d_backward(trace.concat, net.head, grad_logits);
    accumulate(grads[head_idx], head_g.grad_weights);
    accumulate(grads[head_idx + 1], head_g.grad_bias);

    std::vector<int> counts;
    for (const auto& out : trace.chain_outputs) counts.push_back(out.channels());
    std::vector<Tensor> chain_grads = split_channels(head_g.grad_input, counts);

    for (std::size_t ci = 0; ci < net.chains.size(); ++ci) {
        Tensor grad = resize_bilinear_backward(chain_grads[ci], trace.chain_outputs[ci].height(),
                                               trace.chain_outputs[ci].width());
        for (int li = 2; li >= 0; --li) {
            const auto& layer = net.chains[ci].layers[li];
            const auto& lt = trace.chains[ci][li];
            Tensor grad_pre = leaky_relu_backward(lt.pre_act, layer.slope, grad);
            ConvGrads cg = conv2d_backward(lt.input, layer.kernels, grad_pre);
            const std::size_t idx = 2 * (3 * ci + li);
            accumulate(grads[idx], cg.grad_weights);
            accumulate(grads[idx + 1], cg.grad_bias);
            grad = std::move(cg.grad_input);
        }
    }
}

// ---- serialization ----

namespace {

constexpr char kMagic[4] = {'C', 'S', 'E', 'G'};
constexpr std::uint16_t kVersion = 1;

struct Writer {
    std::vector<char> buf;
    void raw(const void* p, std::size_t n) {
        const char* c = static_cast<const char*>(p);
        buf.insert(buf.end(), c, c + n);
    }
    void u16(std::uint16_t v) { raw(&v, 2); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
};

struct Reader {
    const std::vector<char>& buf;
    std::size_t pos = 0;
    void raw(void* p, std::size_t n) {
        if (pos + n > buf.size()) {
            throw std::runtime_error("model file truncated");
        }
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    std::uint16_t u16() { std::uint16_t v; raw(&v, 2); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    float f32() { float v; raw(&v, 4); return v; }
};

void write_bank_header(Writer& w, const KernelBank& k) {
    w.u16(static_cast<std::uint16_t>(k.out_channels));
    w.u16(static_cast<std::uint16_t>(k.in_channels));
    w.u16(static_cast<std::uint16_t>(k.kernel_h));
    w.u16(static_cast<std::uint16_t>(k.kernel_w));
}

KernelBank read_bank_header(Reader& r) {
    const int out_c = r.u16();
    const int in_c = r.u16();
    const int kh = r.u16();
    const int kw = r.u16();
    return KernelBank::zeros(out_c, in_c, kh, kw);
}

void write_layer_header(Writer& w, const ConvLayer& layer) {
    write_bank_header(w, layer.kernels);
    w.f32(static_cast<float>(layer.slope));
    w.u16(static_cast<std::uint16_t>(layer.act));
}

ConvLayer read_layer_header(Reader& r) {
    ConvLayer layer;
    layer.kernels = read_bank_header(r);
    layer.slope = r.f32();
    const std::uint16_t act = r.u16();
    if (act > 2) throw std::runtime_error("model file integrity error: bad activation tag");
    layer.act = static_cast<ConvLayer::Act>(act);
    return layer;
}

void write_payload(Writer& w, const KernelBank& k) {
    for (real v : k.weights) w.f32(static_cast<float>(v));
    for (real v : k.bias) w.f32(static_cast<float>(v));
}

void read_payload(Reader& r, KernelBank& k) {
    for (auto& v : k.weights) v = r.f32();
    for (auto& v : k.bias) v = r.f32();
}

}  // namespace

void save_model(const CascadeModel& model, const std::filesystem::path& path) {
    Writer w;
    w.raw(kMagic, 4);
    w.u16(kVersion);
    w.u16(static_cast<std::uint16_t>(model.coarse_output_factor));
    w.u16(static_cast<std::uint16_t>(model.part1.chains.size()));
    for (int f : model.part1.pyramid_factors) w.u16(static_cast<std::uint16_t>(f));
    for (const auto& chain : model.part1.chains) {
        w.u16(static_cast<std::uint16_t>(chain.layers.size()));
        for (const auto& layer : chain.layers) write_layer_header(w, layer);
    }
    write_bank_header(w, model.part1.head);
    w.u16(static_cast<std::uint16_t>(model.part2.layers.size()));
    for (const auto& layer : model.part2.layers) write_layer_header(w, layer);

    for (const auto& chain : model.part1.chains)
        for (const auto& layer : chain.layers) write_payload(w, layer.kernels);
    write_payload(w, model.part1.head);
    for (const auto& layer : model.part2.layers) write_payload(w, layer.kernels);

    w.u64(static_cast<std::uint64_t>(w.buf.size() + 8));

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write model file " + path.string());
        out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CascadeModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 14) throw std::runtime_error("model file truncated");
    Reader r{buf};

    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a model file: " + path.string());
    }
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw std::runtime_error("unsupported model format version " + std::to_string(version));
    }

    std::uint64_t declared_len;
    std::memcpy(&declared_len, buf.data() + buf.size() - 8, 8);
    if (declared_len != buf.size()) {
        throw std::runtime_error("model file integrity error: declared length " +
                                 std::to_string(declared_len) + ", actual " +
                                 std::to_string(buf.size()));
    }

    CascadeModel model;
    model.coarse_output_factor = r.u16();
    const int n_chains = r.u16();
    model.part1.pyramid_factors.resize(n_chains);
    for (auto& f : model.part1.pyramid_factors) f = r.u16();
    for (int ci = 0; ci < n_chains; ++ci) {
        Chain chain;
        const int n_layers = r.u16();
        for (int li = 0; li < n_layers; ++li) chain.layers.push_back(read_layer_header(r));
        model.part1.chains.push_back(std::move(chain));
    }
    model.part1.head = read_bank_header(r);
    const int n_refine = r.u16();
    for (int li = 0; li < n_refine; ++li) model.part2.layers.push_back(read_layer_header(r));

    for (auto& chain : model.part1.chains)
        for (auto& layer : chain.layers) read_payload(r, layer.kernels);
    read_payload(r, model.part1.head);
    for (auto& layer : model.part2.layers) read_payload(r, layer.kernels);

    if (r.pos + 8 != buf.size()) {
        throw std::runtime_error("model file integrity error: payload length mismatch");
    }
    return model;
}

}  // namespace handseg
