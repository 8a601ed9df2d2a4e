#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "handseg/tensor.hpp"

namespace handseg {

/// One convolution layer with its activation. The final layer of a
/// refinement net uses a sigmoid instead of the leaky ReLU.
struct ConvLayer {
    enum class Act { LeakyRelu, Sigmoid, None };
    KernelBank kernels;
    real slope = 0.01;
    Act act = Act::LeakyRelu;
};

/// Three convolution layers applied at one pyramid scale.
struct Chain {
    std::vector<ConvLayer> layers;  // exactly 3
};

/// Stage 1: three chains, one per pyramid level, merged by a 1x1 logistic
/// head into a single coarse probability channel.
struct MultiScaleNet {
    std::vector<Chain> chains;            // one per pyramid factor
    KernelBank head;                      // 1x1, concat channels -> 1 logit
    std::vector<int> pyramid_factors;     // strictly increasing, default 4,8,16
};

/// Stage 2: three layers refining the upscaled coarse map together with the
/// original image to a full-resolution probability map.
struct RefineNet {
    std::vector<ConvLayer> layers;  // exactly 3, last one sigmoid
};

struct CascadeModel {
    MultiScaleNet part1;
    RefineNet part2;
    int coarse_output_factor = 16;  // equals max(pyramid_factors)
};

struct ArchConfig {
    std::vector<int> chain_channels{32, 32, 16};
    std::vector<int> chain_ksizes{3, 5, 7};
    std::vector<int> pyramid_factors{4, 8, 16};
    std::vector<int> refine_channels{8, 4, 1};
    std::vector<int> refine_ksizes{3, 3, 3};
    real leaky_slope = 0.01;
};

/// Deterministic zero-mean uniform init scaled by 1/sqrt(fan-in), zero bias.
CascadeModel init_cascade(std::uint64_t seed, const ArchConfig& config = {});

/// Ablation: full-resolution monolith, 3-channel image input, (16,16,1)
/// feature maps with 5x5 filters.
RefineNet build_fullres_variant(std::uint64_t seed);

/// Ablation: refinement stage fed only the 1-channel upscaled coarse map.
RefineNet build_no_image_variant(std::uint64_t seed);

Tensor layer_forward(const ConvLayer& layer, const Tensor& input);

/// Coarse probability map at 1 x ceil(H/f) x ceil(W/f), f = max pyramid factor.
Tensor part1_forward(const MultiScaleNet& net, const Tensor& image);

/// Generic stack of layers; input must already carry the right channels.
Tensor refine_forward(const RefineNet& net, const Tensor& input);

/// Upscales the coarse map to the image resolution, concatenates it as a 4th
/// channel, and refines to a full-resolution probability map.
Tensor part2_forward(const RefineNet& net, const Tensor& image, const Tensor& coarse,
                     int coarse_factor = 16);

/// Returns (coarse, fine) probability maps.
std::pair<Tensor, Tensor> cascade_forward(const CascadeModel& model, const Tensor& image);

int ceil_div(int a, int b);
std::size_t param_count(const MultiScaleNet& net);
std::size_t param_count(const RefineNet& net);

/// Mutable views over every parameter array in declaration order
/// (per kernel bank: weights then bias). RMSprop state and gradient buffers
/// mirror this ordering.
std::vector<std::span<real>> collect_params(MultiScaleNet& net);
std::vector<std::span<real>> collect_params(RefineNet& net);

// ---- forward traces and backward passes (training) ----

struct LayerTrace {
    Tensor input;       // layer input
    Tensor pre_act;     // conv output before activation
};

struct RefineTrace {
    std::vector<LayerTrace> layers;
    Tensor output;  // final probability map
};

struct Part1Trace {
    std::vector<Tensor> level_images;          // per-chain resized input
    std::vector<std::vector<LayerTrace>> chains;
    std::vector<Tensor> chain_outputs;         // at chain level, post-activation
    std::vector<Tensor> merged_outputs;        // resized to coarsest level
    Tensor concat;
    Tensor logits;
    Tensor output;  // coarse probability map
};

RefineTrace refine_forward_trace(const RefineNet& net, const Tensor& input);
Part1Trace part1_forward_trace(const MultiScaleNet& net, const Tensor& image);

/// Gradient buffers matching collect_params ordering.
using GradBuffers = std::vector<std::vector<real>>;

GradBuffers zero_grads(const std::vector<std::span<real>>& params);

/// Accumulates parameter gradients into grads; returns grad wrt the net input.
Tensor refine_backward(const RefineNet& net, const RefineTrace& trace,
                       const Tensor& grad_output, GradBuffers& grads);

/// Accumulates parameter gradients into grads (input image grads discarded).
void part1_backward(const MultiScaleNet& net, const Part1Trace& trace,
                    const Tensor& grad_logits, GradBuffers& grads);

// ---- serialization ----

/// Versioned binary model file: magic "CSEG", u16 version, layer tables,
/// little-endian float32 weight payloads, trailing u64 length field.
void save_model(const CascadeModel& model, const std::filesystem::path& path);
CascadeModel load_model(const std::filesystem::path& path);

}  // namespace handseg
