#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "handseg/data.hpp"
#include "handseg/network.hpp"
#include "handseg/rng.hpp"
#include "handseg/tensor.hpp"

namespace handseg {

/// Cross-entropy with the per-pixel modulating weight (1 - p_t)^alpha that
/// emphasizes poorly predicted pixels. alpha = 0 reduces to plain mean
/// binary cross-entropy.
struct BoostedCEConfig {
    real alpha = 2.0;
    real epsilon = 1e-7;  // probability clamp keeping the log finite
};

struct BoostedCEResult {
    real loss = 0;
    Tensor grad_wrt_logit;  // d(mean loss)/d(pre-sigmoid logit)
};

BoostedCEResult boosted_ce(const Tensor& pred_prob, const Tensor& target_mask,
                           const BoostedCEConfig& cfg = {});

struct RMSPropConfig {
    real learning_rate = 1e-3;
    real decay = 0.9;
    real eps = 1e-8;
};

struct RMSPropState {
    RMSPropConfig cfg;
    GradBuffers mean_square;  // per-parameter accumulators, mirrors collect_params
};

RMSPropState init_rmsprop(const std::vector<std::span<real>>& params,
                          const RMSPropConfig& cfg = {});

/// ms <- decay*ms + (1-decay)*g^2; param <- param - lr*g/sqrt(ms + eps).
void rmsprop_step(RMSPropState& state, std::vector<std::span<real>>& params,
                  const GradBuffers& grads);

// ---- affine augmentation ----

struct AugmentConfig {
    real scale_min = 0.9;
    real scale_max = 1.1;
    real max_rotation_deg = 10;
    real max_shear_deg = 5;
    real max_translate_px = 20;
};

/// Row-major 2x3 matrix: x' = m[0]x + m[1]y + m[2], y' = m[3]x + m[4]y + m[5].
struct Affine {
    std::array<real, 6> m{1, 0, 0, 0, 1, 0};
};

/// scale * rotation * shear composed about the image center, then translation.
/// Each factor is drawn uniformly from its symmetric range.
Affine sample_affine(Rng& rng, const AugmentConfig& cfg, int width, int height);

/// Image warped with bilinear sampling and edge clamp; the mask with the same
/// matrix and sampler, then re-binarized at 0.5.
Sample warp_sample(const Sample& sample, const Affine& affine);

// ---- training loops ----

struct TrainConfig {
    int epochs = 10;
    int batch_size = 4;
    std::uint64_t seed = 1;
    int stage = 1;  // 1 or 2
    BoostedCEConfig loss;
    RMSPropConfig optimizer;
    AugmentConfig augment;
    bool augment_enabled = true;
};

struct EpochStats {
    int epoch = 0;
    std::string split = "train";
    real loss = 0;
    real accuracy = 0;
};

/// Stage 1: per epoch, seeded shuffle, on-the-fly augmentation, ground-truth
/// masks area-averaged to the coarse resolution and thresholded at 0.5,
/// boosted cross-entropy + RMSprop. Aborts with a diagnostic on NaN loss.
std::vector<EpochStats> train_stage1(MultiScaleNet& net, const std::vector<Sample>& dataset,
                                     const TrainConfig& cfg);

/// Generic refinement-style training: input_builder maps the (augmented)
/// sample to the net input; the target is the sample's full-resolution mask.
std::vector<EpochStats> train_refine(RefineNet& net, const std::vector<Sample>& dataset,
                                     const std::function<Tensor(const Sample&)>& input_builder,
                                     const TrainConfig& cfg);

/// Stage 2: part1 frozen; its coarse output is upscaled and fed alongside the
/// original image to train part2 against the full-resolution mask.
std::vector<EpochStats> train_stage2(CascadeModel& model, const std::vector<Sample>& dataset,
                                     const TrainConfig& cfg);

/// Area-average mask downscale by an integer factor, thresholded at 0.5.
Tensor coarse_target(const Tensor& mask, int factor);

}  // namespace handseg
