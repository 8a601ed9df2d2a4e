#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "handseg/data.hpp"
#include "handseg/tensor.hpp"

namespace handseg {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct AccuracyResult {
    real accuracy = 0;
    ConfusionCounts counts;
};

/// Pixel accuracy at the given threshold; p >= threshold counts as hand.
AccuracyResult accuracy(const Tensor& pred, const Tensor& target, real threshold = 0.5);

struct RocPoint {
    real threshold = 0;
    real tpr = 0;
    real fpr = 0;
};

/// Micro-averaged over all pixels of all images; thresholds evenly spaced on
/// [0,1] inclusive. TPR and FPR are nonincreasing in threshold.
std::vector<RocPoint> roc_curve(const std::vector<Tensor>& preds,
                                const std::vector<Tensor>& targets, int n_thresholds = 256);

struct ThresholdSweep {
    std::vector<std::pair<real, real>> points;  // (threshold, accuracy)
    real best_threshold = 0;
    real best_accuracy = 0;
    real plateau_width = 0;  // widest contiguous interval within 0.005 of the max
};

ThresholdSweep threshold_sweep(const std::vector<Tensor>& preds,
                               const std::vector<Tensor>& targets, int n_thresholds = 256);

struct DiffMapResult {
    Tensor map;  // 0 = match, 1 = mismatch
    std::uint64_t mismatches = 0;
    // fraction of mismatched pixels 8-adjacent to a ground-truth boundary
    // pixel; 1.0 by convention when there are no mismatches
    real boundary_fraction = 1.0;
};

DiffMapResult diff_map(const Tensor& pred_mask, const Tensor& target_mask);

/// Bayes classifier over two per-class RGB histograms with add-one smoothing.
struct ColorModel {
    int bins = 16;
    std::vector<real> hand_hist;  // normalized, bins^3 each
    std::vector<real> bg_hist;
    real prior = 0.5;  // hand-pixel fraction in the training data
};

ColorModel color_baseline_fit(const std::vector<Sample>& train, int bins = 16);
Tensor color_baseline_predict(const ColorModel& model, const Tensor& image);

}  // namespace handseg
