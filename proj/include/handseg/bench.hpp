#pragma once

#include <functional>
#include <string>
#include <vector>

#include "handseg/data.hpp"
#include "handseg/network.hpp"
#include "handseg/training.hpp"

namespace handseg {

/// A named full-image inference path: RGB image in, probability map out.
struct Variant {
    std::string name;
    std::function<Tensor(const Tensor&)> forward;
};

struct BenchResult {
    std::string variant;
    real accuracy = 0;   // pooled pixel accuracy at threshold 0.5
    real mean_ms = 0;    // per-image wall time, monotonic clock
    real median_ms = 0;
    real p95_ms = 0;
    int height = 0;
    int width = 0;
    int repetitions = 0;
    std::uint64_t seed = 0;
};

/// Times `reps` single-image forward passes (cycling through the test set)
/// after 3 excluded warm-up runs; accuracy is computed on one full pass.
BenchResult bench_inference(const Variant& variant, const std::vector<Sample>& test, int reps,
                            std::uint64_t seed = 0);

struct AblationConfig {
    std::uint64_t seed = 1;
    TrainConfig stage1;   // also seeds the cascade init
    TrainConfig stage2;
    int monolith_epochs = 0;  // 0: stage1.epochs + stage2.epochs
    int reps = 50;
};

/// Trains and evaluates the four variants (cascade, full-resolution monolith,
/// no-image second stage, color baseline) on identical data and seeds.
std::vector<BenchResult> run_ablation_suite(const std::vector<Sample>& train,
                                            const std::vector<Sample>& test,
                                            const AblationConfig& cfg);

}  // namespace handseg
