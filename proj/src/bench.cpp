#include "handseg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "handseg/eval.hpp"

namespace handseg {

namespace {

real pooled_accuracy(const Variant& variant, const std::vector<Sample>& test) {
    std::uint64_t correct = 0, total = 0;
    for (const auto& s : test) {
        const Tensor pred = variant.forward(s.image);
        const AccuracyResult r = accuracy(pred, s.mask, 0.5);
        correct += r.counts.tp + r.counts.tn;
        total += r.counts.total();
    }
    return static_cast<real>(correct) / static_cast<real>(total);
}

}  // namespace

BenchResult bench_inference(const Variant& variant, const std::vector<Sample>& test, int reps,
                            std::uint64_t seed) {
    if (test.empty()) throw std::invalid_argument("bench_inference: empty test set");
    if (reps < 20) throw std::invalid_argument("bench_inference: need >= 20 repetitions");

    using clock = std::chrono::steady_clock;
    constexpr int kWarmup = 3;
    std::vector<real> times_ms;
    times_ms.reserve(reps);
    for (int i = 0; i < reps + kWarmup; ++i) {
        const Sample& s = test[i % test.size()];
        const auto t0 = clock::now();
        const Tensor out = variant.forward(s.image);
        const auto t1 = clock::now();
        if (out.channels() != 1) {
            throw std::runtime_error("bench_inference: variant did not produce a 1-channel map");
        }
        if (i >= kWarmup) {
            times_ms.push_back(std::chrono::duration<real, std::milli>(t1 - t0).count());
        }
    }
    std::sort(times_ms.begin(), times_ms.end());

    BenchResult res;
    res.variant = variant.name;
    res.repetitions = reps;
    res.seed = seed;
    res.height = test.front().image.height();
    res.width = test.front().image.width();
    real sum = 0;
    for (real t : times_ms) sum += t;
    res.mean_ms = sum / times_ms.size();
    res.median_ms = times_ms[times_ms.size() / 2];
    res.p95_ms = times_ms[std::min(times_ms.size() - 1,
                                   static_cast<std::size_t>(times_ms.size() * 0.95))];
    res.accuracy = pooled_accuracy(variant, test);
    return res;
}

std::vector<BenchResult> run_ablation_suite(const std::vector<Sample>& train,
                                            const std::vector<Sample>& test,
                                            const AblationConfig& cfg) {
    if (train.empty() || test.empty()) {
        throw std::invalid_argument("run_ablation_suite: need nonempty train and test splits");
    }

    // cascade
    CascadeModel cascade = init_cascade(cfg.seed);
    train_stage1(cascade.part1, train, cfg.stage1);
    train_stage2(cascade, train, cfg.stage2);
    Variant v_cascade{"cascade",
                      [&cascade](const Tensor& img) { return cascade_forward(cascade, img).second; }};

    // full-resolution monolith, same training budget as both stages combined
    RefineNet monolith = build_fullres_variant(cfg.seed);
    TrainConfig mono_cfg = cfg.stage2;
    mono_cfg.epochs = cfg.monolith_epochs > 0 ? cfg.monolith_epochs
                                              : cfg.stage1.epochs + cfg.stage2.epochs;
    train_refine(monolith, train, [](const Sample& s) { return s.image; }, mono_cfg);
    Variant v_mono{"fullres-monolith",
                   [&monolith](const Tensor& img) { return refine_forward(monolith, img); }};

    // second stage fed only the upscaled coarse map, sharing the trained part1
    RefineNet no_image = build_no_image_variant(cfg.seed);
    const MultiScaleNet& part1 = cascade.part1;
    auto no_image_input = [&part1](const Tensor& img) {
        Tensor coarse = part1_forward(part1, img);
        return resize_bilinear(coarse, img.height(), img.width());
    };
    train_refine(no_image, train,
                 [&no_image_input](const Sample& s) { return no_image_input(s.image); },
                 cfg.stage2);
    Variant v_noimg{"no-image", [&no_image, &no_image_input](const Tensor& img) {
                        return refine_forward(no_image, no_image_input(img));
                    }};

    // color-only baseline
    const ColorModel color = color_baseline_fit(train);
    Variant v_color{"color-baseline",
                    [&color](const Tensor& img) { return color_baseline_predict(color, img); }};

    std::vector<BenchResult> table;
    for (const Variant* v : {&v_cascade, &v_mono, &v_noimg, &v_color}) {
        table.push_back(bench_inference(*v, test, cfg.reps, cfg.seed));
    }
    return table;
}

}  // namespace handseg
