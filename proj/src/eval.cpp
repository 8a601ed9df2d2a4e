#include "handseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace handseg {

AccuracyResult accuracy(const Tensor& pred, const Tensor& target, real threshold) {
    if (!(pred.shape() == target.shape())) {
        throw std::invalid_argument("accuracy: shape mismatch " + pred.shape().str() + " vs " +
                                    target.shape().str());
    }
    AccuracyResult res;
    const auto& pd = pred.data();
    const auto& td = target.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const bool p = pd[i] >= threshold;
        const bool t = td[i] >= 0.5;
        if (p && t) ++res.counts.tp;
        else if (p && !t) ++res.counts.fp;
        else if (!p && t) ++res.counts.fn;
        else ++res.counts.tn;
    }
    res.accuracy = static_cast<real>(res.counts.tp + res.counts.tn) /
                   static_cast<real>(res.counts.total());
    return res;
}

namespace {

// Pooled per-class prediction values, sorted; threshold counts then reduce to
// binary searches.
struct PooledScores {
    std::vector<real> pos;
    std::vector<real> neg;
};

PooledScores pool_scores(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets) {
    if (preds.empty() || preds.size() != targets.size()) {
        throw std::invalid_argument("pooled metrics: need equally many nonempty preds/targets");
    }
    PooledScores s;
    for (std::size_t k = 0; k < preds.size(); ++k) {
        if (!(preds[k].shape() == targets[k].shape())) {
            throw std::invalid_argument("pooled metrics: shape mismatch at pair " +
                                        std::to_string(k));
        }
        const auto& pd = preds[k].data();
        const auto& td = targets[k].data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            (td[i] >= 0.5 ? s.pos : s.neg).push_back(pd[i]);
        }
    }
    std::sort(s.pos.begin(), s.pos.end());
    std::sort(s.neg.begin(), s.neg.end());
    return s;
}

std::uint64_t count_ge(const std::vector<real>& sorted, real t) {
    return sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t);
}

}  // namespace

std::vector<RocPoint> roc_curve(const std::vector<Tensor>& preds,
                                const std::vector<Tensor>& targets, int n_thresholds) {
    if (n_thresholds < 2) throw std::invalid_argument("roc_curve: need >= 2 thresholds");
    const PooledScores s = pool_scores(preds, targets);
    std::vector<RocPoint> curve;
    curve.reserve(n_thresholds);
    for (int i = 0; i < n_thresholds; ++i) {
        const real t = static_cast<real>(i) / (n_thresholds - 1);
        RocPoint p;
        p.threshold = t;
        p.tpr = s.pos.empty() ? 0 : static_cast<real>(count_ge(s.pos, t)) / s.pos.size();
        p.fpr = s.neg.empty() ? 0 : static_cast<real>(count_ge(s.neg, t)) / s.neg.size();
        curve.push_back(p);
    }
    return curve;
}

ThresholdSweep threshold_sweep(const std::vector<Tensor>& preds,
                               const std::vector<Tensor>& targets, int n_thresholds) {
    if (n_thresholds < 2) throw std::invalid_argument("threshold_sweep: need >= 2 thresholds");
    const PooledScores s = pool_scores(preds, targets);
    const real total = static_cast<real>(s.pos.size() + s.neg.size());
    ThresholdSweep sweep;
    std::size_t best_i = 0;
    for (int i = 0; i < n_thresholds; ++i) {
        const real t = static_cast<real>(i) / (n_thresholds - 1);
        const std::uint64_t tp = count_ge(s.pos, t);
        const std::uint64_t tn = s.neg.size() - count_ge(s.neg, t);
        const real acc = static_cast<real>(tp + tn) / total;
        sweep.points.emplace_back(t, acc);
        if (acc > sweep.best_accuracy) {
            sweep.best_accuracy = acc;
            sweep.best_threshold = t;
            best_i = sweep.points.size() - 1;
        }
    }
    // widest contiguous run around the argmax staying within 0.5 points
    const real floor_acc = sweep.best_accuracy - 0.005;
    std::size_t lo = best_i, hi = best_i;
    while (lo > 0 && sweep.points[lo - 1].second >= floor_acc) --lo;
    while (hi + 1 < sweep.points.size() && sweep.points[hi + 1].second >= floor_acc) ++hi;
    sweep.plateau_width = sweep.points[hi].first - sweep.points[lo].first;
    return sweep;
}

DiffMapResult diff_map(const Tensor& pred_mask, const Tensor& target_mask) {
    if (!(pred_mask.shape() == target_mask.shape())) {
        throw std::invalid_argument("diff_map: shape mismatch " + pred_mask.shape().str() +
                                    " vs " + target_mask.shape().str());
    }
    const int H = target_mask.height(), W = target_mask.width();
    DiffMapResult res;
    res.map = Tensor(pred_mask.shape());

    // ground-truth boundary: mask pixels with a differing 8-neighbor
    auto is_boundary = [&](int y, int x) {
        const bool v = target_mask.at(0, y, x) >= 0.5;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                if ((target_mask.at(0, ny, nx) >= 0.5) != v) return true;
            }
        return false;
    };

    std::uint64_t near_boundary = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const bool mism = (pred_mask.at(0, y, x) >= 0.5) != (target_mask.at(0, y, x) >= 0.5);
            if (!mism) continue;
            res.map.at(0, y, x) = 1;
            ++res.mismatches;
            bool near = false;
            for (int dy = -1; dy <= 1 && !near; ++dy)
                for (int dx = -1; dx <= 1 && !near; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    if (is_boundary(ny, nx)) near = true;
                }
            if (near) ++near_boundary;
        }
    }
    if (res.mismatches > 0) {
        res.boundary_fraction = static_cast<real>(near_boundary) /
                                static_cast<real>(res.mismatches);
    }
    return res;
}

namespace {

std::size_t color_bin(const ColorModel& m, real r, real g, real b) {
    auto idx = [&](real v) {
        const int i = static_cast<int>(v * m.bins);
        return static_cast<std::size_t>(std::clamp(i, 0, m.bins - 1));
    };
    return (idx(r) * m.bins + idx(g)) * m.bins + idx(b);
}

}  // namespace

ColorModel color_baseline_fit(const std::vector<Sample>& train, int bins) {
    if (train.empty()) throw std::invalid_argument("color_baseline_fit: empty training set");
    if (bins < 1) throw std::invalid_argument("color_baseline_fit: bins must be >= 1");
    ColorModel model;
    model.bins = bins;
    const std::size_t n_bins = static_cast<std::size_t>(bins) * bins * bins;
    std::vector<std::uint64_t> hand(n_bins, 0), bg(n_bins, 0);
    std::uint64_t hand_total = 0, bg_total = 0;
    for (const auto& s : train) {
        for (int y = 0; y < s.image.height(); ++y)
            for (int x = 0; x < s.image.width(); ++x) {
                const std::size_t bi = color_bin(model, s.image.at(0, y, x),
                                                 s.image.at(1, y, x), s.image.at(2, y, x));
                if (s.mask.at(0, y, x) >= 0.5) {
                    ++hand[bi];
                    ++hand_total;
                } else {
                    ++bg[bi];
                    ++bg_total;
                }
            }
    }
    model.hand_hist.resize(n_bins);
    model.bg_hist.resize(n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) {
        model.hand_hist[i] = static_cast<real>(hand[i] + 1) / (hand_total + n_bins);
        model.bg_hist[i] = static_cast<real>(bg[i] + 1) / (bg_total + n_bins);
    }
    model.prior = static_cast<real>(hand_total) / static_cast<real>(hand_total + bg_total);
    return model;
}

Tensor color_baseline_predict(const ColorModel& model, const Tensor& image) {
    if (image.channels() != 3) {
        throw std::invalid_argument("color_baseline_predict: expected RGB image, got " +
                                    image.shape().str());
    }
    Tensor out({1, image.height(), image.width()});
    for (int y = 0; y < image.height(); ++y)
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t bi = color_bin(model, image.at(0, y, x), image.at(1, y, x),
                                             image.at(2, y, x));
            const real ph = model.hand_hist[bi] * model.prior;
            const real pb = model.bg_hist[bi] * (1 - model.prior);
            out.at(0, y, x) = ph / (ph + pb);
        }
    return out;
}

}  // namespace handseg
