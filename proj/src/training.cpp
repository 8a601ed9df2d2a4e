#include "handseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace handseg {

BoostedCEResult boosted_ce(const Tensor& pred_prob, const Tensor& target_mask,
                           const BoostedCEConfig& cfg) {
    if (!(pred_prob.shape() == target_mask.shape())) {
        throw std::invalid_argument("boosted_ce: shape mismatch " + pred_prob.shape().str() +
                                    " vs " + target_mask.shape().str());
    }
    if (cfg.alpha < 0) throw std::invalid_argument("boosted_ce: alpha must be >= 0");
    if (!(cfg.epsilon > 0 && cfg.epsilon < 0.5)) {
        throw std::invalid_argument("boosted_ce: epsilon must be in (0, 0.5)");
    }
    const auto& pd = pred_prob.data();
    const auto& td = target_mask.data();
    const std::size_t n = pd.size();
    BoostedCEResult res;
    res.grad_wrt_logit = Tensor(pred_prob.shape());
    auto& gd = res.grad_wrt_logit.data();

    real total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const real t = td[i];
        if (t != 0 && t != 1) {
            throw std::invalid_argument("boosted_ce: target mask must be binary");
        }
        const real p = pd[i];
        const real pt_raw = t == 1 ? p : 1 - p;
        const real pt = std::clamp(pt_raw, cfg.epsilon, 1 - cfg.epsilon);
        const real one_m = 1 - pt;
        const real mod = cfg.alpha == 0 ? 1.0 : std::pow(one_m, cfg.alpha);
        total += -mod * std::log(pt);

        // gradient flows only where the clamp is inactive
        if (pt_raw >= cfg.epsilon && pt_raw <= 1 - cfg.epsilon) {
            const real dmod = cfg.alpha == 0 ? 0.0 : cfg.alpha * std::pow(one_m, cfg.alpha - 1);
            const real dl_dpt = dmod * std::log(pt) - mod / pt;
            const real dpt_dz = (t == 1 ? 1.0 : -1.0) * p * (1 - p);
            gd[i] = dl_dpt * dpt_dz / static_cast<real>(n);
        } else {
            gd[i] = 0;
        }
    }
    res.loss = total / static_cast<real>(n);
    return res;
}

RMSPropState init_rmsprop(const std::vector<std::span<real>>& params, const RMSPropConfig& cfg) {
    if (!(cfg.decay > 0 && cfg.decay < 1)) {
        throw std::invalid_argument("rmsprop: decay must be in (0,1)");
    }
    RMSPropState state;
    state.cfg = cfg;
    state.mean_square.reserve(params.size());
    for (const auto& p : params) state.mean_square.emplace_back(p.size(), 0.0);
    return state;
}

void rmsprop_step(RMSPropState& state, std::vector<std::span<real>>& params,
                  const GradBuffers& grads) {
    if (params.size() != grads.size() || params.size() != state.mean_square.size()) {
        throw std::invalid_argument("rmsprop_step: parameter table size mismatch");
    }
    const real lr = state.cfg.learning_rate;
    const real decay = state.cfg.decay;
    const real eps = state.cfg.eps;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        const auto& g = grads[k];
        auto& ms = state.mean_square[k];
        if (p.size() != g.size() || p.size() != ms.size()) {
            throw std::invalid_argument("rmsprop_step: shape mismatch in parameter group " +
                                        std::to_string(k));
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            ms[i] = decay * ms[i] + (1 - decay) * g[i] * g[i];
            p[i] -= lr * g[i] / std::sqrt(ms[i] + eps);
        }
    }
}

Affine sample_affine(Rng& rng, const AugmentConfig& cfg, int width, int height) {
    const real s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const real rot = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) * M_PI / 180.0;
    const real shear = rng.uniform(-cfg.max_shear_deg, cfg.max_shear_deg) * M_PI / 180.0;
    const real tx = rng.uniform(-cfg.max_translate_px, cfg.max_translate_px);
    const real ty = rng.uniform(-cfg.max_translate_px, cfg.max_translate_px);

    // linear part A = scale * rotation * shear
    const real ca = std::cos(rot), sa = std::sin(rot);
    const real sh = std::tan(shear);
    const real a = s * ca, b = s * (ca * sh - sa);
    const real c = s * sa, d = s * (sa * sh + ca);

    const real cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    Affine m;
    m.m = {a, b, cx - a * cx - b * cy + tx, c, d, cy - c * cx - d * cy + ty};
    return m;
}

Sample warp_sample(const Sample& sample, const Affine& affine) {
    const auto& m = affine.m;
    const real det = m[0] * m[4] - m[1] * m[3];
    if (std::abs(det) < 1e-12) {
        throw std::invalid_argument("warp_sample: singular affine matrix");
    }
    // inverse mapping: for each destination pixel, sample the source
    const real ia = m[4] / det, ib = -m[1] / det;
    const real ic = -m[3] / det, id = m[0] / det;
    const real itx = -(ia * m[2] + ib * m[5]);
    const real ity = -(ic * m[2] + id * m[5]);

    const int H = sample.image.height(), W = sample.image.width();
    Sample out;
    out.id = sample.id;
    out.image = Tensor(sample.image.shape());
    out.mask = Tensor(sample.mask.shape());
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const real sx = std::clamp<real>(ia * x + ib * y + itx, 0, W - 1);
            const real sy = std::clamp<real>(ic * x + id * y + ity, 0, H - 1);
            const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
            const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
            const real fx = sx - x0, fy = sy - y0;
            for (int ch = 0; ch < 3; ++ch) {
                const real top = sample.image.at(ch, y0, x0) * (1 - fx) +
                                 sample.image.at(ch, y0, x1) * fx;
                const real bot = sample.image.at(ch, y1, x0) * (1 - fx) +
                                 sample.image.at(ch, y1, x1) * fx;
                out.image.at(ch, y, x) = top * (1 - fy) + bot * fy;
            }
            // mask uses the same sampler, re-binarized at 0.5, so image and
            // mask boundaries stay aligned to within half a pixel
            const real mtop = sample.mask.at(0, y0, x0) * (1 - fx) +
                              sample.mask.at(0, y0, x1) * fx;
            const real mbot = sample.mask.at(0, y1, x0) * (1 - fx) +
                              sample.mask.at(0, y1, x1) * fx;
            out.mask.at(0, y, x) = mtop * (1 - fy) + mbot * fy >= 0.5 ? 1.0 : 0.0;
        }
    }
    return out;
}

Tensor coarse_target(const Tensor& mask, int factor) {
    Tensor t = area_downsample(mask, factor);
    for (auto& v : t.data()) v = v >= 0.5 ? 1.0 : 0.0;
    return t;
}

namespace {

real mask_accuracy(const Tensor& pred, const Tensor& target) {
    std::size_t correct = 0;
    const auto& pd = pred.data();
    const auto& td = target.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
        if ((pd[i] >= 0.5) == (td[i] >= 0.5)) ++correct;
    }
    return static_cast<real>(correct) / static_cast<real>(pd.size());
}

Sample augment(const Sample& sample, const TrainConfig& cfg, int epoch, std::size_t idx) {
    if (!cfg.augment_enabled) return sample;
    Rng rng(stream_seed(cfg.seed, static_cast<std::uint64_t>(epoch) * 0x10001 + idx,
                        static_cast<std::uint64_t>(cfg.stage)));
    const Affine m = sample_affine(rng, cfg.augment, sample.image.width(),
                                   sample.image.height());
    return warp_sample(sample, m);
}

std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& cfg, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(stream_seed(cfg.seed, 0x0fdeull, static_cast<std::uint64_t>(epoch) * 2 + cfg.stage));
    rng.shuffle(order);
    return order;
}

void check_finite_loss(real loss, int epoch) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
    }
}

void scale_grads(GradBuffers& grads, real factor) {
    for (auto& buf : grads)
        for (auto& v : buf) v *= factor;
}

}  // namespace

std::vector<EpochStats> train_stage1(MultiScaleNet& net, const std::vector<Sample>& dataset,
                                     const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train_stage1: empty dataset");
    if (cfg.stage != 1) throw std::invalid_argument("train_stage1: cfg.stage must be 1");
    if (cfg.epochs < 1 || cfg.batch_size < 1) {
        throw std::invalid_argument("train_stage1: counts must be positive");
    }
    auto params = collect_params(net);
    RMSPropState opt = init_rmsprop(params, cfg.optimizer);
    const int factor = net.pyramid_factors.back();

    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(dataset.size(), cfg, epoch);
        real epoch_loss = 0, epoch_acc = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            GradBuffers grads = zero_grads(params);
            const std::size_t bn = std::min<std::size_t>(cfg.batch_size, order.size() - b);
            for (std::size_t j = 0; j < bn; ++j) {
                const std::size_t idx = order[b + j];
                const Sample s = augment(dataset[idx], cfg, epoch, idx);
                const Tensor target = coarse_target(s.mask, factor);
                Part1Trace trace = part1_forward_trace(net, s.image);
                BoostedCEResult ce = boosted_ce(trace.output, target, cfg.loss);
                part1_backward(net, trace, ce.grad_wrt_logit, grads);
                epoch_loss += ce.loss;
                epoch_acc += mask_accuracy(trace.output, target);
            }
            scale_grads(grads, 1.0 / static_cast<real>(bn));
            rmsprop_step(opt, params, grads);
        }
        epoch_loss /= static_cast<real>(dataset.size());
        epoch_acc /= static_cast<real>(dataset.size());
        check_finite_loss(epoch_loss, epoch);
        history.push_back({epoch, "train", epoch_loss, epoch_acc});
    }
    return history;
}

std::vector<EpochStats> train_refine(RefineNet& net, const std::vector<Sample>& dataset,
                                     const std::function<Tensor(const Sample&)>& input_builder,
                                     const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train_refine: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1) {
        throw std::invalid_argument("train_refine: counts must be positive");
    }
    auto params = collect_params(net);
    RMSPropState opt = init_rmsprop(params, cfg.optimizer);

    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(dataset.size(), cfg, epoch);
        real epoch_loss = 0, epoch_acc = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            GradBuffers grads = zero_grads(params);
            const std::size_t bn = std::min<std::size_t>(cfg.batch_size, order.size() - b);
            for (std::size_t j = 0; j < bn; ++j) {
                const std::size_t idx = order[b + j];
                const Sample s = augment(dataset[idx], cfg, epoch, idx);
                const Tensor input = input_builder(s);
                RefineTrace trace = refine_forward_trace(net, input);
                BoostedCEResult ce = boosted_ce(trace.output, s.mask, cfg.loss);
                refine_backward(net, trace, ce.grad_wrt_logit, grads);
                epoch_loss += ce.loss;
                epoch_acc += mask_accuracy(trace.output, s.mask);
            }
            scale_grads(grads, 1.0 / static_cast<real>(bn));
            rmsprop_step(opt, params, grads);
        }
        epoch_loss /= static_cast<real>(dataset.size());
        epoch_acc /= static_cast<real>(dataset.size());
        check_finite_loss(epoch_loss, epoch);
        history.push_back({epoch, "train", epoch_loss, epoch_acc});
    }
    return history;
}

std::vector<EpochStats> train_stage2(CascadeModel& model, const std::vector<Sample>& dataset,
                                     const TrainConfig& cfg) {
    if (cfg.stage != 2) throw std::invalid_argument("train_stage2: cfg.stage must be 2");
    const MultiScaleNet& part1 = model.part1;  // frozen
    const int factor = model.coarse_output_factor;
    auto builder = [&part1, factor](const Sample& s) {
        Tensor coarse = part1_forward(part1, s.image);
        Tensor up = resize_bilinear(coarse, s.image.height(), s.image.width());
        return concat_channels({s.image, up});
    };
    return train_refine(model.part2, dataset, builder, cfg);
}

}  // namespace handseg
