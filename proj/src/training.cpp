#include "searth/training.hpp"

#include <cmath>
#include <iomanip>

namespace searth {

void TrainConfig::validate() const {
    if (mode != "pretrain" && mode != "ar" && mode != "rar")
        throw ConfigError("mode must be pretrain|ar|rar, got '" + mode + "'");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (start_iteration < 0 || start_iteration > iterations)
        throw ConfigError("start_iteration must lie in [0, iterations]");
    if (lr_schedule_total < 0) throw ConfigError("lr_schedule_total must be >= 0");
    if (lr_initial < 0 || lr_final < 0) throw ConfigError("learning rates must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
        throw ConfigError("beta coefficients must lie in [0,1)");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (droppath >= 1.0) throw ConfigError("droppath must be below 1");
    if (rollout_k < 1 || rollout_m < 1) throw ConfigError("rollout k and M must be >= 1");
}

void write_loss_csv(std::ostream& os, const std::vector<LossRow>& rows) {
    os << "iter,lr,loss\n" << std::setprecision(17);
    for (const auto& r : rows) os << r.iter << ',' << r.lr << ',' << r.loss << '\n';
}

double cosine_lr(int64_t iter, int64_t total_iters, double lr0, double lr_min) {
    if (total_iters <= 0) return lr0;
    if (iter < 0) iter = 0;
    if (iter > total_iters) iter = total_iters;
    const double frac = static_cast<double>(iter) / static_cast<double>(total_iters);
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(M_PI * frac));
}

template <class T>
Tensor<T> frame_at(const Tensor<T>& frames, int64_t i) {
    if (frames.rank() != 4) throw ShapeError("frame_at: need [N,C,H,W]");
    return reshape(slice(frames, 0, i, 1),
                   Shape{frames.extent(1), frames.extent(2), frames.extent(3)});
}

template <class T>
Tensor<T> weighted_mae_loss(const Tensor<T>& pred, const Tensor<T>& target,
                            const std::vector<double>& lat_weights) {
    if (pred.shape() != target.shape())
        throw ShapeError("weighted_mae_loss: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    if (pred.rank() != 4 && pred.rank() != 5)
        throw ShapeError("weighted_mae_loss: need [T,C,H,W] or [B,T,C,H,W]");
    if (pred.size() == 0) throw ShapeError("weighted_mae_loss: empty forecast block");
    const int64_t h = pred.extent(pred.rank() - 2), w = pred.extent(pred.rank() - 1);
    if (static_cast<int64_t>(lat_weights.size()) != h)
        throw ShapeError("weighted_mae_loss: " + std::to_string(lat_weights.size()) +
                         " latitude weights for " + std::to_string(h) + " rows");
    Tensor<T> wfull(pred.shape());
    T* wd = wfull.data();
    const int64_t planes = pred.size() / (h * w);
    for (int64_t p = 0; p < planes; ++p)
        for (int64_t i = 0; i < h; ++i) {
            const T li = static_cast<T>(lat_weights[static_cast<size_t>(i)]);
            T* row = wd + (p * h + i) * w;
            for (int64_t j = 0; j < w; ++j) row[j] = li;
        }
    Tensor<T> weighted = mul(abs(sub(pred, target)), wfull);
    return scale(sum(weighted), 1.0 / static_cast<double>(pred.size()));
}

template <class T>
void Optimizer<T>::init(ModelParams<T>& params) {
    auto registry = named_tensors(params);
    m.clear();
    v.clear();
    for (auto& [name, t] : registry) {
        m.emplace_back(static_cast<size_t>(t->size()), T(0));
        v.emplace_back(static_cast<size_t>(t->size()), T(0));
    }
    step_count = 0;
}

template <class T>
std::vector<std::vector<T>> collect_grads(
    const GradMap<T>& gm, const std::vector<std::pair<std::string, Tensor<T>*>>& registry) {
    std::vector<std::vector<T>> out;
    out.reserve(registry.size());
    for (const auto& [name, t] : registry) out.push_back(gm.of(*t).values());
    return out;
}

template <class T>
void adamw_step(const std::vector<std::pair<std::string, Tensor<T>*>>& registry,
                const std::vector<std::vector<T>>& grads, Optimizer<T>& opt, double lr) {
    if (registry.size() != grads.size() || registry.size() != opt.m.size())
        throw ShapeError("adamw_step: registry, gradients, and moments disagree in length");
    for (size_t i = 0; i < registry.size(); ++i) {
        if (static_cast<int64_t>(grads[i].size()) != registry[i].second->size())
            throw ShapeError("adamw_step: gradient size mismatch for " + registry[i].first);
        for (T g : grads[i])
            if (!std::isfinite(static_cast<double>(g)))
                throw NumericError("adamw_step: non-finite gradient for " + registry[i].first);
    }
    opt.step_count += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
    for (size_t i = 0; i < registry.size(); ++i) {
        T* w = registry[i].second->data();
        const T* g = grads[i].data();
        T* mi = opt.m[i].data();
        T* vi = opt.v[i].data();
        const int64_t n = registry[i].second->size();
        const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
        for (int64_t j = 0; j < n; ++j) {
            w[j] -= static_cast<T>(lr * opt.weight_decay) * w[j];
            mi[j] = b1 * mi[j] + (T(1) - b1) * g[j];
            vi[j] = b2 * vi[j] + (T(1) - b2) * g[j] * g[j];
            const double mhat = static_cast<double>(mi[j]) / bc1;
            const double vhat = static_cast<double>(vi[j]) / bc2;
            w[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + opt.eps));
        }
    }
}

namespace {

// Re-ramp per-pair stochastic depth linearly over depth for this phase.
template <class T>
void apply_droppath_override(ModelParams<T>& p, double base) {
    if (base < 0.0) return;
    std::vector<BlockPairParams<T>*> pairs;
    for (auto& bp : p.encoder) pairs.push_back(&bp);
    for (auto& bp : p.core) pairs.push_back(&bp);
    for (auto& bp : p.decoder) pairs.push_back(&bp);
    const int64_t total = static_cast<int64_t>(pairs.size());
    for (int64_t g = 0; g < total; ++g) {
        double r = 0.0;
        if (base > 0.0) r = total == 1 ? base : base * static_cast<double>(g) / static_cast<double>(total - 1);
        pairs[static_cast<size_t>(g)]->droppath = r;
    }
}

template <class T>
Tensor<T> stack_steps(const std::vector<Tensor<T>>& frames) {
    std::vector<Tensor<T>> rows;
    rows.reserve(frames.size());
    for (const auto& f : frames)
        rows.push_back(reshape(f, Shape{1, f.extent(0), f.extent(1), f.extent(2)}));
    return concat(rows, 0);
}

template <class T>
void check_sequence(const Tensor<T>& frames, int64_t needed, const char* who) {
    if (frames.rank() != 4)
        throw ShapeError(std::string(who) + ": need frames [N,C,H,W], got " +
                         shape_str(frames.shape()));
    if (frames.extent(0) < needed)
        throw ConfigError(std::string(who) + ": need at least " + std::to_string(needed) +
                          " frames, have " + std::to_string(frames.extent(0)));
}

}  // namespace

template <class T>
TrainStats pretrain(ModelParams<T>& params, Optimizer<T>& opt, const ModelMasks& masks,
                    const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                    const TrainConfig& tc) {
    tc.validate();
    check_sequence(frames_norm, 3, "pretrain");
    apply_droppath_override(params, tc.droppath);
    opt.beta1 = tc.beta1;
    opt.beta2 = tc.beta2;
    opt.weight_decay = tc.weight_decay;
    if (!opt.initialized()) opt.init(params);

    auto registry = named_tensors(params);
    const int64_t n = frames_norm.extent(0);
    const int64_t c = frames_norm.extent(1), h = frames_norm.extent(2), w = frames_norm.extent(3);
    const int64_t sched = tc.lr_schedule_total > 0 ? tc.lr_schedule_total : tc.iterations;
    Rng rng(tc.seed);
    TrainStats stats;
    Tape<T> tape;
    for (int64_t iter = tc.start_iteration; iter < tc.iterations; ++iter) {
        const double lr = cosine_lr(iter, sched, tc.lr_initial, tc.lr_final);
        for (auto& [name, t] : registry) tape.watch(*t);
        RngStream data_stream = rng.stream("data", static_cast<uint64_t>(iter));
        RngStream dp = rng.stream("droppath", static_cast<uint64_t>(iter));
        Tensor<T> loss;
        for (int64_t b = 0; b < tc.batch; ++b) {
            const int64_t s = static_cast<int64_t>(data_stream.below(static_cast<uint64_t>(n - 2)));
            Tensor<T> pred = forward_step(params, masks, frame_at(frames_norm, s),
                                          frame_at(frames_norm, s + 1), &dp);
            Tensor<T> l = weighted_mae_loss(reshape(pred, Shape{1, c, h, w}),
                                            reshape(frame_at(frames_norm, s + 2), Shape{1, c, h, w}),
                                            lat_weights);
            loss = b == 0 ? l : add(loss, l);
        }
        if (tc.batch > 1) loss = scale(loss, 1.0 / static_cast<double>(tc.batch));
        const double lv = loss.item();
        if (!std::isfinite(lv))
            throw NumericError("pretrain: non-finite loss at iteration " + std::to_string(iter));
        GradMap<T> gm = tape.backward(loss);
        adamw_step(registry, collect_grads(gm, registry), opt, lr);
        stats.log.push_back({iter, lr, lv});
    }
    stats.peak_live_nodes = tape.peak_live_nodes();
    return stats;
}

template <class T>
TrainStats finetune_rar(ModelParams<T>& params, Optimizer<T>& opt, const ModelMasks& masks,
                        const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                        int64_t k, int64_t m_stages, const TrainConfig& tc,
                        const StageGradObserver<T>* observer) {
    tc.validate();
    if (k < 1 || m_stages < 1) throw ConfigError("finetune_rar: k and M must be >= 1");
    check_sequence(frames_norm, m_stages * k + 2, "finetune_rar");
    apply_droppath_override(params, tc.droppath);
    opt.beta1 = tc.beta1;
    opt.beta2 = tc.beta2;
    opt.weight_decay = tc.weight_decay;
    if (!opt.initialized()) opt.init(params);

    auto registry = named_tensors(params);
    const int64_t n = frames_norm.extent(0);
    const int64_t sched = tc.lr_schedule_total > 0 ? tc.lr_schedule_total : tc.iterations;
    Rng rng(tc.seed);
    TrainStats stats;
    Tape<T> tape;
    for (int64_t iter = tc.start_iteration; iter < tc.iterations; ++iter) {
        const double lr = cosine_lr(iter, sched, tc.lr_initial, tc.lr_final);
        RngStream data_stream = rng.stream("data", static_cast<uint64_t>(iter));
        RngStream dp = rng.stream("droppath", static_cast<uint64_t>(iter));
        const int64_t smax = n - (m_stages * k + 1);
        const int64_t s = static_cast<int64_t>(data_stream.below(static_cast<uint64_t>(smax)));
        Tensor<T> x_prev = frame_at(frames_norm, s);
        Tensor<T> x_curr = frame_at(frames_norm, s + 1);

        std::vector<std::vector<T>> grad_accum;
        double loss_accum = 0.0;
        for (int64_t stage = 0; stage < m_stages; ++stage) {
            for (auto& [name, t] : registry) tape.watch(*t);
            std::vector<Tensor<T>> preds;
            Tensor<T> cp = x_prev, cc = x_curr;
            for (int64_t j = 0; j < k; ++j) {
                Tensor<T> next = forward_step(params, masks, cp, cc, &dp);
                preds.push_back(next);
                cp = cc;
                cc = next;
            }
            std::vector<Tensor<T>> targets;
            for (int64_t j = 0; j < k; ++j)
                targets.push_back(frame_at(frames_norm, s + stage * k + 2 + j));
            Tensor<T> loss = weighted_mae_loss(stack_steps(preds), stack_steps(targets), lat_weights);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw NumericError("finetune_rar: non-finite loss at iteration " +
                                   std::to_string(iter) + ", stage " + std::to_string(stage));
            GradMap<T> gm = tape.backward(loss);
            auto grads = collect_grads(gm, registry);
            if (observer) (*observer)(iter, stage, grads, lv);
            if (tc.update_per_sequence) {
                if (grad_accum.empty()) grad_accum = std::move(grads);
                else
                    for (size_t gi = 0; gi < grads.size(); ++gi)
                        for (size_t gj = 0; gj < grads[gi].size(); ++gj)
                            grad_accum[gi][gj] += grads[gi][gj];
                loss_accum += lv;
            } else {
                adamw_step(registry, grads, opt, lr);
                stats.log.push_back({iter * m_stages + stage, lr, lv});
            }
            // relay: the last two predictions continue the rollout as constants
            x_prev = cp.detach();
            x_curr = cc.detach();
        }
        if (tc.update_per_sequence) {
            adamw_step(registry, grad_accum, opt, lr);
            stats.log.push_back({iter, lr, loss_accum / static_cast<double>(m_stages)});
        }
    }
    stats.peak_live_nodes = tape.peak_live_nodes();
    return stats;
}

template <class T>
TrainStats finetune_ar(ModelParams<T>& params, Optimizer<T>& opt, const ModelMasks& masks,
                       const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                       int64_t n_steps, const TrainConfig& tc) {
    return finetune_rar<T>(params, opt, masks, frames_norm, lat_weights, n_steps, 1, tc, nullptr);
}

template <class T>
double one_step_wlmae(ModelParams<T>& params, const ModelMasks& masks,
                      const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                      int64_t begin, int64_t end) {
    if (frames_norm.rank() != 4) throw ShapeError("one_step_wlmae: need [N,C,H,W]");
    const int64_t n = frames_norm.extent(0);
    if (begin < 1 || end > n - 1 || begin >= end)
        throw ConfigError("one_step_wlmae: invalid range [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") for " + std::to_string(n) + " frames");
    const int64_t c = frames_norm.extent(1), h = frames_norm.extent(2), w = frames_norm.extent(3);
    double total = 0.0;
    for (int64_t t = begin; t < end; ++t) {
        Tensor<T> pred = forward_step(params, masks, frame_at(frames_norm, t - 1),
                                      frame_at(frames_norm, t), nullptr);
        total += weighted_mae_loss(reshape(pred, Shape{1, c, h, w}),
                                   reshape(frame_at(frames_norm, t + 1), Shape{1, c, h, w}),
                                   lat_weights)
                     .item();
    }
    return total / static_cast<double>(end - begin);
}

template <class T>
double persistence_wlmae(const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                         int64_t begin, int64_t end) {
    if (frames_norm.rank() != 4) throw ShapeError("persistence_wlmae: need [N,C,H,W]");
    const int64_t n = frames_norm.extent(0);
    if (begin < 1 || end > n - 1 || begin >= end)
        throw ConfigError("persistence_wlmae: invalid range");
    const int64_t c = frames_norm.extent(1), h = frames_norm.extent(2), w = frames_norm.extent(3);
    double total = 0.0;
    for (int64_t t = begin; t < end; ++t)
        total += weighted_mae_loss(reshape(frame_at(frames_norm, t), Shape{1, c, h, w}),
                                   reshape(frame_at(frames_norm, t + 1), Shape{1, c, h, w}),
                                   lat_weights)
                     .item();
    return total / static_cast<double>(end - begin);
}

#define SEARTH_INSTANTIATE_TRAINING(T)                                                            \
    template Tensor<T> frame_at<T>(const Tensor<T>&, int64_t);                                    \
    template Tensor<T> weighted_mae_loss<T>(const Tensor<T>&, const Tensor<T>&,                   \
                                            const std::vector<double>&);                          \
    template struct Optimizer<T>;                                                                 \
    template std::vector<std::vector<T>> collect_grads<T>(                                        \
        const GradMap<T>&, const std::vector<std::pair<std::string, Tensor<T>*>>&);               \
    template void adamw_step<T>(const std::vector<std::pair<std::string, Tensor<T>*>>&,           \
                                const std::vector<std::vector<T>>&, Optimizer<T>&, double);       \
    template TrainStats pretrain<T>(ModelParams<T>&, Optimizer<T>&, const ModelMasks&,            \
                                    const Tensor<T>&, const std::vector<double>&,                 \
                                    const TrainConfig&);                                          \
    template TrainStats finetune_rar<T>(ModelParams<T>&, Optimizer<T>&, const ModelMasks&,        \
                                        const Tensor<T>&, const std::vector<double>&, int64_t,    \
                                        int64_t, const TrainConfig&, const StageGradObserver<T>*); \
    template TrainStats finetune_ar<T>(ModelParams<T>&, Optimizer<T>&, const ModelMasks&,         \
                                       const Tensor<T>&, const std::vector<double>&, int64_t,     \
                                       const TrainConfig&);                                       \
    template double one_step_wlmae<T>(ModelParams<T>&, const ModelMasks&, const Tensor<T>&,       \
                                      const std::vector<double>&, int64_t, int64_t);              \
    template double persistence_wlmae<T>(const Tensor<T>&, const std::vector<double>&, int64_t,   \
                                         int64_t);

SEARTH_INSTANTIATE_TRAINING(float)
SEARTH_INSTANTIATE_TRAINING(double)

}  // namespace searth
