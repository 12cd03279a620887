#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "searth/model.hpp"

namespace searth {

struct TrainConfig {
    std::string mode = "pretrain";  // pretrain | ar | rar
    int64_t batch = 1;
    int64_t iterations = 0;
    int64_t start_iteration = 0;  // resume point; RNG streams are keyed by absolute iteration
    int64_t lr_schedule_total = 0;  // cosine horizon; 0 means `iterations`
    double lr_initial = 2.5e-4;
    double lr_final = 1e-7;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    double droppath = -1.0;  // >= 0 re-ramps stochastic depth for this phase; -1 keeps model rates
    int64_t rollout_k = 4;   // steps per sub-stage (AR uses this as n with rollout_m = 1)
    int64_t rollout_m = 1;
    bool update_per_sequence = false;  // defer to one optimizer update per full sequence
    uint64_t seed = 0;

    void validate() const;
};

struct LossRow {
    int64_t iter = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainStats {
    std::vector<LossRow> log;  // one row per optimizer update
    int64_t peak_live_nodes = 0;
};

// CSV with header iter,lr,loss.
void write_loss_csv(std::ostream& os, const std::vector<LossRow>& rows);

// Latitude-weighted mean absolute error over a forecast block [T,C,H,W] or
// [B,T,C,H,W]: sum of L_i-weighted absolute errors divided by B*T*C*H*W.
template <class T>
Tensor<T> weighted_mae_loss(const Tensor<T>& pred, const Tensor<T>& target,
                            const std::vector<double>& lat_weights);

// lr_min + 0.5*(lr0 - lr_min)*(1 + cos(pi * iter/total)).
double cosine_lr(int64_t iter, int64_t total_iters, double lr0, double lr_min);

// AdamW moments, aligned with the named_tensors order of the model.
template <class T>
struct Optimizer {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    double eps = 1e-8;
    int64_t step_count = 0;
    std::vector<std::vector<T>> m, v;

    void init(ModelParams<T>& params);
    bool initialized() const { return !m.empty(); }
};

// Gradients as raw buffers aligned with the registry order; zeros where the
// loss did not reach a parameter.
template <class T>
std::vector<std::vector<T>> collect_grads(
    const GradMap<T>& gm, const std::vector<std::pair<std::string, Tensor<T>*>>& registry);

// Decoupled weight decay first, then the bias-corrected moment update.
// Rejects non-finite gradients before touching any parameter.
template <class T>
void adamw_step(const std::vector<std::pair<std::string, Tensor<T>*>>& registry,
                const std::vector<std::vector<T>>& grads, Optimizer<T>& opt, double lr);

// Called after each optimizer-step-sized gradient is available inside
// finetune_rar: (update index, sub-stage, per-parameter gradients, stage loss).
template <class T>
using StageGradObserver =
    std::function<void(int64_t, int64_t, const std::vector<std::vector<T>>&, double)>;

// Single-step forecast training under the cosine schedule. frames_norm is a
// normalized [N,C,H,W] sequence; samples are drawn by seeded stream, so runs
// and resumes are bit-reproducible.
template <class T>
TrainStats pretrain(ModelParams<T>& params, Optimizer<T>& opt, const ModelMasks& masks,
                    const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                    const TrainConfig& tc);

// Relay fine-tuning: M sub-stages of k autoregressive steps each. Every
// sub-stage accumulates its own loss, runs backward, updates, then relays the
// last two predictions forward as constants for the next sub-stage.
template <class T>
TrainStats finetune_rar(ModelParams<T>& params, Optimizer<T>& opt, const ModelMasks& masks,
                        const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                        int64_t k, int64_t m_stages, const TrainConfig& tc,
                        const StageGradObserver<T>* observer = nullptr);

// Classical autoregressive fine-tuning: one n-step rollout on a single graph
// per sample. Exactly the M=1 relay schedule.
template <class T>
TrainStats finetune_ar(ModelParams<T>& params, Optimizer<T>& opt, const ModelMasks& masks,
                       const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                       int64_t n_steps, const TrainConfig& tc);

// Mean one-step loss over triples (t-1, t, t+1) for t in [begin, end),
// inference mode; and the same quantity for the persistence forecast.
template <class T>
double one_step_wlmae(ModelParams<T>& params, const ModelMasks& masks,
                      const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                      int64_t begin, int64_t end);
template <class T>
double persistence_wlmae(const Tensor<T>& frames_norm, const std::vector<double>& lat_weights,
                         int64_t begin, int64_t end);

// [C,H,W] view-copy of frame i of an [N,C,H,W] sequence.
template <class T>
Tensor<T> frame_at(const Tensor<T>& frames, int64_t i);

}  // namespace searth
