#pragma once

#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "searth/geometry.hpp"
#include "searth/model.hpp"

namespace searth {

// Per-cell arithmetic mean over time: [N,C,H,W] -> [C,H,W].
template <class T>
Tensor<T> compute_climatology(const Tensor<T>& frames);

// Mean over init times of the latitude-weighted spatial RMS error. The square
// root sits inside the average, so two init times with weighted RMS 1 and 3
// score 2, not sqrt(5).
double rmse(const std::vector<Tensor<double>>& forecasts, const std::vector<Tensor<double>>& truths,
            const std::vector<double>& lat_weights);

// Mean over init times of the latitude-weighted uncentered correlation between
// forecast and truth anomalies relative to `clim`. Init times where either
// anomaly field has zero norm are skipped and counted in *skipped.
double acc(const std::vector<Tensor<double>>& forecasts, const std::vector<Tensor<double>>& truths,
           const Tensor<double>& clim, const std::vector<double>& lat_weights,
           int64_t* skipped = nullptr);

enum class MetricKind { rmse, acc };

// (A-B)/B for rmse, (A-B)/(1-B) for acc. Negative rmse diff and positive acc
// diff both mean A beats B.
double normalized_diff(double metric_a, double metric_b, MetricKind kind);

struct LeadTime {
    double value = 0.0;  // same unit as the input lead axis
    bool censored = false;
};

// First downward crossing of `threshold` on a curve of (lead, ACC) points with
// strictly increasing leads, linearly interpolated between the bracketing
// samples. Below threshold at the first point -> 0; never below -> final lead,
// censored.
LeadTime skillful_lead_time(const std::vector<std::pair<double, double>>& acc_by_lead,
                            double threshold);

struct MetricsRow {
    std::string variable;
    double lead_hours = 0.0;
    double rmse = 0.0;
    double acc = 0.0;
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
    int64_t sample_count = 0;  // |D|, init times per (variable, lead) cell
    int64_t skipped_acc = 0;   // zero-norm anomaly fields dropped from ACC averages
};

// Columns: variable,lead_hours,rmse,acc
void write_metrics_csv(std::ostream& os, const MetricsTable& table);

// Same rows as `a` with rmse/acc replaced by normalized differences against
// the matching row of `b`; extra trailing `baseline` column.
void write_diffs_csv(std::ostream& os, const MetricsTable& a, const MetricsTable& b,
                     const std::string& baseline_name);

// Pure autoregression in normalized space: each prediction becomes the next
// input. Returns `steps` frames [C,H,W], leads 1..steps.
template <class T>
std::vector<Tensor<T>> rollout_forecast(ModelParams<T>& params, const ModelMasks& masks,
                                        const Tensor<T>& x_prev, const Tensor<T>& x_curr,
                                        int64_t steps);

// Full verification sweep over physical-unit frames [N,C,H,W]: normalizes with
// the model's channel stats, rolls out from every init time t0 in
// {1, 1+t0_stride, ...} with t0+max_lead_steps <= N-1, denormalizes, and scores
// each (variable, lead) cell. Anomalies are taken against `clim_override`
// [C,H,W] when given, else against the time mean of `frames_raw`.
template <class T>
MetricsTable evaluate_forecasts(ModelParams<T>& params, const ModelMasks& masks,
                                const Tensor<T>& frames_raw, const LatLonGrid& grid,
                                const std::vector<std::string>& var_names, int64_t max_lead_steps,
                                int64_t t0_stride, double hours_per_step,
                                const Tensor<T>* clim_override = nullptr);

}  // namespace searth
