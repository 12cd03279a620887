#include "searth/evaluation.hpp"

#include <cmath>
#include <iomanip>

#include "searth/training.hpp"

namespace searth {

template <class T>
Tensor<T> compute_climatology(const Tensor<T>& frames) {
    if (frames.rank() != 4) throw ShapeError("compute_climatology: need [N,C,H,W]");
    const int64_t n = frames.extent(0);
    if (n == 0 || frames.size() == 0) throw ConfigError("compute_climatology: empty dataset");
    const int64_t plane = frames.size() / n;
    Tensor<T> out(Shape{frames.extent(1), frames.extent(2), frames.extent(3)});
    T* o = out.data();
    const T* f = frames.values().data();
    for (int64_t j = 0; j < plane; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < n; ++t) acc += static_cast<double>(f[t * plane + j]);
        o[j] = static_cast<T>(acc / static_cast<double>(n));
    }
    return out;
}

namespace {

void check_plane(const Tensor<double>& x, const std::vector<double>& lat_weights,
                 const char* who) {
    if (x.rank() != 2) throw ShapeError(std::string(who) + ": fields must be [H,W]");
    if (x.extent(0) != static_cast<int64_t>(lat_weights.size()))
        throw ShapeError(std::string(who) + ": field rows != latitude weight count");
}

}  // namespace

double rmse(const std::vector<Tensor<double>>& forecasts, const std::vector<Tensor<double>>& truths,
            const std::vector<double>& lat_weights) {
    if (forecasts.empty()) throw ConfigError("rmse: no init times");
    if (forecasts.size() != truths.size())
        throw ShapeError("rmse: forecast/truth count mismatch");
    double total = 0.0;
    for (size_t t = 0; t < forecasts.size(); ++t) {
        check_plane(forecasts[t], lat_weights, "rmse");
        if (forecasts[t].shape() != truths[t].shape()) throw ShapeError("rmse: shape mismatch");
        const int64_t h = forecasts[t].extent(0), w = forecasts[t].extent(1);
        const double* a = forecasts[t].values().data();
        const double* b = truths[t].values().data();
        double sq = 0.0;
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const double d = a[i * w + j] - b[i * w + j];
                sq += lat_weights[static_cast<size_t>(i)] * d * d;
            }
        total += std::sqrt(sq / static_cast<double>(h * w));
    }
    return total / static_cast<double>(forecasts.size());
}

double acc(const std::vector<Tensor<double>>& forecasts, const std::vector<Tensor<double>>& truths,
           const Tensor<double>& clim, const std::vector<double>& lat_weights, int64_t* skipped) {
    if (forecasts.empty()) throw ConfigError("acc: no init times");
    if (forecasts.size() != truths.size()) throw ShapeError("acc: forecast/truth count mismatch");
    check_plane(clim, lat_weights, "acc");
    double total = 0.0;
    int64_t used = 0, dropped = 0;
    for (size_t t = 0; t < forecasts.size(); ++t) {
        check_plane(forecasts[t], lat_weights, "acc");
        if (forecasts[t].shape() != truths[t].shape() || forecasts[t].shape() != clim.shape())
            throw ShapeError("acc: shape mismatch");
        const int64_t h = clim.extent(0), w = clim.extent(1);
        const double* a = forecasts[t].values().data();
        const double* b = truths[t].values().data();
        const double* c = clim.values().data();
        double cross = 0.0, na = 0.0, nb = 0.0;
        for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j) {
                const double li = lat_weights[static_cast<size_t>(i)];
                const double da = a[i * w + j] - c[i * w + j];
                const double db = b[i * w + j] - c[i * w + j];
                cross += li * da * db;
                na += li * da * da;
                nb += li * db * db;
            }
        if (na == 0.0 || nb == 0.0) {
            ++dropped;
            continue;
        }
        total += cross / std::sqrt(na * nb);
        ++used;
    }
    if (skipped) *skipped += dropped;
    if (used == 0) throw NumericError("acc: every init time had a zero-norm anomaly field");
    return total / static_cast<double>(used);
}

double normalized_diff(double metric_a, double metric_b, MetricKind kind) {
    if (kind == MetricKind::rmse) {
        if (metric_b <= 0.0) throw NumericError("normalized_diff: rmse baseline must be positive");
        return (metric_a - metric_b) / metric_b;
    }
    if (metric_b == 1.0) throw NumericError("normalized_diff: acc baseline of 1 has no headroom");
    return (metric_a - metric_b) / (1.0 - metric_b);
}

LeadTime skillful_lead_time(const std::vector<std::pair<double, double>>& acc_by_lead,
                            double threshold) {
    if (acc_by_lead.size() < 2) throw ConfigError("skillful_lead_time: need at least 2 points");
    for (size_t i = 1; i < acc_by_lead.size(); ++i)
        if (acc_by_lead[i].first <= acc_by_lead[i - 1].first)
            throw ConfigError("skillful_lead_time: leads must be strictly increasing");
    if (acc_by_lead.front().second < threshold) return {0.0, false};
    for (size_t i = 1; i < acc_by_lead.size(); ++i) {
        const auto [t0, a0] = acc_by_lead[i - 1];
        const auto [t1, a1] = acc_by_lead[i];
        if (a1 < threshold) return {t0 + (a0 - threshold) / (a0 - a1) * (t1 - t0), false};
    }
    return {acc_by_lead.back().first, true};
}

void write_metrics_csv(std::ostream& os, const MetricsTable& table) {
    os << "variable,lead_hours,rmse,acc\n" << std::setprecision(17);
    for (const auto& r : table.rows)
        os << r.variable << ',' << r.lead_hours << ',' << r.rmse << ',' << r.acc << '\n';
}

void write_diffs_csv(std::ostream& os, const MetricsTable& a, const MetricsTable& b,
                     const std::string& baseline_name) {
    if (a.rows.size() != b.rows.size())
        throw ShapeError("write_diffs_csv: tables have different row counts");
    os << "variable,lead_hours,rmse,acc,baseline\n" << std::setprecision(17);
    for (size_t i = 0; i < a.rows.size(); ++i) {
        const auto& ra = a.rows[i];
        const auto& rb = b.rows[i];
        if (ra.variable != rb.variable || ra.lead_hours != rb.lead_hours)
            throw ShapeError("write_diffs_csv: row mismatch at " + ra.variable);
        os << ra.variable << ',' << ra.lead_hours << ','
           << normalized_diff(ra.rmse, rb.rmse, MetricKind::rmse) << ','
           << normalized_diff(ra.acc, rb.acc, MetricKind::acc) << ',' << baseline_name << '\n';
    }
}

template <class T>
std::vector<Tensor<T>> rollout_forecast(ModelParams<T>& params, const ModelMasks& masks,
                                        const Tensor<T>& x_prev, const Tensor<T>& x_curr,
                                        int64_t steps) {
    if (steps < 1) throw ConfigError("rollout_forecast: steps must be >= 1");
    Tensor<T> cp = x_prev.detach(), cc = x_curr.detach();
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<size_t>(steps));
    for (int64_t j = 0; j < steps; ++j) {
        Tensor<T> next = forward_step(params, masks, cp, cc, nullptr);
        out.push_back(next);
        cp = cc;
        cc = next;
    }
    return out;
}

namespace {

template <class T>
Tensor<double> channel_plane(const Tensor<T>& chw, int64_t c) {
    const int64_t h = chw.extent(1), w = chw.extent(2);
    Tensor<double> out(Shape{h, w});
    const T* src = chw.values().data() + c * h * w;
    double* dst = out.data();
    for (int64_t j = 0; j < h * w; ++j) dst[j] = static_cast<double>(src[j]);
    return out;
}

}  // namespace

template <class T>
MetricsTable evaluate_forecasts(ModelParams<T>& params, const ModelMasks& masks,
                                const Tensor<T>& frames_raw, const LatLonGrid& grid,
                                const std::vector<std::string>& var_names, int64_t max_lead_steps,
                                int64_t t0_stride, double hours_per_step,
                                const Tensor<T>* clim_override) {
    if (frames_raw.rank() != 4) throw ShapeError("evaluate_forecasts: need [N,C,H,W]");
    const int64_t n = frames_raw.extent(0), c_count = frames_raw.extent(1);
    if (static_cast<int64_t>(var_names.size()) != c_count)
        throw ConfigError("evaluate_forecasts: variable-name count != channel count");
    if (frames_raw.extent(2) != grid.n_lat || frames_raw.extent(3) != grid.n_lon)
        throw ShapeError("evaluate_forecasts: frames do not match the grid");
    if (max_lead_steps < 1 || t0_stride < 1 || hours_per_step <= 0.0)
        throw ConfigError("evaluate_forecasts: invalid lead/stride/step settings");
    if (n < max_lead_steps + 2)
        throw ConfigError("evaluate_forecasts: need at least " +
                          std::to_string(max_lead_steps + 2) + " frames");

    const std::vector<double> lat_w = latitude_weights(grid.latitudes);
    Tensor<T> clim;
    if (clim_override) {
        if (clim_override->shape() !=
            Shape{c_count, frames_raw.extent(2), frames_raw.extent(3)})
            throw ShapeError("evaluate_forecasts: climatology shape " +
                             shape_str(clim_override->shape()) + " does not match the frames");
        clim = clim_override->detach();
    } else {
        clim = compute_climatology(frames_raw);
    }
    std::vector<Tensor<double>> clim_planes;
    for (int64_t c = 0; c < c_count; ++c) clim_planes.push_back(channel_plane(clim, c));

    // planes[c][lead-1] holds one [H,W] field per init time
    std::vector<std::vector<std::vector<Tensor<double>>>> fc(static_cast<size_t>(c_count)),
        tr(static_cast<size_t>(c_count));
    for (int64_t c = 0; c < c_count; ++c) {
        fc[static_cast<size_t>(c)].resize(static_cast<size_t>(max_lead_steps));
        tr[static_cast<size_t>(c)].resize(static_cast<size_t>(max_lead_steps));
    }
    int64_t init_times = 0;
    for (int64_t t0 = 1; t0 + max_lead_steps <= n - 1; t0 += t0_stride) {
        Tensor<T> xp = normalize_channels(frame_at(frames_raw, t0 - 1), params.channel_mean,
                                          params.channel_std);
        Tensor<T> xc =
            normalize_channels(frame_at(frames_raw, t0), params.channel_mean, params.channel_std);
        std::vector<Tensor<T>> preds = rollout_forecast(params, masks, xp, xc, max_lead_steps);
        for (int64_t lead = 1; lead <= max_lead_steps; ++lead) {
            Tensor<T> phys = denormalize_channels(preds[static_cast<size_t>(lead - 1)],
                                                  params.channel_mean, params.channel_std);
            Tensor<T> truth = frame_at(frames_raw, t0 + lead);
            for (int64_t c = 0; c < c_count; ++c) {
                fc[static_cast<size_t>(c)][static_cast<size_t>(lead - 1)].push_back(
                    channel_plane(phys, c));
                tr[static_cast<size_t>(c)][static_cast<size_t>(lead - 1)].push_back(
                    channel_plane(truth, c));
            }
        }
        ++init_times;
    }
    if (init_times == 0) throw ConfigError("evaluate_forecasts: no valid init times");

    MetricsTable table;
    table.sample_count = init_times;
    for (int64_t c = 0; c < c_count; ++c)
        for (int64_t lead = 1; lead <= max_lead_steps; ++lead) {
            const auto& f = fc[static_cast<size_t>(c)][static_cast<size_t>(lead - 1)];
            const auto& t = tr[static_cast<size_t>(c)][static_cast<size_t>(lead - 1)];
            MetricsRow row;
            row.variable = var_names[static_cast<size_t>(c)];
            row.lead_hours = static_cast<double>(lead) * hours_per_step;
            row.rmse = rmse(f, t, lat_w);
            row.acc = acc(f, t, clim_planes[static_cast<size_t>(c)], lat_w, &table.skipped_acc);
            table.rows.push_back(std::move(row));
        }
    return table;
}

#define SEARTH_INSTANTIATE_EVALUATION(T)                                                       \
    template Tensor<T> compute_climatology<T>(const Tensor<T>&);                               \
    template std::vector<Tensor<T>> rollout_forecast<T>(ModelParams<T>&, const ModelMasks&,    \
                                                        const Tensor<T>&, const Tensor<T>&,    \
                                                        int64_t);                              \
    template MetricsTable evaluate_forecasts<T>(ModelParams<T>&, const ModelMasks&,            \
                                                const Tensor<T>&, const LatLonGrid&,           \
                                                const std::vector<std::string>&, int64_t,      \
                                                int64_t, double, const Tensor<T>*);

SEARTH_INSTANTIATE_EVALUATION(float)
SEARTH_INSTANTIATE_EVALUATION(double)

}  // namespace searth
