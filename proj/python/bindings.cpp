#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "searth/checkpoint.hpp"
#include "searth/data.hpp"
#include "searth/evaluation.hpp"
#include "searth/geometry.hpp"

namespace py = pybind11;
using namespace searth;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const DArray& a) {
    Shape s;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) s.push_back(a.shape(i));
    Tensor<double> t(s);
    std::memcpy(t.data(), a.data(), static_cast<size_t>(a.size()) * sizeof(double));
    return t;
}

py::array_t<double> to_numpy(const Tensor<double>& t) {
    std::vector<py::ssize_t> dims(t.shape().begin(), t.shape().end());
    py::array_t<double> a(dims);
    std::memcpy(a.mutable_data(), t.values().data(),
                static_cast<size_t>(t.size()) * sizeof(double));
    return a;
}

ModelConfig config_from_dict(const py::dict& d) {
    ModelConfig cfg = ModelConfig::toy();
    for (auto item : d) {
        const std::string key = py::cast<std::string>(item.first);
        if (key == "n_channels") cfg.n_channels = py::cast<int64_t>(item.second);
        else if (key == "n_lat") cfg.n_lat = py::cast<int64_t>(item.second);
        else if (key == "n_lon") cfg.n_lon = py::cast<int64_t>(item.second);
        else if (key == "embed_dim") cfg.embed_dim = py::cast<int64_t>(item.second);
        else if (key == "win_h") cfg.win_h = py::cast<int64_t>(item.second);
        else if (key == "win_w") cfg.win_w = py::cast<int64_t>(item.second);
        else if (key == "heads_encoder") cfg.heads_encoder = py::cast<int64_t>(item.second);
        else if (key == "heads_core") cfg.heads_core = py::cast<int64_t>(item.second);
        else if (key == "heads_decoder") cfg.heads_decoder = py::cast<int64_t>(item.second);
        else if (key == "encoder_blocks") cfg.encoder_blocks = py::cast<int64_t>(item.second);
        else if (key == "core_blocks") cfg.core_blocks = py::cast<int64_t>(item.second);
        else if (key == "decoder_blocks") cfg.decoder_blocks = py::cast<int64_t>(item.second);
        else if (key == "droppath") cfg.droppath = py::cast<double>(item.second);
        else if (key == "mode") cfg.mode = mask_mode_from_string(py::cast<std::string>(item.second));
        else throw ConfigError("unknown model config key: " + key);
    }
    cfg.precision = "f64";  // python surface works in float64 throughout
    cfg.validate();
    return cfg;
}

// Owns a double-precision model plus its masks and optimizer: the python
// surface for the library's main operations.
struct Model {
    ModelConfig cfg;
    ModelParams<double> params;
    ModelMasks masks;
    Optimizer<double> opt;

    Model(const py::dict& overrides, uint64_t seed) : cfg(config_from_dict(overrides)) {
        Rng rng(seed);
        params = init_model_params<double>(cfg, rng);
        masks = build_masks(cfg);
    }

    explicit Model(const std::string& path) {
        params = checkpoint_load<double>(path, &opt);
        cfg = params.cfg;
        masks = build_masks(cfg);
    }

    int64_t parameter_count_() { return parameter_count(params); }

    void set_channel_stats(const std::vector<double>& mean, const std::vector<double>& std_dev) {
        if (static_cast<int64_t>(mean.size()) != cfg.n_channels ||
            static_cast<int64_t>(std_dev.size()) != cfg.n_channels)
            throw ConfigError("channel stats must have one entry per channel");
        params.channel_mean = mean;
        params.channel_std = std_dev;
    }

    // physical units in, physical units out
    py::array_t<double> step(const DArray& x_prev, const DArray& x_curr) {
        Tensor<double> xp = normalize_channels(to_tensor(x_prev), params.channel_mean,
                                               params.channel_std);
        Tensor<double> xc = normalize_channels(to_tensor(x_curr), params.channel_mean,
                                               params.channel_std);
        Tensor<double> pred = forward_step(params, masks, xp, xc, nullptr);
        return to_numpy(denormalize_channels(pred, params.channel_mean, params.channel_std));
    }

    std::vector<double> fit(const std::string& mode, const DArray& frames_phys,
                            int64_t iterations, uint64_t seed, double lr_initial, double lr_final,
                            int64_t k, int64_t stages) {
        Tensor<double> raw = to_tensor(frames_phys);
        if (raw.rank() != 4) throw ShapeError("fit: frames must be [N,C,H,W]");
        if (params.channel_mean.empty() ||
            (params.channel_mean.size() == 1 && cfg.n_channels != 1)) {
            auto [mean, sd] = channel_stats(raw, 0, raw.extent(0));
            params.channel_mean = mean;
            params.channel_std = sd;
        }
        Tensor<double> frames =
            normalize_channels(raw, params.channel_mean, params.channel_std);
        const std::vector<double> lat_w =
            latitude_weights(LatLonGrid::centered(cfg.n_lat, cfg.n_lon).latitudes);
        TrainConfig tc;
        tc.mode = mode;
        tc.iterations = iterations;
        tc.seed = seed;
        tc.lr_initial = lr_initial;
        tc.lr_final = lr_final;
        tc.rollout_k = k;
        tc.rollout_m = stages;
        TrainStats stats;
        if (mode == "pretrain")
            stats = pretrain(params, opt, masks, frames, lat_w, tc);
        else if (mode == "ar")
            stats = finetune_ar(params, opt, masks, frames, lat_w, k, tc);
        else if (mode == "rar")
            stats = finetune_rar(params, opt, masks, frames, lat_w, k, stages, tc);
        else
            throw ConfigError("fit: mode must be pretrain|ar|rar");
        std::vector<double> losses;
        for (const auto& row : stats.log) losses.push_back(row.loss);
        return losses;
    }

    py::list evaluate(const DArray& frames_phys, int64_t max_lead_steps, int64_t t0_stride) {
        Tensor<double> raw = to_tensor(frames_phys);
        std::vector<std::string> names;
        for (int64_t c = 0; c < cfg.n_channels; ++c) names.push_back("var" + std::to_string(c));
        const MetricsTable table =
            evaluate_forecasts(params, masks, raw, LatLonGrid::centered(cfg.n_lat, cfg.n_lon),
                               names, max_lead_steps, t0_stride, kHoursPerStep);
        py::list rows;
        for (const auto& r : table.rows) {
            py::dict d;
            d["variable"] = r.variable;
            d["lead_hours"] = r.lead_hours;
            d["rmse"] = r.rmse;
            d["acc"] = r.acc;
            rows.append(d);
        }
        return rows;
    }

    void save(const std::string& path) { checkpoint_save(path, params, &opt, 0); }
};

}  // namespace

PYBIND11_MODULE(_searth, m) {
    m.doc() = "earth-topology windowed-attention forecasting core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("latitude_weights", &latitude_weights, py::arg("latitudes"),
          "area weights proportional to cos(latitude), normalized to mean 1");

    m.def(
        "grid_latitudes",
        [](int64_t n_lat, int64_t n_lon) { return LatLonGrid::centered(n_lat, n_lon).latitudes; },
        py::arg("n_lat"), py::arg("n_lon"), "cell-centered latitudes, pole-free");

    m.def(
        "attention_mask",
        [](int64_t h, int64_t w, int64_t win, int64_t shift, const std::string& mode) {
            const AttentionMask mask =
                earth_attention_mask(h, w, win, win, shift, shift, mask_mode_from_string(mode));
            py::array_t<double> a({mask.num_windows, mask.tokens, mask.tokens});
            double* p = a.mutable_data();
            for (int64_t i = 0; i < mask.num_windows * mask.tokens * mask.tokens; ++i)
                p[i] = mask.blocked[static_cast<size_t>(i)] ? kAttentionBlock : 0.0;
            return a;
        },
        py::arg("h"), py::arg("w"), py::arg("win"), py::arg("shift"), py::arg("mode") = "earth",
        "additive attention mask [windows, tokens, tokens] of {0, -1e9}");

    m.def(
        "gen_synthetic",
        [](int64_t n_lat, int64_t n_lon, int64_t channels, int64_t steps, uint64_t seed,
           int64_t waves, double noise) {
            SynthConfig sc;
            sc.n_lat = n_lat;
            sc.n_lon = n_lon;
            sc.channels = channels;
            sc.steps = steps;
            sc.seed = seed;
            sc.wave_count = waves;
            sc.noise_amplitude = noise;
            return to_numpy(gen_synthetic(sc).frames);
        },
        py::arg("n_lat") = 16, py::arg("n_lon") = 32, py::arg("channels") = 4,
        py::arg("steps") = 64, py::arg("seed") = 0, py::arg("waves") = 3,
        py::arg("noise") = 0.05, "travelling-wave frames [N,C,H,W], physical units");

    m.def(
        "regrid_quarter_to_one",
        [](const DArray& field) { return to_numpy(regrid_quarter_to_one(to_tensor(field))); },
        py::arg("field"), "block-average [*,721,1440] onto the 180x360 grid");

    m.def(
        "weighted_mae",
        [](const DArray& pred, const DArray& target, const std::vector<double>& lat_weights) {
            return weighted_mae_loss(to_tensor(pred), to_tensor(target), lat_weights).item();
        },
        py::arg("pred"), py::arg("target"), py::arg("lat_weights"));

    m.def("normalized_diff",
          [](double a, double b, const std::string& kind) {
              if (kind == "rmse") return normalized_diff(a, b, MetricKind::rmse);
              if (kind == "acc") return normalized_diff(a, b, MetricKind::acc);
              throw ConfigError("kind must be rmse|acc");
          },
          py::arg("metric_a"), py::arg("metric_b"), py::arg("kind"));

    m.def(
        "skillful_lead_time",
        [](const std::vector<std::pair<double, double>>& curve, double threshold) {
            const LeadTime lt = skillful_lead_time(curve, threshold);
            return py::make_tuple(lt.value, lt.censored);
        },
        py::arg("acc_by_lead"), py::arg("threshold") = 0.6,
        "(lead, censored) of the first downward threshold crossing");

    py::class_<Model>(m, "Model")
        .def(py::init<const py::dict&, uint64_t>(), py::arg("config") = py::dict(),
             py::arg("seed") = 0)
        .def_static("load", [](const std::string& path) { return new Model(path); },
                    py::arg("path"))
        .def_property_readonly("parameter_count", &Model::parameter_count_)
        .def("set_channel_stats", &Model::set_channel_stats, py::arg("mean"), py::arg("std"))
        .def("step", &Model::step, py::arg("x_prev"), py::arg("x_curr"),
             "one 6-hour forecast step in physical units")
        .def("fit", &Model::fit, py::arg("mode"), py::arg("frames"), py::arg("iterations"),
             py::arg("seed") = 0, py::arg("lr_initial") = 2.5e-4, py::arg("lr_final") = 1e-7,
             py::arg("k") = 4, py::arg("stages") = 1, "returns one loss per optimizer update")
        .def("evaluate", &Model::evaluate, py::arg("frames"), py::arg("max_lead_steps"),
             py::arg("t0_stride") = 1)
        .def("save", &Model::save, py::arg("path"));
}
