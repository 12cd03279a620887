#include "searth/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "searth/gt1.hpp"

namespace searth {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kFormatName = "searth-checkpoint";
constexpr int kFormatVersion = 1;

ordered_json config_to_json(const ModelConfig& cfg) {
    ordered_json j;
    j["n_channels"] = cfg.n_channels;
    j["n_lat"] = cfg.n_lat;
    j["n_lon"] = cfg.n_lon;
    j["embed_dim"] = cfg.embed_dim;
    j["win_h"] = cfg.win_h;
    j["win_w"] = cfg.win_w;
    j["heads_encoder"] = cfg.heads_encoder;
    j["heads_core"] = cfg.heads_core;
    j["heads_decoder"] = cfg.heads_decoder;
    j["encoder_blocks"] = cfg.encoder_blocks;
    j["core_blocks"] = cfg.core_blocks;
    j["decoder_blocks"] = cfg.decoder_blocks;
    j["droppath"] = cfg.droppath;
    j["mode"] = mask_mode_name(cfg.mode);
    j["precision"] = cfg.precision;
    return j;
}

ModelConfig config_from_json(const ordered_json& j) {
    ModelConfig cfg;
    cfg.n_channels = j.at("n_channels").get<int64_t>();
    cfg.n_lat = j.at("n_lat").get<int64_t>();
    cfg.n_lon = j.at("n_lon").get<int64_t>();
    cfg.embed_dim = j.at("embed_dim").get<int64_t>();
    cfg.win_h = j.at("win_h").get<int64_t>();
    cfg.win_w = j.at("win_w").get<int64_t>();
    cfg.heads_encoder = j.at("heads_encoder").get<int64_t>();
    cfg.heads_core = j.at("heads_core").get<int64_t>();
    cfg.heads_decoder = j.at("heads_decoder").get<int64_t>();
    cfg.encoder_blocks = j.at("encoder_blocks").get<int64_t>();
    cfg.core_blocks = j.at("core_blocks").get<int64_t>();
    cfg.decoder_blocks = j.at("decoder_blocks").get<int64_t>();
    cfg.droppath = j.at("droppath").get<double>();
    cfg.mode = mask_mode_from_string(j.at("mode").get<std::string>());
    cfg.precision = j.at("precision").get<std::string>();
    cfg.validate();
    return cfg;
}

ordered_json read_sidecar(const std::string& path) {
    std::ifstream is(path + ".json");
    if (!is) throw IoError(IoCode::open_failed, "checkpoint: cannot open " + path + ".json");
    ordered_json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::malformed, "checkpoint: bad sidecar JSON: " + std::string(e.what()));
    }
    if (j.value("format", "") != kFormatName)
        throw IoError(IoCode::bad_magic, "checkpoint: not a " + std::string(kFormatName) + " sidecar");
    if (j.value("version", -1) != kFormatVersion)
        throw IoError(IoCode::bad_version, "checkpoint: unsupported sidecar version");
    return j;
}

template <class T>
Gt1Tensor moment_tensor(const Shape& dims, const std::vector<T>& values) {
    Gt1Tensor g;
    g.dims = dims;
    if constexpr (std::is_same_v<T, float>) {
        g.dtype = Gt1Dtype::f32;
        g.f32 = values;
    } else {
        g.dtype = Gt1Dtype::f64;
        g.f64 = values;
    }
    return g;
}

template <class T>
void fill_from_entry(Tensor<T>& t, const Gt1Tensor& g, const std::string& name) {
    if (g.dims != t.shape())
        throw ConfigError("checkpoint: tensor " + name + " has shape " + shape_str(g.dims) +
                          ", expected " + shape_str(t.shape()));
    Tensor<T> loaded = g.template to<T>();
    std::memcpy(t.data(), loaded.values().data(),
                static_cast<size_t>(t.size()) * sizeof(T));
}

template <class T>
std::vector<T> entry_values(const Gt1Tensor& g, const std::string& name, int64_t want) {
    if (g.element_count() != want)
        throw ConfigError("checkpoint: tensor " + name + " holds " +
                          std::to_string(g.element_count()) + " values, expected " +
                          std::to_string(want));
    if constexpr (std::is_same_v<T, float>) {
        if (g.dtype != Gt1Dtype::f32)
            throw ConfigError("checkpoint: tensor " + name + " has the wrong element type");
        return g.f32;
    } else {
        if (g.dtype != Gt1Dtype::f64)
            throw ConfigError("checkpoint: tensor " + name + " has the wrong element type");
        return g.f64;
    }
}

}  // namespace

template <class T>
void checkpoint_save(const std::string& path, ModelParams<T>& params, const Optimizer<T>* opt,
                     int64_t iteration) {
    constexpr const char* want = std::is_same_v<T, float> ? "f32" : "f64";
    if (params.cfg.precision != want)
        throw ConfigError("checkpoint: params precision '" + params.cfg.precision +
                          "' does not match element type " + want);
    auto registry = named_tensors(params);
    std::vector<std::pair<std::string, Gt1Tensor>> entries;
    for (auto& [name, t] : registry) entries.emplace_back(name, Gt1Tensor::from(*t));
    if (opt) {
        if (opt->m.size() != registry.size())
            throw ConfigError("checkpoint: optimizer state does not match the parameter set");
        for (size_t i = 0; i < registry.size(); ++i) {
            entries.emplace_back("optm/" + registry[i].first,
                                 moment_tensor(registry[i].second->shape(), opt->m[i]));
            entries.emplace_back("optv/" + registry[i].first,
                                 moment_tensor(registry[i].second->shape(), opt->v[i]));
        }
    }
    gt1_write_archive(path, entries);

    ordered_json j;
    j["format"] = kFormatName;
    j["version"] = kFormatVersion;
    j["iteration"] = iteration;
    j["model"] = config_to_json(params.cfg);
    j["channel_mean"] = params.channel_mean;
    j["channel_std"] = params.channel_std;
    if (opt) {
        ordered_json o;
        o["step_count"] = opt->step_count;
        o["beta1"] = opt->beta1;
        o["beta2"] = opt->beta2;
        o["weight_decay"] = opt->weight_decay;
        o["eps"] = opt->eps;
        j["optimizer"] = o;
    } else {
        j["optimizer"] = nullptr;
    }
    std::ofstream os(path + ".json", std::ios::trunc);
    if (!os) throw IoError(IoCode::open_failed, "checkpoint: cannot open " + path + ".json");
    os << j.dump(2) << '\n';
    os.flush();
    if (!os) throw IoError(IoCode::malformed, "checkpoint: write to " + path + ".json failed");
}

ModelConfig checkpoint_peek_config(const std::string& path) {
    const ordered_json j = read_sidecar(path);
    try {
        return config_from_json(j.at("model"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::malformed, "checkpoint: bad model config: " + std::string(e.what()));
    }
}

template <class T>
ModelParams<T> checkpoint_load(const std::string& path, Optimizer<T>* opt, int64_t* iteration) {
    const ordered_json j = read_sidecar(path);
    ModelConfig cfg;
    std::vector<double> mean, std_dev;
    int64_t iter = 0;
    bool has_opt_meta = false;
    double b1 = 0, b2 = 0, wd = 0, eps = 0;
    int64_t steps = 0;
    try {
        cfg = config_from_json(j.at("model"));
        mean = j.at("channel_mean").get<std::vector<double>>();
        std_dev = j.at("channel_std").get<std::vector<double>>();
        iter = j.at("iteration").get<int64_t>();
        if (!j.at("optimizer").is_null()) {
            const auto& o = j.at("optimizer");
            has_opt_meta = true;
            steps = o.at("step_count").get<int64_t>();
            b1 = o.at("beta1").get<double>();
            b2 = o.at("beta2").get<double>();
            wd = o.at("weight_decay").get<double>();
            eps = o.at("eps").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::malformed, "checkpoint: bad sidecar field: " + std::string(e.what()));
    }
    constexpr const char* want = std::is_same_v<T, float> ? "f32" : "f64";
    if (cfg.precision != want)
        throw ConfigError("checkpoint: stored precision '" + cfg.precision +
                          "' does not match requested element type " + want);
    if (static_cast<int64_t>(mean.size()) != cfg.n_channels ||
        static_cast<int64_t>(std_dev.size()) != cfg.n_channels)
        throw ConfigError("checkpoint: channel stat length != channel count");

    Rng scratch(0);
    ModelParams<T> params = init_model_params<T>(cfg, scratch);
    params.channel_mean = mean;
    params.channel_std = std_dev;

    std::map<std::string, Gt1Tensor> by_name;
    for (auto& [name, g] : gt1_read_archive(path)) by_name.emplace(std::move(name), std::move(g));

    auto registry = named_tensors(params);
    const bool has_moments = by_name.count("optm/" + registry.front().first) > 0;
    for (auto& [name, t] : registry) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("checkpoint: missing tensor " + name);
        fill_from_entry(*t, it->second, name);
        by_name.erase(it);
    }
    if (opt && has_opt_meta && has_moments) {
        opt->beta1 = b1;
        opt->beta2 = b2;
        opt->weight_decay = wd;
        opt->eps = eps;
        opt->step_count = steps;
        opt->m.clear();
        opt->v.clear();
        for (auto& [name, t] : registry) {
            auto mi = by_name.find("optm/" + name);
            auto vi = by_name.find("optv/" + name);
            if (mi == by_name.end() || vi == by_name.end())
                throw ConfigError("checkpoint: missing optimizer moments for " + name);
            opt->m.push_back(entry_values<T>(mi->second, mi->first, t->size()));
            opt->v.push_back(entry_values<T>(vi->second, vi->first, t->size()));
            by_name.erase(mi);
            by_name.erase(vi);
        }
    } else {
        for (auto& [name, t] : registry) {
            by_name.erase("optm/" + name);
            by_name.erase("optv/" + name);
        }
    }
    if (!by_name.empty())
        throw ConfigError("checkpoint: unexpected tensor " + by_name.begin()->first);
    if (iteration) *iteration = iter;
    return params;
}

template void checkpoint_save<float>(const std::string&, ModelParams<float>&,
                                     const Optimizer<float>*, int64_t);
template void checkpoint_save<double>(const std::string&, ModelParams<double>&,
                                      const Optimizer<double>*, int64_t);
template ModelParams<float> checkpoint_load<float>(const std::string&, Optimizer<float>*,
                                                   int64_t*);
template ModelParams<double> checkpoint_load<double>(const std::string&, Optimizer<double>*,
                                                     int64_t*);

}  // namespace searth
