#include "searth/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "searth/common.hpp"
#include "searth/gt1.hpp"

namespace searth {

void SynthConfig::validate() const {
    if (n_lat < 4 || n_lat % 4 != 0 || n_lon < 4 || n_lon % 4 != 0)
        throw ConfigError("synthetic grid extents must be multiples of 4 and at least 4");
    if (channels < 1) throw ConfigError("synthetic channels must be >= 1");
    if (steps < 1) throw ConfigError("synthetic steps must be >= 1");
    if (waves.empty() && wave_count < 1)
        throw ConfigError("synthetic wave count must be >= 1");
    for (const auto& wv : waves) {
        if (2 * std::abs(static_cast<int64_t>(wv.m)) > n_lon)
            throw ConfigError("zonal wavenumber " + std::to_string(wv.m) +
                              " is unresolvable on " + std::to_string(n_lon) + " longitudes");
        if (wv.sigma <= 0.0) throw ConfigError("wave envelope width must be positive");
    }
    if (noise_amplitude < 0.0) throw ConfigError("noise amplitude must be >= 0");
    if (noise_decorrelation < 0.0 || noise_decorrelation >= 1.0)
        throw ConfigError("noise decorrelation must lie in [0,1)");
}

namespace {

std::vector<SynthWave> draw_wave_bank(Rng& rng, int64_t channel, int64_t count, int64_t n_lon) {
    RngStream st = rng.stream("waves", static_cast<uint64_t>(channel));
    std::vector<SynthWave> bank;
    const int max_m = static_cast<int>(std::min<int64_t>(4, n_lon / 2));
    for (int64_t k = 0; k < count; ++k) {
        SynthWave wv;
        wv.m = 1 + static_cast<int>(st.below(static_cast<uint64_t>(max_m)));
        wv.sigma = 0.3 + 0.6 * st.uniform();
        wv.omega = 0.1 + 0.5 * st.uniform();
        wv.amplitude = 0.5 + st.uniform();
        wv.phase = 2.0 * M_PI * st.uniform();
        bank.push_back(wv);
    }
    return bank;
}

}  // namespace

Dataset gen_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const int64_t n = cfg.steps, c_count = cfg.channels, h = cfg.n_lat, w = cfg.n_lon;
    Dataset ds;
    ds.grid = LatLonGrid::centered(h, w);
    ds.frames = Tensor<double>(Shape{n, c_count, h, w});
    double* out = ds.frames.data();
    Rng rng(cfg.seed);

    for (int64_t c = 0; c < c_count; ++c) {
        const std::vector<SynthWave> bank =
            cfg.waves.empty() ? draw_wave_bank(rng, c, cfg.wave_count, w) : cfg.waves;
        // wave part: envelope and zonal phase are fixed per cell, only the
        // temporal phase advances
        parallel_for(h * w, [&](int64_t lo, int64_t hi) {
            for (int64_t cell = lo; cell < hi; ++cell) {
                const int64_t i = cell / w, j = cell % w;
                const double theta =
                    ds.grid.latitudes[static_cast<size_t>(i)] * M_PI / 180.0;
                const double lambda =
                    2.0 * M_PI * static_cast<double>(j) / static_cast<double>(w);
                for (int64_t t = 0; t < n; ++t) {
                    double v = 0.0;
                    for (const auto& wv : bank) {
                        const double env = std::exp(-(theta / wv.sigma) * (theta / wv.sigma));
                        v += wv.amplitude * env *
                             std::cos(wv.m * lambda - wv.omega * static_cast<double>(t) +
                                      wv.phase);
                    }
                    out[((t * c_count + c) * h + i) * w + j] = v;
                }
            }
        });
        if (cfg.noise_amplitude > 0.0) {
            const double rho = cfg.noise_decorrelation;
            const double innov = cfg.noise_amplitude * std::sqrt(1.0 - rho * rho);
            for (int64_t cell = 0; cell < h * w; ++cell) {
                RngStream st = rng.stream("noise", static_cast<uint64_t>(c),
                                          static_cast<uint64_t>(cell));
                double r = cfg.noise_amplitude * st.normal();
                const int64_t i = cell / w, j = cell % w;
                for (int64_t t = 0; t < n; ++t) {
                    out[((t * c_count + c) * h + i) * w + j] += r;
                    r = rho * r + innov * st.normal();
                }
            }
        }
        ds.var_names.push_back("var" + std::to_string(c));
    }
    std::tie(ds.channel_mean, ds.channel_std) = channel_stats(ds.frames, 0, n);
    return ds;
}

namespace {

std::string frame_name(int64_t t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%06lld.gt1", static_cast<long long>(t));
    return buf;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds, const SynthConfig* synth_echo) {
    if (ds.frames.rank() != 4) throw ShapeError("save_dataset: need frames [N,C,H,W]");
    const int64_t n = ds.frames.extent(0), c = ds.frames.extent(1);
    const int64_t h = ds.frames.extent(2), w = ds.frames.extent(3);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(IoCode::open_failed, "save_dataset: cannot create " + dir);

    const double* f = ds.frames.values().data();
    for (int64_t t = 0; t < n; ++t) {
        Gt1Tensor g;
        g.dtype = Gt1Dtype::f64;
        g.dims = {c, h, w};
        g.f64.assign(f + t * c * h * w, f + (t + 1) * c * h * w);
        gt1_write(dir + "/" + frame_name(t), g);
    }

    nlohmann::ordered_json j;
    j["format"] = "searth-dataset";
    j["version"] = 1;
    j["steps"] = n;
    j["channels"] = c;
    j["n_lat"] = h;
    j["n_lon"] = w;
    j["hours_per_step"] = kHoursPerStep;
    j["channel_mean"] = ds.channel_mean;
    j["channel_std"] = ds.channel_std;
    j["var_names"] = ds.var_names;
    if (synth_echo) {
        nlohmann::ordered_json s;
        s["seed"] = synth_echo->seed;
        s["wave_count"] = synth_echo->wave_count;
        s["noise_amplitude"] = synth_echo->noise_amplitude;
        s["noise_decorrelation"] = synth_echo->noise_decorrelation;
        nlohmann::ordered_json waves = nlohmann::ordered_json::array();
        for (const auto& wv : synth_echo->waves) {
            nlohmann::ordered_json e;
            e["m"] = wv.m;
            e["sigma"] = wv.sigma;
            e["omega"] = wv.omega;
            e["amplitude"] = wv.amplitude;
            e["phase"] = wv.phase;
            waves.push_back(e);
        }
        s["waves"] = waves;
        j["synthetic"] = s;
    }
    std::ofstream os(dir + "/manifest.json", std::ios::trunc);
    if (!os) throw IoError(IoCode::open_failed, "save_dataset: cannot open manifest in " + dir);
    os << j.dump(2) << '\n';
    os.flush();
    if (!os) throw IoError(IoCode::malformed, "save_dataset: manifest write failed");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw IoError(IoCode::open_failed, "load_dataset: cannot open " + dir + "/manifest.json");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::malformed, "load_dataset: bad manifest: " + std::string(e.what()));
    }
    if (j.value("format", "") != "searth-dataset")
        throw IoError(IoCode::bad_magic, "load_dataset: not a dataset manifest");
    if (j.value("version", -1) != 1)
        throw IoError(IoCode::bad_version, "load_dataset: unsupported manifest version");
    Dataset ds;
    int64_t n, c, h, w;
    try {
        n = j.at("steps").get<int64_t>();
        c = j.at("channels").get<int64_t>();
        h = j.at("n_lat").get<int64_t>();
        w = j.at("n_lon").get<int64_t>();
        ds.channel_mean = j.at("channel_mean").get<std::vector<double>>();
        ds.channel_std = j.at("channel_std").get<std::vector<double>>();
        ds.var_names = j.at("var_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(IoCode::malformed, "load_dataset: bad manifest field: " + std::string(e.what()));
    }
    if (n < 1 || c < 1 || h < 1 || w < 1 ||
        static_cast<int64_t>(ds.channel_mean.size()) != c ||
        static_cast<int64_t>(ds.channel_std.size()) != c ||
        static_cast<int64_t>(ds.var_names.size()) != c)
        throw IoError(IoCode::malformed, "load_dataset: inconsistent manifest dimensions");
    ds.grid = LatLonGrid::centered(h, w);
    ds.frames = Tensor<double>(Shape{n, c, h, w});
    double* out = ds.frames.data();
    for (int64_t t = 0; t < n; ++t) {
        const Gt1Tensor g = gt1_read(dir + "/" + frame_name(t));
        if (g.dtype != Gt1Dtype::f64 || g.dims != Shape{c, h, w})
            throw IoError(IoCode::malformed, "load_dataset: " + frame_name(t) +
                                                 " does not match the manifest");
        std::memcpy(out + t * c * h * w, g.f64.data(), g.f64.size() * sizeof(double));
    }
    return ds;
}

std::pair<std::vector<double>, std::vector<double>> channel_stats(const Tensor<double>& frames,
                                                                  int64_t begin, int64_t end) {
    if (frames.rank() != 4) throw ShapeError("channel_stats: need [N,C,H,W]");
    if (begin < 0 || end > frames.extent(0) || begin >= end)
        throw ConfigError("channel_stats: invalid frame range");
    const int64_t c_count = frames.extent(1), plane = frames.extent(2) * frames.extent(3);
    const double* f = frames.values().data();
    std::vector<double> mean(static_cast<size_t>(c_count), 0.0);
    std::vector<double> std_dev(static_cast<size_t>(c_count), 0.0);
    const double count = static_cast<double>((end - begin) * plane);
    for (int64_t c = 0; c < c_count; ++c) {
        double s = 0.0;
        for (int64_t t = begin; t < end; ++t) {
            const double* p = f + (t * c_count + c) * plane;
            for (int64_t j = 0; j < plane; ++j) s += p[j];
        }
        const double mu = s / count;
        double sq = 0.0;
        for (int64_t t = begin; t < end; ++t) {
            const double* p = f + (t * c_count + c) * plane;
            for (int64_t j = 0; j < plane; ++j) sq += (p[j] - mu) * (p[j] - mu);
        }
        mean[static_cast<size_t>(c)] = mu;
        std_dev[static_cast<size_t>(c)] = std::sqrt(sq / count);
    }
    return {mean, std_dev};
}

}  // namespace searth
