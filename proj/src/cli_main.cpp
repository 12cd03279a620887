#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "searth/checkpoint.hpp"
#include "searth/data.hpp"
#include "searth/evaluation.hpp"
#include "searth/gt1.hpp"
#include "searth/plot.hpp"

namespace {

using nlohmann::json;
using namespace searth;

json load_json_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw IoError(IoCode::open_failed, "config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw IoError(IoCode::malformed, "config: bad JSON in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    return j;
}

// flag beats config file beats built-in default
template <class V>
V pick(const CLI::Option* opt, const V& flag_value, const json& j, const char* key) {
    if (opt && opt->count() > 0) return flag_value;
    if (j.contains(key)) {
        try {
            return j.at(key).get<V>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
    return flag_value;
}

void apply_model_json(ModelConfig& mc, const json& j) {
    if (!j.contains("model")) return;
    const json& m = j.at("model");
    auto geti = [&](const char* k, int64_t& dst) {
        if (m.contains(k)) dst = m.at(k).get<int64_t>();
    };
    geti("n_channels", mc.n_channels);
    geti("n_lat", mc.n_lat);
    geti("n_lon", mc.n_lon);
    geti("embed_dim", mc.embed_dim);
    geti("win_h", mc.win_h);
    geti("win_w", mc.win_w);
    geti("heads_encoder", mc.heads_encoder);
    geti("heads_core", mc.heads_core);
    geti("heads_decoder", mc.heads_decoder);
    geti("encoder_blocks", mc.encoder_blocks);
    geti("core_blocks", mc.core_blocks);
    geti("decoder_blocks", mc.decoder_blocks);
    if (m.contains("droppath")) mc.droppath = m.at("droppath").get<double>();
    if (m.contains("mode")) mc.mode = mask_mode_from_string(m.at("mode").get<std::string>());
    if (m.contains("precision")) mc.precision = m.at("precision").get<std::string>();
}

void apply_train_json(TrainConfig& tc, const json& j) {
    if (!j.contains("train")) return;
    const json& t = j.at("train");
    auto geti = [&](const char* k, int64_t& dst) {
        if (t.contains(k)) dst = t.at(k).get<int64_t>();
    };
    auto getd = [&](const char* k, double& dst) {
        if (t.contains(k)) dst = t.at(k).get<double>();
    };
    geti("batch", tc.batch);
    geti("iterations", tc.iterations);
    geti("start_iteration", tc.start_iteration);
    geti("lr_schedule_total", tc.lr_schedule_total);
    getd("lr_initial", tc.lr_initial);
    getd("lr_final", tc.lr_final);
    getd("beta1", tc.beta1);
    getd("beta2", tc.beta2);
    getd("weight_decay", tc.weight_decay);
    getd("droppath", tc.droppath);
    geti("rollout_k", tc.rollout_k);
    geti("rollout_m", tc.rollout_m);
    if (t.contains("update_per_sequence"))
        tc.update_per_sequence = t.at("update_per_sequence").get<bool>();
    if (t.contains("seed")) tc.seed = t.at("seed").get<uint64_t>();
}

bool env_seed(uint64_t* out) {
    const char* s = std::getenv("SEARTH_SEED");
    if (!s || !*s) return false;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw ConfigError("SEARTH_SEED is not an unsigned integer");
    *out = static_cast<uint64_t>(v);
    return true;
}

uint64_t hash_string(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct RunRecord {
    std::string manifest_path;
    std::string cmd;
    json effective;  // echoed settings, hashed into config_hash
    uint64_t seed = 0;
    int64_t peak_live_nodes = 0;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void commit() const {
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        nlohmann::ordered_json r;
        r["cmd"] = cmd;
        r["config_hash"] = hex64(hash_string(effective.dump()));
        r["seed"] = seed;
        r["wall_seconds"] = wall;
        r["peak_live_node_count"] = peak_live_nodes;
        r["outputs"] = outputs;
        const std::filesystem::path parent = std::filesystem::path(manifest_path).parent_path();
        if (!parent.empty()) std::filesystem::create_directories(parent);
        std::ofstream os(manifest_path, std::ios::app);
        if (!os) throw IoError(IoCode::open_failed, "manifest: cannot open " + manifest_path);
        os << r.dump() << '\n';
    }
};

std::pair<int64_t, int64_t> parse_grid(const std::string& s) {
    const size_t x = s.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= s.size())
        throw ConfigError("grid must look like HxW, e.g. 16x32");
    try {
        return {std::stoll(s.substr(0, x)), std::stoll(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw ConfigError("grid must look like HxW, e.g. 16x32");
    }
}

std::vector<double> parse_leads(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ConfigError("leads must be comma-separated hours, got '" + tok + "'");
        }
    }
    if (out.empty()) throw ConfigError("leads: empty list");
    return out;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

void ensure_parent_dir(const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

void write_text_file(const std::string& path, const std::string& content) {
    ensure_parent_dir(path);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError(IoCode::open_failed, "cannot open " + path + " for writing");
    os << content;
    os.flush();
    if (!os) throw IoError(IoCode::malformed, "write to " + path + " failed");
}

// ---- subcommand bodies ----

// The training subcommands share this scaffolding: load data, run a phase,
// persist checkpoint + loss log, record the run.
template <class T>
void train_phase(const ModelConfig& mc, TrainConfig tc, const Dataset& ds, const std::string& out,
                 ModelParams<T>* loaded, Optimizer<T>* loaded_opt, RunRecord& rec) {
    ModelParams<T> params = loaded
                                ? std::move(*loaded)
                                : [&] {
                                      Rng rng(tc.seed);
                                      ModelParams<T> p = init_model_params<T>(mc, rng);
                                      p.channel_mean = ds.channel_mean;
                                      p.channel_std = ds.channel_std;
                                      return p;
                                  }();
    Optimizer<T> opt;
    if (loaded_opt) opt = std::move(*loaded_opt);
    const ModelMasks masks = build_masks(params.cfg);
    Tensor<T> frames = normalize_channels(tensor_cast<T>(ds.frames), params.channel_mean,
                                          params.channel_std);
    const std::vector<double> lat_w = latitude_weights(ds.grid.latitudes);

    TrainStats stats;
    if (tc.mode == "pretrain")
        stats = pretrain(params, opt, masks, frames, lat_w, tc);
    else if (tc.mode == "ar")
        stats = finetune_ar(params, opt, masks, frames, lat_w, tc.rollout_k, tc);
    else
        stats = finetune_rar(params, opt, masks, frames, lat_w, tc.rollout_k, tc.rollout_m, tc);

    ensure_parent_dir(out);
    checkpoint_save(out, params, &opt, tc.iterations);
    std::ofstream losscsv(out + ".loss.csv", std::ios::trunc);
    if (!losscsv) throw IoError(IoCode::open_failed, "cannot open " + out + ".loss.csv");
    write_loss_csv(losscsv, stats.log);
    rec.peak_live_nodes = stats.peak_live_nodes;
    rec.outputs = {out, out + ".json", out + ".loss.csv"};
    const double final_loss = stats.log.empty() ? 0.0 : stats.log.back().loss;
    std::cout << tc.mode << ": " << stats.log.size() << " updates, final loss " << final_loss
              << ", checkpoint " << out << "\n";
}

void run_gradcheck() {
    Rng rng(7);
    RngStream st = rng.stream("gradcheck");
    auto report = [](const std::string& name, double err) {
        const bool ok = err <= 1e-4;
        std::cout << "gradcheck " << name << ": max rel err " << err
                  << (ok ? "  PASS" : "  FAIL") << "\n";
        if (!ok) throw NumericError("gradcheck: " + name + " exceeded 1e-4");
    };
    auto randn = [&](const Shape& s) {
        Tensor<double> t(s);
        for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = st.normal();
        return t;
    };
    report("mul+sum", grad_check(
                          [](const Tensor<double>& x) { return sum(mul(x, x)); },
                          randn({4, 5}), 1e-5));
    report("gelu", grad_check(
                       [](const Tensor<double>& x) { return sum(gelu(x)); },
                       randn({32}), 1e-5));
    // Constant operands must be drawn once, outside the closure: grad_check
    // re-evaluates f for finite differences and the function must not move.
    const Tensor<double> sm_w = randn({3, 6});
    report("softmax", grad_check(
                          [&](const Tensor<double>& x) {
                              return sum(mul(softmax_last(x), sm_w.detach()));
                          },
                          randn({3, 6}), 1e-5));
    const Tensor<double> ln_g = randn({6});
    const Tensor<double> ln_b = randn({6});
    const Tensor<double> ln_w = randn({4, 6});
    report("layer_norm",
           grad_check(
               [&](const Tensor<double>& x) {
                   return sum(mul(layer_norm(x, ln_g.detach(), ln_b.detach()), ln_w.detach()));
               },
               randn({4, 6}), 1e-5));

    ModelConfig mc = ModelConfig::toy();
    Rng prng(3);
    ModelParams<double> params = init_model_params<double>(mc, prng);
    const ModelMasks masks = build_masks(mc);
    const std::vector<double> lat_w =
        latitude_weights(LatLonGrid::centered(mc.n_lat, mc.n_lon).latitudes);
    Tensor<double> x_prev = randn({mc.n_channels, mc.n_lat, mc.n_lon});
    Tensor<double> target = randn({mc.n_channels, mc.n_lat, mc.n_lon}).detach();
    report("toy forecast step + loss",
           grad_check(
               [&](const Tensor<double>& x) {
                   Tensor<double> pred = forward_step(params, masks, x_prev, x, nullptr);
                   return weighted_mae_loss(
                       reshape(pred, Shape{1, mc.n_channels, mc.n_lat, mc.n_lon}),
                       reshape(target, Shape{1, mc.n_channels, mc.n_lat, mc.n_lon}), lat_w);
               },
               randn({mc.n_channels, mc.n_lat, mc.n_lon}), 1e-5));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"searth: earth-topology windowed-attention forecasting toolkit"};
    app.require_subcommand(1);
    std::string manifest_path = "searth_runs.jsonl";
    app.add_option("--manifest", manifest_path, "run-record file (JSON lines, appended)");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    std::string gen_out, gen_grid = "16x32", gen_config;
    int64_t gen_channels = 4, gen_steps = 64, gen_waves = 3;
    uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output directory")->required();
    auto* gen_grid_o = gen->add_option("--grid", gen_grid, "grid HxW (default 16x32)");
    auto* gen_ch_o = gen->add_option("--channels", gen_channels, "channel count");
    auto* gen_st_o = gen->add_option("--steps", gen_steps, "time steps");
    auto* gen_se_o = gen->add_option("--seed", gen_seed, "generator seed");
    auto* gen_wv_o = gen->add_option("--waves", gen_waves, "waves per channel");
    gen->add_option("--config", gen_config, "JSON config (flags override it)");

    // regrid
    auto* rg = app.add_subcommand("regrid", "block-average a quarter-degree GT1 field to 1 degree");
    std::string rg_in, rg_out;
    rg->add_option("--in", rg_in, "input GT1 ([721,1440] or [C,721,1440])")->required();
    rg->add_option("--out", rg_out, "output GT1")->required();

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "single-step pretraining from scratch");
    std::string pt_data, pt_out, pt_config;
    int64_t pt_iters = 200;
    uint64_t pt_seed = 0;
    pt->add_option("--data", pt_data, "dataset directory")->required();
    pt->add_option("--out", pt_out, "checkpoint path")->required();
    auto* pt_it_o = pt->add_option("--iters", pt_iters, "optimizer iterations");
    auto* pt_se_o = pt->add_option("--seed", pt_seed, "training seed");
    pt->add_option("--config", pt_config, "JSON config with model/train sections");

    // finetune-ar
    auto* fa = app.add_subcommand("finetune-ar", "autoregressive fine-tuning, full backprop");
    std::string fa_ckpt, fa_data, fa_out, fa_config;
    int64_t fa_steps = 4, fa_iters = 50;
    uint64_t fa_seed = 0;
    fa->add_option("--ckpt", fa_ckpt, "input checkpoint")->required();
    fa->add_option("--data", fa_data, "dataset directory")->required();
    auto* fa_st_o = fa->add_option("--steps", fa_steps, "rollout length n");
    fa->add_option("--out", fa_out, "output checkpoint")->required();
    auto* fa_it_o = fa->add_option("--iters", fa_iters, "training samples");
    auto* fa_se_o = fa->add_option("--seed", fa_seed, "training seed");
    fa->add_option("--config", fa_config, "JSON config with train section");

    // finetune-rar
    auto* fr = app.add_subcommand("finetune-rar", "relay autoregressive fine-tuning");
    std::string fr_ckpt, fr_data, fr_out, fr_config;
    int64_t fr_k = 4, fr_stages = 15, fr_iters = 50;
    uint64_t fr_seed = 0;
    fr->add_option("--ckpt", fr_ckpt, "input checkpoint")->required();
    fr->add_option("--data", fr_data, "dataset directory")->required();
    auto* fr_k_o = fr->add_option("--k", fr_k, "steps per sub-stage");
    auto* fr_m_o = fr->add_option("--stages", fr_stages, "relay sub-stages M");
    fr->add_option("--out", fr_out, "output checkpoint")->required();
    auto* fr_it_o = fr->add_option("--iters", fr_iters, "training samples");
    auto* fr_se_o = fr->add_option("--seed", fr_seed, "training seed");
    fr->add_option("--config", fr_config, "JSON config with train section");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score rollouts against held-out frames");
    std::string ev_ckpt, ev_data, ev_leads = "6,12,18,24", ev_clim, ev_out, ev_config;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    auto* ev_ld_o = ev->add_option("--leads", ev_leads, "lead hours, comma separated");
    ev->add_option("--clim", ev_clim, "external climatology GT1 [C,H,W]");
    ev->add_option("--out-csv", ev_out, "metrics CSV path (default stdout)");
    ev->add_option("--config", ev_config, "JSON config (t0_stride)");

    // mask-dump
    auto* md = app.add_subcommand("mask-dump", "emit a shifted-window attention mask as CSV");
    int64_t md_h = 0, md_w = 0, md_win = 0, md_shift = -1;
    std::string md_mode = "earth", md_out;
    md->add_option("--H", md_h, "token rows")->required();
    md->add_option("--W", md_w, "token columns")->required();
    md->add_option("--win", md_win, "window size")->required();
    md->add_option("--shift", md_shift, "roll distance (default win/2)");
    md->add_option("--mode", md_mode, "earth|planar");
    md->add_option("--out-csv", md_out, "CSV path (default stdout)");

    // plot
    auto* pl = app.add_subcommand("plot", "render metric CSVs as an SVG line chart");
    std::string pl_metrics, pl_labels, pl_out;
    pl->add_option("--metrics", pl_metrics, "CSV paths, comma separated")->required();
    pl->add_option("--labels", pl_labels, "series label per CSV, comma separated");
    pl->add_option("--out", pl_out, "SVG path")->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference spot checks");
    std::string gc_preset = "toy";
    gc->add_option("--preset", gc_preset, "only 'toy' is available");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        RunRecord rec;
        rec.manifest_path = manifest_path;

        if (gen->parsed()) {
            rec.cmd = "gen-data";
            const json j = load_json_config(gen_config);
            SynthConfig sc;
            const auto [gh, gw] = parse_grid(pick(gen_grid_o, gen_grid, j, "grid"));
            sc.n_lat = gh;
            sc.n_lon = gw;
            sc.channels = pick(gen_ch_o, gen_channels, j, "channels");
            sc.steps = pick(gen_st_o, gen_steps, j, "steps");
            sc.wave_count = pick(gen_wv_o, gen_waves, j, "waves");
            sc.seed = pick(gen_se_o, gen_seed, j, "seed");
            if (j.contains("noise_amplitude")) sc.noise_amplitude = j.at("noise_amplitude").get<double>();
            if (j.contains("noise_decorrelation"))
                sc.noise_decorrelation = j.at("noise_decorrelation").get<double>();
            env_seed(&sc.seed);
            const Dataset ds = gen_synthetic(sc);
            save_dataset(gen_out, ds, &sc);
            rec.seed = sc.seed;
            rec.effective = {{"grid", std::to_string(sc.n_lat) + "x" + std::to_string(sc.n_lon)},
                             {"channels", sc.channels},
                             {"steps", sc.steps},
                             {"waves", sc.wave_count},
                             {"seed", sc.seed}};
            rec.outputs = {gen_out};
            std::cout << "gen-data: " << sc.steps << " steps of " << sc.channels << "x" << sc.n_lat
                      << "x" << sc.n_lon << " written to " << gen_out << "\n";
        } else if (rg->parsed()) {
            rec.cmd = "regrid";
            const Gt1Tensor in = gt1_read(rg_in);
            Gt1Tensor out;
            if (in.dtype == Gt1Dtype::f32)
                out = Gt1Tensor::from(regrid_quarter_to_one(in.to<float>()));
            else
                out = Gt1Tensor::from(regrid_quarter_to_one(in.to<double>()));
            ensure_parent_dir(rg_out);
            gt1_write(rg_out, out);
            rec.effective = {{"in", rg_in}};
            rec.outputs = {rg_out};
            std::cout << "regrid: " << shape_str(in.dims) << " -> " << shape_str(out.dims)
                      << " at " << rg_out << "\n";
        } else if (pt->parsed()) {
            rec.cmd = "pretrain";
            const json j = load_json_config(pt_config);
            const Dataset ds = load_dataset(pt_data);
            ModelConfig mc = ModelConfig::toy();
            mc.n_channels = ds.frames.extent(1);
            mc.n_lat = ds.frames.extent(2);
            mc.n_lon = ds.frames.extent(3);
            apply_model_json(mc, j);
            mc.validate();
            TrainConfig tc;
            tc.mode = "pretrain";
            apply_train_json(tc, j);
            tc.iterations = pick(pt_it_o, pt_iters, json::object(), "");
            if (pt_it_o->count() == 0 && j.contains("train") && j["train"].contains("iterations"))
                tc.iterations = j["train"]["iterations"].get<int64_t>();
            tc.seed = pick(pt_se_o, pt_seed, json::object(), "");
            if (pt_se_o->count() == 0 && j.contains("train") && j["train"].contains("seed"))
                tc.seed = j["train"]["seed"].get<uint64_t>();
            env_seed(&tc.seed);
            rec.seed = tc.seed;
            rec.effective = {{"iters", tc.iterations}, {"seed", tc.seed},
                             {"precision", mc.precision}};
            if (mc.precision == "f64")
                train_phase<double>(mc, tc, ds, pt_out, nullptr, nullptr, rec);
            else
                train_phase<float>(mc, tc, ds, pt_out, nullptr, nullptr, rec);
        } else if (fa->parsed() || fr->parsed()) {
            const bool is_rar = fr->parsed();
            rec.cmd = is_rar ? "finetune-rar" : "finetune-ar";
            const json j = load_json_config(is_rar ? fr_config : fa_config);
            const Dataset ds = load_dataset(is_rar ? fr_data : fa_data);
            const std::string ckpt = is_rar ? fr_ckpt : fa_ckpt;
            const std::string out = is_rar ? fr_out : fa_out;
            TrainConfig tc;
            tc.mode = is_rar ? "rar" : "ar";
            tc.lr_initial = 1e-7;
            tc.lr_final = 1e-7;
            apply_train_json(tc, j);
            if (is_rar) {
                tc.rollout_k = pick(fr_k_o, fr_k, json::object(), "");
                tc.rollout_m = pick(fr_m_o, fr_stages, json::object(), "");
                tc.iterations = pick(fr_it_o, fr_iters, json::object(), "");
                tc.seed = pick(fr_se_o, fr_seed, json::object(), "");
            } else {
                tc.rollout_k = pick(fa_st_o, fa_steps, json::object(), "");
                tc.rollout_m = 1;
                tc.iterations = pick(fa_it_o, fa_iters, json::object(), "");
                tc.seed = pick(fa_se_o, fa_seed, json::object(), "");
            }
            env_seed(&tc.seed);
            rec.seed = tc.seed;
            rec.effective = {{"k", tc.rollout_k}, {"stages", tc.rollout_m},
                             {"iters", tc.iterations}, {"seed", tc.seed}};
            const ModelConfig mc = checkpoint_peek_config(ckpt);
            if (mc.precision == "f64") {
                Optimizer<double> opt;
                ModelParams<double> params = checkpoint_load<double>(ckpt, &opt);
                train_phase<double>(mc, tc, ds, out, &params, &opt, rec);
            } else {
                Optimizer<float> opt;
                ModelParams<float> params = checkpoint_load<float>(ckpt, &opt);
                train_phase<float>(mc, tc, ds, out, &params, &opt, rec);
            }
        } else if (ev->parsed()) {
            rec.cmd = "evaluate";
            const json j = load_json_config(ev_config);
            const Dataset ds = load_dataset(ev_data);
            const std::vector<double> leads = parse_leads(pick(ev_ld_o, ev_leads, j, "leads"));
            int64_t stride = 1;
            if (j.contains("t0_stride")) stride = j.at("t0_stride").get<int64_t>();
            int64_t max_steps = 0;
            for (double lh : leads) {
                const double steps = lh / kHoursPerStep;
                if (steps < 1 || steps != std::floor(steps))
                    throw ConfigError("lead " + std::to_string(lh) + "h is not a multiple of " +
                                      std::to_string(kHoursPerStep) + "h");
                max_steps = std::max(max_steps, static_cast<int64_t>(steps));
            }
            const ModelConfig mc = checkpoint_peek_config(ev_ckpt);
            MetricsTable table;
            if (mc.precision == "f64") {
                ModelParams<double> params = checkpoint_load<double>(ev_ckpt);
                const ModelMasks masks = build_masks(mc);
                Tensor<double> clim;
                const Tensor<double>* climp = nullptr;
                if (!ev_clim.empty()) {
                    clim = gt1_read(ev_clim).to<double>();
                    climp = &clim;
                }
                table = evaluate_forecasts(params, masks, ds.frames, ds.grid, ds.var_names,
                                           max_steps, stride, kHoursPerStep, climp);
            } else {
                ModelParams<float> params = checkpoint_load<float>(ev_ckpt);
                const ModelMasks masks = build_masks(mc);
                Tensor<float> frames = tensor_cast<float>(ds.frames);
                Tensor<float> clim;
                const Tensor<float>* climp = nullptr;
                if (!ev_clim.empty()) {
                    clim = gt1_read(ev_clim).to<float>();
                    climp = &clim;
                }
                table = evaluate_forecasts(params, masks, frames, ds.grid, ds.var_names,
                                           max_steps, stride, kHoursPerStep, climp);
            }
            MetricsTable wanted;
            wanted.sample_count = table.sample_count;
            wanted.skipped_acc = table.skipped_acc;
            for (const auto& row : table.rows)
                for (double lh : leads)
                    if (row.lead_hours == lh) wanted.rows.push_back(row);
            std::ostringstream csv;
            write_metrics_csv(csv, wanted);
            if (ev_out.empty()) {
                std::cout << csv.str();
            } else {
                write_text_file(ev_out, csv.str());
                rec.outputs = {ev_out};
                std::cout << "evaluate: " << wanted.rows.size() << " rows over "
                          << wanted.sample_count << " init times -> " << ev_out << "\n";
            }
            rec.effective = {{"leads", ev_leads}, {"t0_stride", stride}};
        } else if (md->parsed()) {
            rec.cmd = "mask-dump";
            if (md_shift < 0) md_shift = md_win / 2;
            const AttentionMask mask = earth_attention_mask(md_h, md_w, md_win, md_win, md_shift,
                                                            md_shift,
                                                            mask_mode_from_string(md_mode));
            std::ostringstream csv;
            write_mask_csv(csv, mask);
            if (md_out.empty()) {
                std::cout << csv.str();
            } else {
                write_text_file(md_out, csv.str());
                rec.outputs = {md_out};
            }
            rec.effective = {{"H", md_h}, {"W", md_w}, {"win", md_win}, {"shift", md_shift},
                             {"mode", md_mode}};
        } else if (pl->parsed()) {
            rec.cmd = "plot";
            const std::vector<std::string> files = split_commas(pl_metrics);
            std::vector<std::string> labels =
                pl_labels.empty() ? std::vector<std::string>{} : split_commas(pl_labels);
            if (!labels.empty() && labels.size() != files.size())
                throw ConfigError("plot: label count != file count");
            std::vector<PlotSeries> series;
            std::string x_label;
            for (size_t i = 0; i < files.size(); ++i) {
                std::ifstream is(files[i]);
                if (!is) throw IoError(IoCode::open_failed, "plot: cannot open " + files[i]);
                const CsvTable table = read_csv(is);
                const std::string label =
                    labels.empty() ? std::filesystem::path(files[i]).stem().string() : labels[i];
                std::vector<PlotSeries> s = series_from_csv(table, label);
                // name the x axis after the column series_from_csv picked, and
                // refuse to mix files keyed on different x columns (series of
                // different lengths over the same column are fine)
                std::string file_x;
                for (size_t c = 0; c < table.header.size(); ++c) {
                    bool numeric = !table.rows.empty();
                    for (const auto& row : table.rows) {
                        char* end = nullptr;
                        std::strtod(row[c].c_str(), &end);
                        if (row[c].empty() || end != row[c].c_str() + row[c].size())
                            numeric = false;
                    }
                    if (numeric) {
                        file_x = table.header[c];
                        break;
                    }
                }
                if (x_label.empty())
                    x_label = file_x;
                else if (file_x != x_label)
                    throw ConfigError("plot: " + files[i] + " is keyed on '" + file_x +
                                      "' but earlier files use '" + x_label + "'");
                series.insert(series.end(), s.begin(), s.end());
            }
            write_text_file(pl_out, render_svg_lines(series, x_label, "value", ""));
            rec.effective = {{"metrics", pl_metrics}};
            rec.outputs = {pl_out};
            std::cout << "plot: " << series.size() << " series -> " << pl_out << "\n";
        } else if (gc->parsed()) {
            rec.cmd = "gradcheck";
            if (gc_preset != "toy") throw ConfigError("gradcheck: unknown preset " + gc_preset);
            run_gradcheck();
            rec.effective = {{"preset", gc_preset}};
        }

        rec.commit();
        return 0;
    } catch (const IoError& e) {
        std::cerr << "error: io: [" << io_code_name(e.code) << "] " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << e.what() << "\n";
        return 5;
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
}
