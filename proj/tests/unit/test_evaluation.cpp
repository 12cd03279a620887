#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "searth/data.hpp"
#include "searth/evaluation.hpp"

using namespace searth;

namespace {

Tensor<double> plane(int64_t h, int64_t w, double v) { return Tensor<double>::full({h, w}, v); }

Tensor<double> randp(RngStream& st, int64_t h, int64_t w) {
    Tensor<double> t(Shape{h, w});
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = st.normal();
    return t;
}

}  // namespace

TEST_CASE("climatology of constants, pairs, and a full wave period") {
    Tensor<double> frames(Shape{3, 1, 2, 2});
    for (int64_t t = 0; t < 3; ++t)
        for (int64_t i = 0; i < 4; ++i) frames.data()[t * 4 + i] = 5.0;
    Tensor<double> clim = compute_climatology(frames);
    CHECK(clim.shape() == Shape{1, 2, 2});
    for (int64_t i = 0; i < 4; ++i) CHECK(clim.data()[i] == 5.0);

    Tensor<double> two(Shape{2, 1, 1, 2}, {1.0, 3.0, 2.0, 5.0});
    Tensor<double> m = compute_climatology(two);
    CHECK(m.data()[0] == doctest::Approx(1.5));
    CHECK(m.data()[1] == doctest::Approx(4.0));

    // A traveling wave sampled over exactly one period has zero mean.
    SynthConfig sc;
    sc.n_lat = 8;
    sc.n_lon = 16;
    sc.channels = 1;
    sc.steps = 16;
    sc.noise_amplitude = 0.0;
    SynthWave wv;
    wv.m = 2;
    wv.sigma = 0.7;
    wv.omega = 2.0 * 3.14159265358979323846 / 16.0;
    wv.amplitude = 1.3;
    wv.phase = 0.4;
    sc.waves = {wv};
    Dataset ds = gen_synthetic(sc);
    Tensor<double> wave_clim = compute_climatology(ds.frames);
    for (int64_t i = 0; i < wave_clim.size(); ++i) CHECK(std::abs(wave_clim.data()[i]) <= 1e-10);

    CHECK_THROWS_AS((void)compute_climatology(Tensor<double>(Shape{0, 1, 2, 2})), ConfigError);
}

TEST_CASE("rmse: exact zero on identity, uniform errors pass through, roots average") {
    std::vector<double> lw{1.0, 1.0};
    RngStream st = Rng(3).stream("rmse");
    Tensor<double> y = randp(st, 2, 3);
    CHECK(rmse({y}, {y}, lw) == 0.0);

    Tensor<double> e1 = add(y, plane(2, 3, 1.0)).detach();
    CHECK(rmse({e1}, {y}, lw) == doctest::Approx(1.0).epsilon(1e-12));

    // Per-start errors 1 and 3 average to 2, not sqrt(5).
    Tensor<double> e3 = add(y, plane(2, 3, 3.0)).detach();
    CHECK(rmse({e1, e3}, {y, y}, lw) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("rmse roots-then-average never exceeds the pooled root") {
    RngStream st = Rng(4).stream("jensen");
    std::vector<double> lw{1.0, 1.0, 1.0, 1.0};
    std::vector<Tensor<double>> f, t;
    double pooled = 0;
    const int n = 6;
    for (int i = 0; i < n; ++i) {
        Tensor<double> truth = randp(st, 4, 5);
        Tensor<double> fc = randp(st, 4, 5);
        f.push_back(fc);
        t.push_back(truth);
        double s = 0;
        for (int64_t j = 0; j < truth.size(); ++j) {
            double d = fc.data()[j] - truth.data()[j];
            s += lw[static_cast<size_t>(j / 5)] * d * d;
        }
        pooled += s / 20.0;
    }
    CHECK(rmse(f, t, lw) <= std::sqrt(pooled / n) + 1e-12);
}

TEST_CASE("acc identities: self, anti-self, orthogonal, scale-free") {
    std::vector<double> lw{1.0, 1.0};
    RngStream st = Rng(5).stream("acc");
    Tensor<double> clim = randp(st, 2, 2);
    Tensor<double> truth = add(clim, randp(st, 2, 2)).detach();

    CHECK(acc({truth}, {truth}, clim, lw) == 1.0);

    // Mirror anomaly: forecast = clim - (truth - clim)
    Tensor<double> mirror = sub(scale(clim, 2.0), truth).detach();
    CHECK(acc({mirror}, {truth}, clim, lw) == doctest::Approx(-1.0).epsilon(1e-12));

    // L-orthogonal anomalies: disjoint support.
    Tensor<double> zero_clim(Shape{1, 2});
    Tensor<double> a(Shape{1, 2}, {1.0, 0.0});
    Tensor<double> b(Shape{1, 2}, {0.0, 1.0});
    CHECK(std::abs(acc({a}, {b}, zero_clim, {1.0})) <= 1e-12);

    // Positive rescaling of the forecast anomaly leaves ACC unchanged.
    Tensor<double> scaled = add(clim, scale(sub(truth, clim), 3.5)).detach();
    CHECK(acc({scaled}, {truth}, clim, lw) == doctest::Approx(1.0).epsilon(1e-12));

    double lo = acc({randp(st, 2, 2)}, {randp(st, 2, 2)}, clim, lw);
    CHECK(lo >= -1.0);
    CHECK(lo <= 1.0);
}

TEST_CASE("acc skips zero-anomaly start times and refuses when none remain") {
    std::vector<double> lw{1.0};
    Tensor<double> clim(Shape{1, 2}, {1.0, 2.0});
    Tensor<double> flat = clim.detach();       // zero anomaly on both sides
    Tensor<double> live(Shape{1, 2}, {2.0, 1.0});

    int64_t skipped = 0;
    double v = acc({flat, live}, {flat, live}, clim, lw, &skipped);
    CHECK(skipped == 1);
    CHECK(v == 1.0);  // only the live start contributes

    CHECK_THROWS_AS((void)acc({flat}, {flat}, clim, lw), NumericError);
}

TEST_CASE("normalized differences use the documented denominators") {
    CHECK(normalized_diff(2.0, 2.0, MetricKind::rmse) == 0.0);
    CHECK(normalized_diff(1.8, 2.0, MetricKind::rmse) == doctest::Approx(-0.10).epsilon(1e-12));
    CHECK(normalized_diff(0.7, 0.6, MetricKind::acc) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS((void)normalized_diff(1.0, 0.0, MetricKind::rmse), NumericError);
    CHECK_THROWS_AS((void)normalized_diff(0.9, 1.0, MetricKind::acc), NumericError);
}

TEST_CASE("skillful lead time interpolates the threshold crossing") {
    std::vector<std::pair<double, double>> curve{{1.0, 0.9}, {2.0, 0.7}, {3.0, 0.5}};
    LeadTime lt = skillful_lead_time(curve, 0.6);
    CHECK(lt.value == doctest::Approx(2.5).epsilon(1e-9));
    CHECK_FALSE(lt.censored);

    // A curve that never drops is censored at the final lead.
    LeadTime cens = skillful_lead_time({{1.0, 0.9}, {2.0, 0.8}, {3.0, 0.75}}, 0.6);
    CHECK(cens.censored);
    CHECK(cens.value == 3.0);

    // Already below at the first point: zero lead, not censored.
    LeadTime below = skillful_lead_time({{1.0, 0.5}, {2.0, 0.4}}, 0.6);
    CHECK_FALSE(below.censored);
    CHECK(below.value == 0.0);

    // An exact hit counts as the crossing.
    LeadTime hit = skillful_lead_time({{1.0, 0.9}, {4.0, 0.6}, {5.0, 0.5}}, 0.6);
    CHECK(hit.value == doctest::Approx(4.0).epsilon(1e-12));
    CHECK_FALSE(hit.censored);

    CHECK_THROWS_AS((void)skillful_lead_time({{1.0, 0.9}}, 0.6), ConfigError);
    CHECK_THROWS_AS((void)skillful_lead_time({{2.0, 0.9}, {1.0, 0.8}}, 0.6), ConfigError);
}

TEST_CASE("a uniformly better curve never has a shorter skillful lead") {
    RngStream st = Rng(6).stream("mono");
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<std::pair<double, double>> low, high;
        double v = 0.95;
        for (int i = 0; i < 8; ++i) {
            v -= 0.02 + 0.1 * st.uniform();
            low.emplace_back(i + 1.0, v);
            high.emplace_back(i + 1.0, v + 0.05);
        }
        LeadTime l = skillful_lead_time(low, 0.6);
        LeadTime h = skillful_lead_time(high, 0.6);
        double lv = l.censored ? 1e18 : l.value;
        double hv = h.censored ? 1e18 : h.value;
        CHECK(hv >= lv);
    }
}

TEST_CASE("metrics and comparison CSVs carry the documented headers") {
    MetricsTable a;
    a.rows = {{"var0", 6.0, 1.5, 0.9}, {"var0", 12.0, 2.0, 0.8}};
    a.sample_count = 3;
    std::ostringstream os;
    write_metrics_csv(os, a);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "variable,lead_hours,rmse,acc");
    std::getline(is, line);
    CHECK(line.substr(0, 5) == "var0,");

    MetricsTable b = a;
    b.rows[0].rmse = 1.2;
    b.rows[0].acc = 0.92;
    std::ostringstream od;
    write_diffs_csv(od, a, b, "ref");
    std::istringstream id(od.str());
    std::getline(id, line);
    CHECK(line == "variable,lead_hours,rmse,acc,baseline");
    std::getline(id, line);
    // rmse diff: (1.5-1.2)/1.2 = 0.25; acc diff: (0.9-0.92)/(1-0.92) = -0.25
    CHECK(line.find("0.25") != std::string::npos);
    CHECK(line.find("ref") != std::string::npos);

    MetricsTable mismatched = b;
    mismatched.rows.pop_back();
    std::ostringstream oe;
    CHECK_THROWS_AS(write_diffs_csv(oe, a, mismatched, "ref"), ConfigError);
}

TEST_CASE("rollout repeats persistence under a fresh model") {
    ModelConfig cfg;
    cfg.n_channels = 2;
    cfg.n_lat = 8;
    cfg.n_lon = 16;
    cfg.embed_dim = 8;
    cfg.encoder_blocks = 2;
    cfg.core_blocks = 2;
    cfg.decoder_blocks = 2;
    cfg.heads_encoder = 1;
    cfg.heads_core = 2;
    cfg.heads_decoder = 1;
    Rng rng(7);
    ModelParams<double> p = init_model_params<double>(cfg, rng);
    ModelMasks masks = build_masks(cfg);
    RngStream st = Rng(8).stream("x");
    Tensor<double> a(Shape{2, 8, 16}), b(Shape{2, 8, 16});
    for (int64_t i = 0; i < a.size(); ++i) a.data()[i] = st.normal();
    for (int64_t i = 0; i < b.size(); ++i) b.data()[i] = st.normal();
    std::vector<Tensor<double>> preds = rollout_forecast(p, masks, a, b, 3);
    REQUIRE(preds.size() == 3);
    for (auto& pr : preds)
        for (int64_t i = 0; i < pr.size(); ++i) CHECK(pr.data()[i] == b.data()[i]);
}

TEST_CASE("full evaluation produces one row per variable and lead") {
    ModelConfig cfg;
    cfg.n_channels = 2;
    cfg.n_lat = 8;
    cfg.n_lon = 16;
    cfg.embed_dim = 8;
    cfg.encoder_blocks = 2;
    cfg.core_blocks = 2;
    cfg.decoder_blocks = 2;
    cfg.heads_encoder = 1;
    cfg.heads_core = 2;
    cfg.heads_decoder = 1;
    SynthConfig sc;
    sc.n_lat = 8;
    sc.n_lon = 16;
    sc.channels = 2;
    sc.steps = 12;
    sc.seed = 9;
    Dataset ds = gen_synthetic(sc);
    Rng rng(10);
    ModelParams<double> p = init_model_params<double>(cfg, rng);
    p.channel_mean = ds.channel_mean;
    p.channel_std = ds.channel_std;
    ModelMasks masks = build_masks(cfg);

    MetricsTable t = evaluate_forecasts(p, masks, ds.frames, ds.grid, ds.var_names, 3, 1,
                                        kHoursPerStep);
    CHECK(t.rows.size() == 2 * 3);
    CHECK(t.sample_count > 0);
    for (auto& r : t.rows) {
        CHECK(r.rmse >= 0.0);
        CHECK(r.acc <= 1.0 + 1e-12);
        CHECK(r.acc >= -1.0 - 1e-12);
        CHECK(std::fmod(r.lead_hours, kHoursPerStep) == 0.0);
    }
    // Persistence-style forecasts decay in skill with lead on wave data.
    CHECK(t.rows[0].lead_hours < t.rows[1].lead_hours);
    CHECK(t.rows[0].rmse <= t.rows[2].rmse + 1e-12);
}
