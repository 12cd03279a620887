#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "searth/geometry.hpp"
#include "searth/rng.hpp"
#include "searth/tensor.hpp"

namespace searth {

struct SynthWave {
    int m = 1;             // zonal wavenumber; integer so the field wraps seamlessly
    double sigma = 0.5;    // meridional envelope width, radians of latitude
    double omega = 0.3;    // phase speed, radians per step
    double amplitude = 1.0;
    double phase = 0.0;
};

struct SynthConfig {
    int64_t n_lat = 16;
    int64_t n_lon = 32;
    int64_t channels = 4;
    int64_t steps = 64;
    int64_t wave_count = 3;         // per-channel waves drawn from the seed
    std::vector<SynthWave> waves;   // non-empty: use this bank for every channel instead
    double noise_amplitude = 0.05;  // stationary std of the per-cell AR(1) noise
    double noise_decorrelation = 0.8;
    uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    Tensor<double> frames;  // [N,C,H,W], physical units
    LatLonGrid grid;
    std::vector<double> channel_mean;
    std::vector<double> channel_std;
    std::vector<std::string> var_names;
};

// Superposed zonally travelling waves under Gaussian latitude envelopes plus
// per-cell AR(1) noise. Deterministic per seed; channel stats cover all frames.
Dataset gen_synthetic(const SynthConfig& cfg);

// Per-channel mean and population std over frames [begin, end).
std::pair<std::vector<double>, std::vector<double>> channel_stats(const Tensor<double>& frames,
                                                                  int64_t begin, int64_t end);

// On-disk layout: one GT1 file per step (frame_000000.gt1, ...) plus
// manifest.json carrying grid, stats, variable names, the nominal 6-hour step,
// and — when `synth_echo` is given — the generator settings.
void save_dataset(const std::string& dir, const Dataset& ds,
                  const SynthConfig* synth_echo = nullptr);
Dataset load_dataset(const std::string& dir);

// Nominal forecast interval encoded in dataset manifests.
inline constexpr double kHoursPerStep = 6.0;

}  // namespace searth
