#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "searth/tensor.hpp"

namespace searth {

// Additive score penalty for blocked token pairs. Finite so softmax never
// produces NaN; leakage after softmax is far below every test tolerance.
constexpr double kAttentionBlock = -1e9;

enum class MaskMode { earth, planar };
MaskMode mask_mode_from_string(const std::string& s);
const char* mask_mode_name(MaskMode m);

// Regular latitude-longitude grid, rows ordered north to south, longitudes
// periodic with uniform spacing covering 360 degrees.
struct LatLonGrid {
    int64_t n_lat = 0;
    int64_t n_lon = 0;
    std::vector<double> latitudes;  // degrees, strictly decreasing

    // Cell-center grid: latitude i at 90 - (i+0.5)*180/H, longitude j at j*360/W.
    static LatLonGrid centered(int64_t h, int64_t w);
    double longitude(int64_t j) const { return 360.0 * static_cast<double>(j) / static_cast<double>(n_lon); }
};

// L_i = N_lat * cos(phi_i) / sum_j cos(phi_j); sums to N_lat.
std::vector<double> latitude_weights(const std::vector<double>& latitudes_deg);

// Per-window additive attention mask. blocked holds one byte per
// (window, query, key) triple; additive<T>() materializes {0, kAttentionBlock}.
struct AttentionMask {
    int64_t num_windows = 0;
    int64_t tokens = 0;
    int64_t win_h = 0;
    int64_t win_w = 0;
    std::vector<int8_t> blocked;

    bool is_blocked(int64_t w, int64_t q, int64_t k) const {
        return blocked[static_cast<size_t>((w * tokens + q) * tokens + k)] != 0;
    }

    template <class T>
    Tensor<T> additive() const {
        Tensor<T> m(Shape{num_windows, tokens, tokens});
        T* d = m.data();
        for (size_t i = 0; i < blocked.size(); ++i)
            d[i] = blocked[i] ? static_cast<T>(kAttentionBlock) : T(0);
        return m;
    }
};

// Mask for shifted-window attention over an H x W grid rolled by
// (-shift_h, -shift_w). Earth mode blocks only pairs split by the pole seam;
// planar mode also blocks pairs split by the longitude seam.
AttentionMask earth_attention_mask(int64_t h, int64_t w, int64_t win_h, int64_t win_w,
                                   int64_t shift_h, int64_t shift_w, MaskMode mode);

// CSV with header window,q,k,blocked and one row per triple.
void write_mask_csv(std::ostream& os, const AttentionMask& m);

// (721,1440) quarter-degree field, row 0 at 90N: drop the 90S row, then mean
// over 4x4 blocks -> (180,360). Accepts [721,1440] or [C,721,1440].
template <class T>
Tensor<T> regrid_quarter_to_one(const Tensor<T>& field);

}  // namespace searth
