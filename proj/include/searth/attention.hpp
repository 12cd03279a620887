#pragma once

#include "searth/geometry.hpp"
#include "searth/rng.hpp"
#include "searth/tensor.hpp"

namespace searth {

// One windowed multi-head self-attention layer: fused qkv projection,
// output projection, and a learnable relative-position-bias table shared by
// all windows.
template <class T>
struct MsaParams {
    Tensor<T> qkv_w;     // [d, 3d]
    Tensor<T> qkv_b;     // [3d]
    Tensor<T> out_w;     // [d, d]
    Tensor<T> out_b;     // [d]
    Tensor<T> rel_bias;  // [(2*win_h-1)*(2*win_w-1), heads]
    int64_t heads = 1;
};

// Pre-norm transformer sub-block: LN, windowed attention, LN, 2-layer MLP
// with GELU, both branches residual.
template <class T>
struct SubBlockParams {
    Tensor<T> ln1_gain, ln1_bias;
    MsaParams<T> msa;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> mlp_w1;  // [d, 4d]
    Tensor<T> mlp_b1;  // [4d]
    Tensor<T> mlp_w2;  // [4d, d]
    Tensor<T> mlp_b2;  // [d]
};

// Two successive sub-blocks: the first attends within aligned windows, the
// second on the cyclically rolled grid with a seam mask.
template <class T>
struct BlockPairParams {
    SubBlockParams<T> first;
    SubBlockParams<T> second;
    double droppath = 0.0;
};

// Flattened (delta_row, delta_col) -> bias-table row for every ordered token
// pair of a win_h x win_w window; layout matches MsaParams::rel_bias.
std::vector<int> relative_position_index(int64_t win_h, int64_t win_w);

// Per-sample stochastic depth. Training: the branch is dropped with
// probability rate, otherwise scaled by 1/(1-rate). Inference: identity.
template <class T>
Tensor<T> drop_path(const Tensor<T>& x, double rate, RngStream& stream, bool training);

// Windowed attention over x[C,H,W]; window geometry comes from the mask.
template <class T>
Tensor<T> window_msa(const Tensor<T>& x, const MsaParams<T>& p, const AttentionMask& mask);

// The paired block: unshifted attention, then attention on the grid rolled by
// (-shift_h, -shift_w) under `shifted`'s seam mask, rolled back afterwards.
// dp_stream == nullptr disables stochastic depth (inference).
template <class T>
Tensor<T> searth_block_pair(const Tensor<T>& x, const BlockPairParams<T>& p,
                            const AttentionMask& unshifted, const AttentionMask& shifted,
                            int64_t shift_h, int64_t shift_w, RngStream* dp_stream);

}  // namespace searth
