#include "searth/attention.hpp"

#include <cmath>

namespace searth {

std::vector<int> relative_position_index(int64_t win_h, int64_t win_w) {
    const int64_t t = win_h * win_w;
    std::vector<int> idx(static_cast<size_t>(t * t));
    for (int64_t a = 0; a < t; ++a) {
        const int64_t ya = a / win_w, xa = a % win_w;
        for (int64_t b = 0; b < t; ++b) {
            const int64_t yb = b / win_w, xb = b % win_w;
            const int64_t dy = ya - yb + win_h - 1;
            const int64_t dx = xa - xb + win_w - 1;
            idx[static_cast<size_t>(a * t + b)] = static_cast<int>(dy * (2 * win_w - 1) + dx);
        }
    }
    return idx;
}

template <class T>
Tensor<T> drop_path(const Tensor<T>& x, double rate, RngStream& stream, bool training) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("drop_path: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const double u = stream.uniform();
    if (u < rate) return Tensor<T>(x.shape());  // branch dropped, constant zeros
    return scale(x, 1.0 / (1.0 - rate));
}

template <class T>
Tensor<T> window_msa(const Tensor<T>& x, const MsaParams<T>& p, const AttentionMask& mask) {
    if (x.rank() != 3) throw ShapeError("window_msa: need [C,H,W], got " + shape_str(x.shape()));
    const int64_t d = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (mask.win_h <= 0 || mask.win_w <= 0 || h % mask.win_h != 0 || w % mask.win_w != 0 ||
        mask.num_windows != (h / mask.win_h) * (w / mask.win_w) ||
        mask.tokens != mask.win_h * mask.win_w)
        throw ShapeError("window_msa: mask geometry does not match " + std::to_string(h) + "x" +
                         std::to_string(w));
    if (p.heads <= 0 || d % p.heads != 0)
        throw ShapeError("window_msa: " + std::to_string(p.heads) + " heads do not divide d=" +
                         std::to_string(d));
    const int64_t nw = mask.num_windows, t = mask.tokens, nh = p.heads, hd = d / nh;

    Tensor<T> xw = window_partition(x, mask.win_h, mask.win_w);  // [nw, t, d]
    Tensor<T> qkv = linear(xw, p.qkv_w, p.qkv_b);                // [nw, t, 3d]
    auto parts = split(qkv, 2, {d, d, d});
    auto heads_first = [&](const Tensor<T>& m) {
        return permute(reshape(m, Shape{nw, t, nh, hd}), {0, 2, 1, 3});  // [nw, heads, t, hd]
    };
    Tensor<T> q = heads_first(parts[0]);
    Tensor<T> k = heads_first(parts[1]);
    Tensor<T> v = heads_first(parts[2]);

    q = scale(q, 1.0 / std::sqrt(static_cast<double>(hd)));
    Tensor<T> scores = matmul(q, permute(k, {0, 1, 3, 2}));  // [nw, heads, t, t]

    Tensor<T> bias = gather_rows(p.rel_bias, relative_position_index(mask.win_h, mask.win_w));
    bias = reshape(permute(reshape(bias, Shape{t, t, nh}), {2, 0, 1}), Shape{1, nh, t, t});
    scores = add_bcast(scores, bias);

    bool any_blocked = false;
    for (int8_t b : mask.blocked) any_blocked = any_blocked || b != 0;
    if (any_blocked) {
        Tensor<T> m = reshape(mask.additive<T>(), Shape{nw, 1, t, t});
        scores = add_bcast(scores, m);
    }

    Tensor<T> attn = softmax_last(scores);
    Tensor<T> out = matmul(attn, v);                          // [nw, heads, t, hd]
    out = reshape(permute(out, {0, 2, 1, 3}), Shape{nw, t, d});
    out = linear(out, p.out_w, p.out_b);
    return window_reverse(out, d, h, w, mask.win_h, mask.win_w);
}

namespace {

template <class T>
Tensor<T> sub_block(const Tensor<T>& x, const SubBlockParams<T>& p, const AttentionMask& mask,
                    double droppath, RngStream* dp) {
    // tokens-last layout for the per-position norm and MLP
    Tensor<T> tok = permute(x, {1, 2, 0});  // [H, W, C]
    Tensor<T> normed = layer_norm(tok, p.ln1_gain, p.ln1_bias);
    Tensor<T> attn = window_msa(permute(normed, {2, 0, 1}), p.msa, mask);
    attn = permute(attn, {1, 2, 0});
    if (dp) attn = drop_path(attn, droppath, *dp, true);
    tok = add(tok, attn);

    Tensor<T> mlp = layer_norm(tok, p.ln2_gain, p.ln2_bias);
    mlp = linear(mlp, p.mlp_w1, p.mlp_b1);
    mlp = gelu(mlp);
    mlp = linear(mlp, p.mlp_w2, p.mlp_b2);
    if (dp) mlp = drop_path(mlp, droppath, *dp, true);
    tok = add(tok, mlp);
    return permute(tok, {2, 0, 1});  // back to [C, H, W]
}

}  // namespace

template <class T>
Tensor<T> searth_block_pair(const Tensor<T>& x, const BlockPairParams<T>& p,
                            const AttentionMask& unshifted, const AttentionMask& shifted,
                            int64_t shift_h, int64_t shift_w, RngStream* dp_stream) {
    Tensor<T> y = sub_block(x, p.first, unshifted, p.droppath, dp_stream);
    y = roll(roll(y, 1, -shift_h), 2, -shift_w);
    y = sub_block(y, p.second, shifted, p.droppath, dp_stream);
    return roll(roll(y, 1, shift_h), 2, shift_w);
}

#define SEARTH_INSTANTIATE_ATTENTION(T)                                                       \
    template Tensor<T> drop_path<T>(const Tensor<T>&, double, RngStream&, bool);              \
    template Tensor<T> window_msa<T>(const Tensor<T>&, const MsaParams<T>&,                   \
                                     const AttentionMask&);                                   \
    template Tensor<T> searth_block_pair<T>(const Tensor<T>&, const BlockPairParams<T>&,      \
                                            const AttentionMask&, const AttentionMask&,       \
                                            int64_t, int64_t, RngStream*);

SEARTH_INSTANTIATE_ATTENTION(float)
SEARTH_INSTANTIATE_ATTENTION(double)

}  // namespace searth
