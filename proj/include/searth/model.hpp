#pragma once

#include <string>
#include <utility>
#include <vector>

#include "searth/attention.hpp"
#include "searth/geometry.hpp"
#include "searth/rng.hpp"
#include "searth/tensor.hpp"

namespace searth {

struct ModelConfig {
    int64_t n_channels = 4;
    int64_t n_lat = 16;
    int64_t n_lon = 32;
    int64_t embed_dim = 32;
    int64_t win_h = 2;
    int64_t win_w = 2;
    int64_t heads_encoder = 2;
    int64_t heads_core = 4;
    int64_t heads_decoder = 2;
    int64_t encoder_blocks = 2;  // individual blocks; two make one block pair
    int64_t core_blocks = 4;
    int64_t decoder_blocks = 2;
    double droppath = 0.0;
    MaskMode mode = MaskMode::earth;
    std::string precision = "f64";  // "f32" | "f64"

    int64_t shift_h() const { return win_h / 2; }
    int64_t shift_w() const { return win_w / 2; }

    void validate() const;
    static ModelConfig toy();
    static ModelConfig full_scale();
};

// Precomputed attention masks for the two latent resolutions: outer covers
// the encoder/decoder grid (H/2 x W/2), inner the core grid (H/4 x W/4).
struct ModelMasks {
    AttentionMask outer_unshifted, outer_shifted;
    AttentionMask inner_unshifted, inner_shifted;
};
ModelMasks build_masks(const ModelConfig& cfg);

template <class T>
struct ModelParams {
    ModelConfig cfg;
    Tensor<T> embed_w, embed_b;  // [d, C, 2, 2, 2], [d]
    std::vector<BlockPairParams<T>> encoder;
    Tensor<T> merge_w, merge_b;  // [4d, 2d], [2d]
    std::vector<BlockPairParams<T>> core;
    Tensor<T> expand_w, expand_b;  // [2d, 4d], [4d]
    std::vector<BlockPairParams<T>> decoder;
    Tensor<T> unembed_conv_w, unembed_conv_b;  // [d, d/2, 2, 2], [d/2]
    Tensor<T> unembed_fc_w, unembed_fc_b;      // [d/2, C], [C]
    // per-channel standardization constants, carried with the checkpoint
    std::vector<double> channel_mean, channel_std;
};

// Stable, unique names for every learnable tensor; ordering is the
// construction order and defines checkpoint layout.
template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> named_tensors(ModelParams<T>& p);

template <class T>
int64_t parameter_count(ModelParams<T>& p);

template <class T>
ModelParams<T> init_model_params(const ModelConfig& cfg, Rng& rng);

// Two consecutive states [C,H,W] stacked on a time axis and compressed by a
// strided 3-D convolution to the outer latent [d, H/2, W/2].
template <class T>
Tensor<T> embed(const Tensor<T>& x_prev, const Tensor<T>& x_curr, const Tensor<T>& w,
                const Tensor<T>& b);

// 2x2 neighborhood concat + affine 4d->2d (halves the grid) and its mirror.
template <class T>
Tensor<T> patch_merge(const Tensor<T>& latent, const Tensor<T>& w, const Tensor<T>& b);
template <class T>
Tensor<T> patch_expand(const Tensor<T>& latent, const Tensor<T>& w, const Tensor<T>& b);

// Transposed conv (2,2)/(2,2) to full resolution, then per-pixel affine to
// n_channels; the result is a state increment.
template <class T>
Tensor<T> unembed(const Tensor<T>& latent, const Tensor<T>& conv_w, const Tensor<T>& conv_b,
                  const Tensor<T>& fc_w, const Tensor<T>& fc_b);

// One forecast step in normalized space: x_curr plus the predicted increment.
// dp_stream == nullptr runs in inference mode (no stochastic depth).
template <class T>
Tensor<T> forward_step(ModelParams<T>& p, const ModelMasks& masks, const Tensor<T>& x_prev,
                       const Tensor<T>& x_curr, RngStream* dp_stream);

// Channel standardization for [C,H,W] or [N,C,H,W] layouts (channel axis is
// rank-3). Plain value transforms, not differentiated.
template <class T>
Tensor<T> normalize_channels(const Tensor<T>& x, const std::vector<double>& mean,
                             const std::vector<double>& sd);
template <class T>
Tensor<T> denormalize_channels(const Tensor<T>& x, const std::vector<double>& mean,
                               const std::vector<double>& sd);

}  // namespace searth
