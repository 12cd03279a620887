#include "searth/model.hpp"

#include <cmath>

namespace searth {

void ModelConfig::validate() const {
    auto positive = [](int64_t v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(n_channels, "n_channels");
    positive(n_lat, "n_lat");
    positive(n_lon, "n_lon");
    positive(embed_dim, "embed_dim");
    positive(win_h, "win_h");
    positive(win_w, "win_w");
    positive(heads_encoder, "heads_encoder");
    positive(heads_core, "heads_core");
    positive(heads_decoder, "heads_decoder");
    if (n_lat % 4 != 0 || n_lon % 4 != 0)
        throw ConfigError("grid extents must be divisible by 4 (two halvings), got " +
                          std::to_string(n_lat) + "x" + std::to_string(n_lon));
    if ((n_lat / 2) % win_h != 0 || (n_lon / 2) % win_w != 0)
        throw ConfigError("window " + std::to_string(win_h) + "x" + std::to_string(win_w) +
                          " does not tile the outer latent grid " + std::to_string(n_lat / 2) +
                          "x" + std::to_string(n_lon / 2));
    if ((n_lat / 4) % win_h != 0 || (n_lon / 4) % win_w != 0)
        throw ConfigError("window " + std::to_string(win_h) + "x" + std::to_string(win_w) +
                          " does not tile the core latent grid " + std::to_string(n_lat / 4) +
                          "x" + std::to_string(n_lon / 4));
    if (encoder_blocks <= 0 || core_blocks <= 0 || decoder_blocks <= 0 ||
        encoder_blocks % 2 != 0 || core_blocks % 2 != 0 || decoder_blocks % 2 != 0)
        throw ConfigError("block counts must be positive and even (blocks come in pairs)");
    if (embed_dim % 2 != 0) throw ConfigError("embed_dim must be even");
    if (embed_dim % heads_encoder != 0 || embed_dim % heads_decoder != 0 ||
        (2 * embed_dim) % heads_core != 0)
        throw ConfigError("head counts must divide the stage dimension");
    if (droppath < 0.0 || droppath >= 1.0) throw ConfigError("droppath must be in [0,1)");
    if (precision != "f32" && precision != "f64")
        throw ConfigError("precision must be 'f32' or 'f64', got '" + precision + "'");
}

ModelConfig ModelConfig::toy() {
    ModelConfig c;
    c.n_channels = 4;
    c.n_lat = 16;
    c.n_lon = 32;
    c.embed_dim = 32;
    c.win_h = 2;
    c.win_w = 2;
    c.heads_encoder = 2;
    c.heads_core = 4;
    c.heads_decoder = 2;
    c.encoder_blocks = 2;
    c.core_blocks = 4;
    c.decoder_blocks = 2;
    c.droppath = 0.0;
    c.precision = "f64";
    return c;
}

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.n_channels = 69;
    c.n_lat = 180;
    c.n_lon = 360;
    c.embed_dim = 768;
    // Width 6 tiles both latent grids (180 and 90 columns). Height must
    // divide 90 and 45, so 5 is the largest workable choice.
    c.win_h = 5;
    c.win_w = 6;
    c.heads_encoder = 8;
    c.heads_core = 16;
    c.heads_decoder = 8;
    c.encoder_blocks = 6;
    c.core_blocks = 20;
    c.decoder_blocks = 6;
    c.droppath = 0.2;
    c.precision = "f32";
    return c;
}

ModelMasks build_masks(const ModelConfig& cfg) {
    cfg.validate();
    ModelMasks m;
    const int64_t oh = cfg.n_lat / 2, ow = cfg.n_lon / 2;
    const int64_t ih = cfg.n_lat / 4, iw = cfg.n_lon / 4;
    m.outer_unshifted = earth_attention_mask(oh, ow, cfg.win_h, cfg.win_w, 0, 0, cfg.mode);
    m.outer_shifted =
        earth_attention_mask(oh, ow, cfg.win_h, cfg.win_w, cfg.shift_h(), cfg.shift_w(), cfg.mode);
    m.inner_unshifted = earth_attention_mask(ih, iw, cfg.win_h, cfg.win_w, 0, 0, cfg.mode);
    m.inner_shifted =
        earth_attention_mask(ih, iw, cfg.win_h, cfg.win_w, cfg.shift_h(), cfg.shift_w(), cfg.mode);
    return m;
}

namespace {

template <class T>
void register_sub(std::vector<std::pair<std::string, Tensor<T>*>>& out, const std::string& prefix,
                  SubBlockParams<T>& s) {
    out.emplace_back(prefix + ".ln1g", &s.ln1_gain);
    out.emplace_back(prefix + ".ln1b", &s.ln1_bias);
    out.emplace_back(prefix + ".qkvw", &s.msa.qkv_w);
    out.emplace_back(prefix + ".qkvb", &s.msa.qkv_b);
    out.emplace_back(prefix + ".outw", &s.msa.out_w);
    out.emplace_back(prefix + ".outb", &s.msa.out_b);
    out.emplace_back(prefix + ".rpb", &s.msa.rel_bias);
    out.emplace_back(prefix + ".ln2g", &s.ln2_gain);
    out.emplace_back(prefix + ".ln2b", &s.ln2_bias);
    out.emplace_back(prefix + ".mlp1w", &s.mlp_w1);
    out.emplace_back(prefix + ".mlp1b", &s.mlp_b1);
    out.emplace_back(prefix + ".mlp2w", &s.mlp_w2);
    out.emplace_back(prefix + ".mlp2b", &s.mlp_b2);
}

template <class T>
void register_stage(std::vector<std::pair<std::string, Tensor<T>*>>& out, const std::string& stage,
                    std::vector<BlockPairParams<T>>& pairs) {
    for (size_t i = 0; i < pairs.size(); ++i) {
        register_sub(out, stage + std::to_string(i) + ".a", pairs[i].first);
        register_sub(out, stage + std::to_string(i) + ".b", pairs[i].second);
    }
}

}  // namespace

template <class T>
std::vector<std::pair<std::string, Tensor<T>*>> named_tensors(ModelParams<T>& p) {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    out.emplace_back("embed.w", &p.embed_w);
    out.emplace_back("embed.b", &p.embed_b);
    register_stage(out, "enc", p.encoder);
    out.emplace_back("merge.w", &p.merge_w);
    out.emplace_back("merge.b", &p.merge_b);
    register_stage(out, "core", p.core);
    out.emplace_back("expand.w", &p.expand_w);
    out.emplace_back("expand.b", &p.expand_b);
    register_stage(out, "dec", p.decoder);
    out.emplace_back("unembed.convw", &p.unembed_conv_w);
    out.emplace_back("unembed.convb", &p.unembed_conv_b);
    out.emplace_back("unembed.fcw", &p.unembed_fc_w);
    out.emplace_back("unembed.fcb", &p.unembed_fc_b);
    return out;
}

template <class T>
int64_t parameter_count(ModelParams<T>& p) {
    int64_t n = 0;
    for (auto& [name, t] : named_tensors(p)) n += t->size();
    return n;
}

namespace {

template <class T>
struct Initializer {
    Rng& rng;
    int64_t next_stream = 0;

    Tensor<T> normal(Shape shape, double sd) {
        RngStream st = rng.stream("init", next_stream++);
        Tensor<T> t(std::move(shape));
        T* d = t.data();
        for (int64_t i = 0; i < t.size(); ++i) d[i] = static_cast<T>(st.normal() * sd);
        return t;
    }
    Tensor<T> constant(Shape shape, double v) {
        ++next_stream;  // keep stream numbering independent of init kind
        return Tensor<T>::full(std::move(shape), static_cast<T>(v));
    }

    SubBlockParams<T> sub_block(int64_t d, int64_t heads, int64_t win_h, int64_t win_w) {
        SubBlockParams<T> s;
        s.ln1_gain = constant({d}, 1.0);
        s.ln1_bias = constant({d}, 0.0);
        s.msa.qkv_w = normal({d, 3 * d}, 0.02);
        s.msa.qkv_b = constant({3 * d}, 0.0);
        s.msa.out_w = normal({d, d}, 0.02);
        s.msa.out_b = constant({d}, 0.0);
        s.msa.rel_bias = normal({(2 * win_h - 1) * (2 * win_w - 1), heads}, 0.02);
        s.msa.heads = heads;
        s.ln2_gain = constant({d}, 1.0);
        s.ln2_bias = constant({d}, 0.0);
        s.mlp_w1 = normal({d, 4 * d}, 0.02);
        s.mlp_b1 = constant({4 * d}, 0.0);
        s.mlp_w2 = normal({4 * d, d}, 0.02);
        s.mlp_b2 = constant({d}, 0.0);
        return s;
    }
};

}  // namespace

template <class T>
ModelParams<T> init_model_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams<T> p;
    p.cfg = cfg;
    Initializer<T> init{rng};
    const int64_t d = cfg.embed_dim, c = cfg.n_channels;

    p.embed_w = init.normal({d, c, 2, 2, 2}, 0.02);
    p.embed_b = init.constant({d}, 0.0);

    const int64_t pairs_total =
        (cfg.encoder_blocks + cfg.core_blocks + cfg.decoder_blocks) / 2;
    int64_t pair_index = 0;
    // stochastic-depth rate ramps linearly with depth, as is conventional for
    // hierarchical window transformers
    auto pair_rate = [&](int64_t g) {
        if (cfg.droppath == 0.0) return 0.0;
        if (pairs_total == 1) return cfg.droppath;
        return cfg.droppath * static_cast<double>(g) / static_cast<double>(pairs_total - 1);
    };
    auto make_stage = [&](int64_t blocks, int64_t dim, int64_t heads) {
        std::vector<BlockPairParams<T>> stage;
        for (int64_t i = 0; i < blocks / 2; ++i) {
            BlockPairParams<T> bp;
            bp.first = init.sub_block(dim, heads, cfg.win_h, cfg.win_w);
            bp.second = init.sub_block(dim, heads, cfg.win_h, cfg.win_w);
            bp.droppath = pair_rate(pair_index++);
            stage.push_back(std::move(bp));
        }
        return stage;
    };

    p.encoder = make_stage(cfg.encoder_blocks, d, cfg.heads_encoder);
    p.merge_w = init.normal({4 * d, 2 * d}, 0.02);
    p.merge_b = init.constant({2 * d}, 0.0);
    p.core = make_stage(cfg.core_blocks, 2 * d, cfg.heads_core);
    p.expand_w = init.normal({2 * d, 4 * d}, 0.02);
    p.expand_b = init.constant({4 * d}, 0.0);
    p.decoder = make_stage(cfg.decoder_blocks, d, cfg.heads_decoder);

    p.unembed_conv_w = init.normal({d, d / 2, 2, 2}, 0.02);
    p.unembed_conv_b = init.constant({d / 2}, 0.0);
    // zero head: the untrained model emits exactly the persistence forecast
    p.unembed_fc_w = init.constant({d / 2, c}, 0.0);
    p.unembed_fc_b = init.constant({c}, 0.0);

    p.channel_mean.assign(static_cast<size_t>(c), 0.0);
    p.channel_std.assign(static_cast<size_t>(c), 1.0);
    return p;
}

template <class T>
Tensor<T> embed(const Tensor<T>& x_prev, const Tensor<T>& x_curr, const Tensor<T>& w,
                const Tensor<T>& b) {
    if (x_prev.shape() != x_curr.shape() || x_prev.rank() != 3)
        throw ShapeError("embed: states must share a [C,H,W] grid, got " +
                         shape_str(x_prev.shape()) + " and " + shape_str(x_curr.shape()));
    const int64_t c = x_prev.extent(0), h = x_prev.extent(1), wd = x_prev.extent(2);
    Tensor<T> stacked = concat<T>({reshape(x_prev, Shape{c, 1, h, wd}),
                                   reshape(x_curr, Shape{c, 1, h, wd})},
                                  1);                       // [C, 2, H, W]
    Tensor<T> z = conv3d(stacked, w, b, {2, 2, 2});         // [d, 1, H/2, W/2]
    return reshape(z, Shape{w.extent(0), h / 2, wd / 2});
}

template <class T>
Tensor<T> patch_merge(const Tensor<T>& latent, const Tensor<T>& w, const Tensor<T>& b) {
    if (latent.rank() != 3 || latent.extent(1) % 2 != 0 || latent.extent(2) % 2 != 0)
        throw ShapeError("patch_merge: need [d,h,w] with even h,w, got " +
                         shape_str(latent.shape()));
    const int64_t d = latent.extent(0), h = latent.extent(1), ww = latent.extent(2);
    Tensor<T> t = reshape(latent, Shape{d, h / 2, 2, ww / 2, 2});
    t = permute(t, {1, 3, 2, 4, 0});                 // [h/2, w/2, 2, 2, d]
    t = reshape(t, Shape{h / 2, ww / 2, 4 * d});
    t = linear(t, w, b);                             // [h/2, w/2, 2d]
    return permute(t, {2, 0, 1});
}

template <class T>
Tensor<T> patch_expand(const Tensor<T>& latent, const Tensor<T>& w, const Tensor<T>& b) {
    if (latent.rank() != 3) throw ShapeError("patch_expand: need [2d,h,w]");
    const int64_t d2 = latent.extent(0), h = latent.extent(1), ww = latent.extent(2);
    if (w.rank() != 2 || w.extent(0) != d2 || w.extent(1) % 4 != 0)
        throw ShapeError("patch_expand: weight " + shape_str(w.shape()) + " does not match latent " +
                         shape_str(latent.shape()));
    const int64_t d = w.extent(1) / 4;
    Tensor<T> t = permute(latent, {1, 2, 0});        // [h, w, 2d]
    t = linear(t, w, b);                             // [h, w, 4d]
    t = reshape(t, Shape{h, ww, 2, 2, d});
    t = permute(t, {4, 0, 2, 1, 3});                 // [d, h, 2, w, 2]
    return reshape(t, Shape{d, 2 * h, 2 * ww});
}

template <class T>
Tensor<T> unembed(const Tensor<T>& latent, const Tensor<T>& conv_w, const Tensor<T>& conv_b,
                  const Tensor<T>& fc_w, const Tensor<T>& fc_b) {
    Tensor<T> t = conv_transpose2d(latent, conv_w, conv_b, {2, 2});  // [d/2, H, W]
    t = permute(t, {1, 2, 0});
    t = linear(t, fc_w, fc_b);                                       // [H, W, C]
    return permute(t, {2, 0, 1});
}

template <class T>
Tensor<T> forward_step(ModelParams<T>& p, const ModelMasks& masks, const Tensor<T>& x_prev,
                       const Tensor<T>& x_curr, RngStream* dp_stream) {
    const auto& cfg = p.cfg;
    if (x_curr.rank() != 3 || x_curr.extent(0) != cfg.n_channels ||
        x_curr.extent(1) != cfg.n_lat || x_curr.extent(2) != cfg.n_lon)
        throw ShapeError("forward_step: state " + shape_str(x_curr.shape()) +
                         " does not match the configured grid");

    Tensor<T> z = embed(x_prev, x_curr, p.embed_w, p.embed_b);
    for (auto& bp : p.encoder)
        z = searth_block_pair(z, bp, masks.outer_unshifted, masks.outer_shifted, cfg.shift_h(),
                              cfg.shift_w(), dp_stream);
    Tensor<T> skip = z;
    z = patch_merge(z, p.merge_w, p.merge_b);
    for (auto& bp : p.core)
        z = searth_block_pair(z, bp, masks.inner_unshifted, masks.inner_shifted, cfg.shift_h(),
                              cfg.shift_w(), dp_stream);
    z = patch_expand(z, p.expand_w, p.expand_b);
    z = add(z, skip);
    for (auto& bp : p.decoder)
        z = searth_block_pair(z, bp, masks.outer_unshifted, masks.outer_shifted, cfg.shift_h(),
                              cfg.shift_w(), dp_stream);
    Tensor<T> delta = unembed(z, p.unembed_conv_w, p.unembed_conv_b, p.unembed_fc_w, p.unembed_fc_b);
    return add(x_curr, delta);
}

template <class T>
Tensor<T> normalize_channels(const Tensor<T>& x, const std::vector<double>& mean,
                             const std::vector<double>& sd) {
    if (x.rank() < 3) throw ShapeError("normalize_channels: need at least [C,H,W]");
    const int64_t c = x.extent(x.rank() - 3);
    if (static_cast<int64_t>(mean.size()) != c || static_cast<int64_t>(sd.size()) != c)
        throw ShapeError("normalize_channels: stats cover " + std::to_string(mean.size()) +
                         " channels, field has " + std::to_string(c));
    const int64_t plane = x.extent(x.rank() - 2) * x.extent(x.rank() - 1);
    const int64_t outer = x.size() / (c * plane);
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T m = static_cast<T>(mean[static_cast<size_t>(ch)]);
            const T s = static_cast<T>(sd[static_cast<size_t>(ch)]);
            if (s == T(0)) throw NumericError("normalize_channels: zero std for channel " +
                                              std::to_string(ch));
            const T* src = xd + (o * c + ch) * plane;
            T* dst = od + (o * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - m) / s;
        }
    return out;
}

template <class T>
Tensor<T> denormalize_channels(const Tensor<T>& x, const std::vector<double>& mean,
                               const std::vector<double>& sd) {
    if (x.rank() < 3) throw ShapeError("denormalize_channels: need at least [C,H,W]");
    const int64_t c = x.extent(x.rank() - 3);
    if (static_cast<int64_t>(mean.size()) != c || static_cast<int64_t>(sd.size()) != c)
        throw ShapeError("denormalize_channels: stats cover " + std::to_string(mean.size()) +
                         " channels, field has " + std::to_string(c));
    const int64_t plane = x.extent(x.rank() - 2) * x.extent(x.rank() - 1);
    const int64_t outer = x.size() / (c * plane);
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T m = static_cast<T>(mean[static_cast<size_t>(ch)]);
            const T s = static_cast<T>(sd[static_cast<size_t>(ch)]);
            const T* src = xd + (o * c + ch) * plane;
            T* dst = od + (o * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * s + m;
        }
    return out;
}

#define SEARTH_INSTANTIATE_MODEL(T)                                                             \
    template std::vector<std::pair<std::string, Tensor<T>*>> named_tensors<T>(ModelParams<T>&); \
    template int64_t parameter_count<T>(ModelParams<T>&);                                       \
    template ModelParams<T> init_model_params<T>(const ModelConfig&, Rng&);                     \
    template Tensor<T> embed<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                const Tensor<T>&);                                              \
    template Tensor<T> patch_merge<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
    template Tensor<T> patch_expand<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template Tensor<T> unembed<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                  const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> forward_step<T>(ModelParams<T>&, const ModelMasks&, const Tensor<T>&,    \
                                       const Tensor<T>&, RngStream*);                           \
    template Tensor<T> normalize_channels<T>(const Tensor<T>&, const std::vector<double>&,      \
                                             const std::vector<double>&);                       \
    template Tensor<T> denormalize_channels<T>(const Tensor<T>&, const std::vector<double>&,    \
                                               const std::vector<double>&);

SEARTH_INSTANTIATE_MODEL(float)
SEARTH_INSTANTIATE_MODEL(double)

}  // namespace searth
