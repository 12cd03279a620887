#include "searth/geometry.hpp"

#include <cmath>

namespace searth {

MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "earth") return MaskMode::earth;
    if (s == "planar") return MaskMode::planar;
    throw ConfigError("mask mode must be 'earth' or 'planar', got '" + s + "'");
}

const char* mask_mode_name(MaskMode m) {
    return m == MaskMode::earth ? "earth" : "planar";
}

LatLonGrid LatLonGrid::centered(int64_t h, int64_t w) {
    if (h <= 0 || w <= 0) throw ConfigError("grid extents must be positive");
    LatLonGrid g;
    g.n_lat = h;
    g.n_lon = w;
    g.latitudes.resize(static_cast<size_t>(h));
    for (int64_t i = 0; i < h; ++i)
        g.latitudes[static_cast<size_t>(i)] =
            90.0 - (static_cast<double>(i) + 0.5) * 180.0 / static_cast<double>(h);
    return g;
}

std::vector<double> latitude_weights(const std::vector<double>& latitudes_deg) {
    if (latitudes_deg.empty()) throw ConfigError("latitude_weights: empty latitude list");
    const double deg = M_PI / 180.0;
    double total = 0.0;
    std::vector<double> w(latitudes_deg.size());
    for (size_t i = 0; i < latitudes_deg.size(); ++i) {
        if (std::fabs(latitudes_deg[i]) > 90.0)
            throw ConfigError("latitude_weights: |" + std::to_string(latitudes_deg[i]) + "| > 90");
        w[i] = std::cos(latitudes_deg[i] * deg);
        total += w[i];
    }
    const double n = static_cast<double>(latitudes_deg.size());
    for (double& x : w) x *= n / total;
    return w;
}

namespace {
// Row band of a post-roll row index: 0 for untouched rows, 1 for rows of the
// final window band that did not wrap past the pole, 2 for rows that did.
int band(int64_t i, int64_t extent, int64_t win, int64_t shift) {
    if (i < extent - win) return 0;
    if (i < extent - shift) return 1;
    return 2;
}
}  // namespace

AttentionMask earth_attention_mask(int64_t h, int64_t w, int64_t win_h, int64_t win_w,
                                   int64_t shift_h, int64_t shift_w, MaskMode mode) {
    if (win_h <= 0 || win_w <= 0 || h % win_h != 0 || w % win_w != 0)
        throw ConfigError("attention mask: windows " + std::to_string(win_h) + "x" +
                          std::to_string(win_w) + " do not tile " + std::to_string(h) + "x" +
                          std::to_string(w));
    if (shift_h < 0 || shift_h >= win_h || shift_w < 0 || shift_w >= win_w)
        throw ConfigError("attention mask: shifts must satisfy 0 <= shift < window");
    const int64_t nh = h / win_h, nw = w / win_w;
    AttentionMask m;
    m.num_windows = nh * nw;
    m.tokens = win_h * win_w;
    m.win_h = win_h;
    m.win_w = win_w;
    m.blocked.assign(static_cast<size_t>(m.num_windows * m.tokens * m.tokens), 0);
    if (shift_h == 0 && shift_w == 0) return m;

    // region of each grid cell in the rolled layout
    std::vector<int> region(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            const int rb = band(i, h, win_h, shift_h);
            region[static_cast<size_t>(i * w + j)] =
                mode == MaskMode::earth ? rb : 3 * rb + band(j, w, win_w, shift_w);
        }
    for (int64_t wy = 0; wy < nh; ++wy)
        for (int64_t wx = 0; wx < nw; ++wx) {
            const int64_t wi = wy * nw + wx;
            for (int64_t a = 0; a < m.tokens; ++a) {
                const int64_t ia = wy * win_h + a / win_w, ja = wx * win_w + a % win_w;
                const int ra = region[static_cast<size_t>(ia * w + ja)];
                for (int64_t b = 0; b < m.tokens; ++b) {
                    const int64_t ib = wy * win_h + b / win_w, jb = wx * win_w + b % win_w;
                    if (region[static_cast<size_t>(ib * w + jb)] != ra)
                        m.blocked[static_cast<size_t>((wi * m.tokens + a) * m.tokens + b)] = 1;
                }
            }
        }
    return m;
}

void write_mask_csv(std::ostream& os, const AttentionMask& m) {
    os << "window,q,k,blocked\n";
    for (int64_t w = 0; w < m.num_windows; ++w)
        for (int64_t q = 0; q < m.tokens; ++q)
            for (int64_t k = 0; k < m.tokens; ++k)
                os << w << ',' << q << ',' << k << ',' << (m.is_blocked(w, q, k) ? 1 : 0) << '\n';
}

template <class T>
Tensor<T> regrid_quarter_to_one(const Tensor<T>& field) {
    const bool batched = field.rank() == 3;
    if (!(batched || field.rank() == 2))
        throw ShapeError("regrid: need [721,1440] or [C,721,1440], got " + shape_str(field.shape()));
    const int64_t c = batched ? field.extent(0) : 1;
    const int64_t h = field.extent(batched ? 1 : 0), w = field.extent(batched ? 2 : 1);
    if (h != 721 || w != 1440)
        throw ShapeError("regrid: need 721x1440 input, got " + shape_str(field.shape()));
    const int64_t oh = 180, ow = 360;
    Shape oshape = batched ? Shape{c, oh, ow} : Shape{oh, ow};
    Tensor<T> out(oshape);
    const T* xd = field.data();
    T* od = out.data();
    for (int64_t ch = 0; ch < c; ++ch) {
        const T* plane = xd + ch * h * w;
        T* oplane = od + ch * oh * ow;
        for (int64_t r = 0; r < oh; ++r)
            for (int64_t q = 0; q < ow; ++q) {
                T acc = T(0);
                for (int64_t dy = 0; dy < 4; ++dy)
                    for (int64_t dx = 0; dx < 4; ++dx)
                        acc += plane[(r * 4 + dy) * w + q * 4 + dx];
                oplane[r * ow + q] = acc / T(16);
            }
    }
    return out;
}

template Tensor<float> regrid_quarter_to_one<float>(const Tensor<float>&);
template Tensor<double> regrid_quarter_to_one<double>(const Tensor<double>&);

}  // namespace searth
