#include "searth/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace searth {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) {
        if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
    return st;
}

// ---- Tape ------------------------------------------------------------------

namespace {
template <class T>
Tape<T>*& active_tape() {
    thread_local Tape<T>* current = nullptr;
    return current;
}
uint64_t next_tape_id() {
    static thread_local uint64_t n = 0;
    return ++n;
}
}  // namespace

template <class T>
Tape<T>::Tape() : id_(next_tape_id()) {
    previous_ = active_tape<T>();
    active_tape<T>() = this;
}

template <class T>
Tape<T>::~Tape() {
    active_tape<T>() = previous_;
}

template <class T>
Tape<T>* Tape<T>::active() {
    return active_tape<T>();
}

template <class T>
void Tape<T>::watch(Tensor<T>& x) {
    if (is_current(x)) return;
    Node n;
    n.op = "leaf";
    n.numel = x.size();
    n.leaf = true;
    nodes_.push_back(std::move(n));
    x.tape_id_ = id_;
    x.epoch_ = epoch_;
    x.node_ = static_cast<int>(nodes_.size()) - 1;
    peak_ = std::max(peak_, live_nodes());
}

template <class T>
void Tape<T>::record(Tensor<T>& out, const char* op, const std::vector<const Tensor<T>*>& inputs,
                     BackwardFn back) {
    Node n;
    n.op = op;
    n.numel = out.size();
    n.leaf = false;
    n.back = std::move(back);
    n.parents.reserve(inputs.size());
    for (const Tensor<T>* in : inputs) n.parents.push_back(is_current(*in) ? in->node_ : -1);
    nodes_.push_back(std::move(n));
    out.tape_id_ = id_;
    out.epoch_ = epoch_;
    out.node_ = static_cast<int>(nodes_.size()) - 1;
    peak_ = std::max(peak_, live_nodes());
}

template <class T>
void Tape<T>::clear() {
    nodes_.clear();
    ++epoch_;
}

template <class T>
GradMap<T> Tape<T>::backward(const Tensor<T>& loss) {
    if (loss.size() != 1) throw NumericError("backward: loss must be a scalar");
    GradMap<T> gm;
    gm.tape_id_ = id_;
    gm.epoch_ = epoch_;
    if (!is_current(loss)) {
        clear();
        return gm;
    }
    std::vector<std::vector<T>> grads(nodes_.size());
    grads[static_cast<size_t>(loss.node_)].assign(1, T(1));
    for (int i = loss.node_; i >= 0; --i) {
        auto& gi = grads[static_cast<size_t>(i)];
        if (gi.empty()) continue;
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.leaf && n.back) {
            std::vector<T*> gp(n.parents.size(), nullptr);
            for (size_t p = 0; p < n.parents.size(); ++p) {
                int pi = n.parents[p];
                if (pi < 0) continue;
                auto& pg = grads[static_cast<size_t>(pi)];
                if (pg.empty()) pg.assign(static_cast<size_t>(nodes_[static_cast<size_t>(pi)].numel), T(0));
                gp[p] = pg.data();
            }
            n.back(gi.data(), gp);
            n.back = nullptr;  // release saved activations as soon as consumed
        }
        if (!n.leaf) std::vector<T>().swap(gi);
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].leaf && !grads[i].empty()) gm.grads_.emplace(static_cast<int>(i), std::move(grads[i]));
    }
    clear();
    return gm;
}

template <class T>
Tensor<T> GradMap<T>::of(const Tensor<T>& x) const {
    Tensor<T> g(x.shape());
    if (x.tape_id_ == tape_id_ && x.epoch_ == epoch_ && x.node_ >= 0) {
        auto it = grads_.find(x.node_);
        if (it != grads_.end()) {
            if (static_cast<int64_t>(it->second.size()) != g.size())
                throw ShapeError("gradient size does not match tensor");
            std::copy(it->second.begin(), it->second.end(), g.data());
        }
    }
    return g;
}

template <class T>
bool GradMap<T>::has(const Tensor<T>& x) const {
    return x.tape_id_ == tape_id_ && x.epoch_ == epoch_ && x.node_ >= 0 &&
           grads_.find(x.node_) != grads_.end();
}

// ---- op helpers --------------------------------------------------------------

namespace {

template <class T>
bool recording(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tp = Tape<T>::active();
    if (!tp) return false;
    for (const Tensor<T>* in : inputs)
        if (tp->is_current(*in)) return true;
    return false;
}

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

// Decomposes shape into [outer, extent(axis), inner] for axis-wise ops.
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& e, int64_t& inner) {
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    e = s[static_cast<size_t>(axis)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

// ---- elementwise -------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a, b);
    Tensor<T> out(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* od = out.data();
    const int64_t n = out.size();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = ad[i] + bd[i];
    });
    if (recording<T>({&a, &b})) {
        Tape<T>::active()->record(out, "add", {&a, &b},
                                  [n](const T* g, const std::vector<T*>& gp) {
                                      for (int64_t i = 0; i < n; ++i) {
                                          if (gp[0]) gp[0][i] += g[i];
                                          if (gp[1]) gp[1][i] += g[i];
                                      }
                                  });
    }
    return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("sub", a, b);
    Tensor<T> out(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* od = out.data();
    const int64_t n = out.size();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = ad[i] - bd[i];
    });
    if (recording<T>({&a, &b})) {
        Tape<T>::active()->record(out, "sub", {&a, &b},
                                  [n](const T* g, const std::vector<T*>& gp) {
                                      for (int64_t i = 0; i < n; ++i) {
                                          if (gp[0]) gp[0][i] += g[i];
                                          if (gp[1]) gp[1][i] -= g[i];
                                      }
                                  });
    }
    return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a, b);
    Tensor<T> out(a.shape());
    const T* ad = a.data();
    const T* bd = b.data();
    T* od = out.data();
    const int64_t n = out.size();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = ad[i] * bd[i];
    });
    if (recording<T>({&a, &b})) {
        auto as = a.storage();
        auto bs = b.storage();
        Tape<T>::active()->record(out, "mul", {&a, &b},
                                  [n, as, bs](const T* g, const std::vector<T*>& gp) {
                                      const T* av = as->data();
                                      const T* bv = bs->data();
                                      for (int64_t i = 0; i < n; ++i) {
                                          if (gp[0]) gp[0][i] += g[i] * bv[i];
                                          if (gp[1]) gp[1][i] += g[i] * av[i];
                                      }
                                  });
    }
    return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, double c) {
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    const int64_t n = out.size();
    const T cv = static_cast<T>(c);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = xd[i] * cv;
    });
    if (recording<T>({&x})) {
        Tape<T>::active()->record(out, "scale", {&x},
                                  [n, cv](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      for (int64_t i = 0; i < n; ++i) gp[0][i] += g[i] * cv;
                                  });
    }
    return out;
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    const int64_t n = out.size();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = xd[i] < T(0) ? -xd[i] : xd[i];
    });
    if (recording<T>({&x})) {
        auto xs = x.storage();
        Tape<T>::active()->record(out, "abs", {&x},
                                  [n, xs](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      const T* xv = xs->data();
                                      for (int64_t i = 0; i < n; ++i) {
                                          if (xv[i] > T(0)) gp[0][i] += g[i];
                                          else if (xv[i] < T(0)) gp[0][i] -= g[i];
                                      }
                                  });
    }
    return out;
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    const int64_t n = out.size();
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const double v = static_cast<double>(xd[i]);
            od[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))));
        }
    });
    if (recording<T>({&x})) {
        auto xs = x.storage();
        Tape<T>::active()->record(out, "gelu", {&x},
                                  [n, xs](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      const T* xv = xs->data();
                                      const double inv_sqrt_2pi = 0.3989422804014327;
                                      for (int64_t i = 0; i < n; ++i) {
                                          const double v = static_cast<double>(xv[i]);
                                          const double cdf = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
                                          const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                                          gp[0][i] += g[i] * static_cast<T>(cdf + v * pdf);
                                      }
                                  });
    }
    return out;
}

// ---- reductions --------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    const T* xd = x.data();
    const int64_t n = x.size();
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) acc += xd[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (recording<T>({&x})) {
        Tape<T>::active()->record(out, "sum", {&x},
                                  [n](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      for (int64_t i = 0; i < n; ++i) gp[0][i] += g[0];
                                  });
    }
    return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.size() == 0) throw ShapeError("mean: empty tensor");
    const T* xd = x.data();
    const int64_t n = x.size();
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) acc += xd[i];
    Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
    if (recording<T>({&x})) {
        Tape<T>::active()->record(out, "mean", {&x},
                                  [n](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      const T gv = g[0] / static_cast<T>(n);
                                      for (int64_t i = 0; i < n; ++i) gp[0][i] += gv;
                                  });
    }
    return out;
}

// ---- shape ops ---------------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    Tensor<T> out = x.with_shape(std::move(shape));  // shares the buffer
    if (recording<T>({&x})) {
        const int64_t n = x.size();
        Tape<T>::active()->record(out, "reshape", {&x},
                                  [n](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      for (int64_t i = 0; i < n; ++i) gp[0][i] += g[i];
                                  });
    }
    return out;
}

template <class T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r)
        throw ShapeError("permute: got " + std::to_string(axes.size()) + " axes for rank " +
                         std::to_string(r));
    std::vector<bool> seen(static_cast<size_t>(r), false);
    Shape oshape(static_cast<size_t>(r));
    for (int k = 0; k < r; ++k) {
        const int a = axes[static_cast<size_t>(k)];
        if (a < 0 || a >= r || seen[static_cast<size_t>(a)])
            throw ShapeError("permute: invalid axis list");
        seen[static_cast<size_t>(a)] = true;
        oshape[static_cast<size_t>(k)] = x.extent(a);
    }
    Tensor<T> out(oshape);
    const auto in_strides = row_major_strides(x.shape());
    const auto out_strides = row_major_strides(oshape);
    const T* xd = x.data();
    T* od = out.data();
    const int64_t n = out.size();
    // src stride to advance when the k-th output coordinate increments
    std::vector<int64_t> src_stride(static_cast<size_t>(r));
    for (int k = 0; k < r; ++k)
        src_stride[static_cast<size_t>(k)] = in_strides[static_cast<size_t>(axes[static_cast<size_t>(k)])];
    auto src_index = [&](int64_t oi) {
        int64_t si = 0;
        for (int k = 0; k < r; ++k) {
            const int64_t c = (oi / out_strides[static_cast<size_t>(k)]) % oshape[static_cast<size_t>(k)];
            si += c * src_stride[static_cast<size_t>(k)];
        }
        return si;
    };
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = xd[src_index(i)];
    });
    if (recording<T>({&x})) {
        Tape<T>::active()->record(
            out, "permute", {&x},
            [n, r, oshape, out_strides, src_stride](const T* g, const std::vector<T*>& gp) {
                if (!gp[0]) return;
                for (int64_t i = 0; i < n; ++i) {
                    int64_t si = 0;
                    for (int k = 0; k < r; ++k) {
                        const int64_t c =
                            (i / out_strides[static_cast<size_t>(k)]) % oshape[static_cast<size_t>(k)];
                        si += c * src_stride[static_cast<size_t>(k)];
                    }
                    gp[0][si] += g[i];
                }
            });
    }
    return out;
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != parts[0].rank()) throw ShapeError("concat: rank mismatch");
        for (int a = 0; a < p.rank(); ++a) {
            if (a == axis) continue;
            if (p.extent(a) != s0[static_cast<size_t>(a)])
                throw ShapeError("concat: extent mismatch on axis " + std::to_string(a));
        }
        total += p.extent(axis);
    }
    Shape oshape = s0;
    oshape[static_cast<size_t>(axis)] = total;
    Tensor<T> out(oshape);
    int64_t outer, e_out, inner;
    axis_split(oshape, axis, outer, e_out, inner);
    T* od = out.data();
    int64_t offset = 0;
    std::vector<int64_t> offsets;
    for (const auto& p : parts) {
        const int64_t ep = p.extent(axis);
        const T* pd = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(od + (o * e_out + offset) * inner, pd + o * ep * inner,
                        static_cast<size_t>(ep * inner) * sizeof(T));
        offsets.push_back(offset);
        offset += ep;
    }
    std::vector<const Tensor<T>*> ins;
    for (const auto& p : parts) ins.push_back(&p);
    if (Tape<T>::active()) {
        bool any = false;
        for (const auto& p : parts) any = any || Tape<T>::active()->is_current(p);
        if (any) {
            std::vector<int64_t> extents;
            for (const auto& p : parts) extents.push_back(p.extent(axis));
            Tape<T>::active()->record(
                out, "concat", ins,
                [outer, e_out, inner, offsets, extents](const T* g, const std::vector<T*>& gp) {
                    for (size_t p = 0; p < gp.size(); ++p) {
                        if (!gp[p]) continue;
                        const int64_t ep = extents[p];
                        for (int64_t o = 0; o < outer; ++o) {
                            const T* src = g + (o * e_out + offsets[p]) * inner;
                            T* dst = gp[p] + o * ep * inner;
                            for (int64_t i = 0; i < ep * inner; ++i) dst[i] += src[i];
                        }
                    }
                });
        }
    }
    return out;
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
    int64_t outer, e, inner;
    axis_split(x.shape(), axis, outer, e, inner);
    if (start < 0 || len < 0 || start + len > e)
        throw ShapeError("slice: [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of range for extent " + std::to_string(e));
    Shape oshape = x.shape();
    oshape[static_cast<size_t>(axis)] = len;
    Tensor<T> out(oshape);
    const T* xd = x.data();
    T* od = out.data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(od + o * len * inner, xd + (o * e + start) * inner,
                    static_cast<size_t>(len * inner) * sizeof(T));
    if (recording<T>({&x})) {
        Tape<T>::active()->record(out, "slice", {&x},
                                  [outer, e, inner, start, len](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      for (int64_t o = 0; o < outer; ++o) {
                                          const T* src = g + o * len * inner;
                                          T* dst = gp[0] + (o * e + start) * inner;
                                          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                                      }
                                  });
    }
    return out;
}

template <class T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, const std::vector<int64_t>& sizes) {
    int64_t total = 0;
    for (int64_t s : sizes) total += s;
    if (total != x.extent(axis)) throw ShapeError("split: sizes do not cover axis");
    std::vector<Tensor<T>> out;
    int64_t at = 0;
    for (int64_t s : sizes) {
        out.push_back(slice(x, axis, at, s));
        at += s;
    }
    return out;
}

template <class T>
Tensor<T> roll(const Tensor<T>& x, int axis, int64_t shift) {
    int64_t outer, e, inner;
    axis_split(x.shape(), axis, outer, e, inner);
    if (e == 0) return x.detach();
    const int64_t s = ((shift % e) + e) % e;
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    parallel_for(outer, [&](int64_t lo, int64_t hi) {
        for (int64_t o = lo; o < hi; ++o) {
            for (int64_t i = 0; i < e; ++i) {
                const int64_t src = (i - s + e) % e;
                std::memcpy(od + (o * e + i) * inner, xd + (o * e + src) * inner,
                            static_cast<size_t>(inner) * sizeof(T));
            }
        }
    });
    if (recording<T>({&x})) {
        Tape<T>::active()->record(out, "roll", {&x},
                                  [outer, e, inner, s](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      for (int64_t o = 0; o < outer; ++o)
                                          for (int64_t i = 0; i < e; ++i) {
                                              const T* src = g + (o * e + ((i + s) % e)) * inner;
                                              T* dst = gp[0] + (o * e + i) * inner;
                                              for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                                          }
                                  });
    }
    return out;
}

// ---- linear algebra ----------------------------------------------------------

namespace {
// C[m,n] += A[m,k] * B[k,n], registers walk rows of B for locality
template <class T>
void gemm_acc(const T* A, const T* B, T* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        T* crow = C + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const T aik = A[i * k + kk];
            if (aik == T(0)) continue;
            const T* brow = B + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}
}  // namespace

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
        throw ShapeError("matmul: ranks " + std::to_string(a.rank()) + " and " +
                         std::to_string(b.rank()));
    const int r = a.rank();
    int64_t batch = 1;
    for (int i = 0; i < r - 2; ++i) {
        if (a.extent(i) != b.extent(i))
            throw ShapeError("matmul: batch extent mismatch on axis " + std::to_string(i));
        batch *= a.extent(i);
    }
    const int64_t m = a.extent(r - 2), k = a.extent(r - 1);
    const int64_t k2 = b.extent(r - 2), n = b.extent(r - 1);
    if (k != k2)
        throw ShapeError("matmul: inner extents " + std::to_string(k) + " vs " + std::to_string(k2));
    Shape oshape(a.shape().begin(), a.shape().end() - 2);
    oshape.push_back(m);
    oshape.push_back(n);
    Tensor<T> out(oshape);
    const T* ad = a.data();
    const T* bd = b.data();
    T* od = out.data();
    parallel_for(batch, [&](int64_t lo, int64_t hi) {
        for (int64_t bb = lo; bb < hi; ++bb)
            gemm_acc(ad + bb * m * k, bd + bb * k * n, od + bb * m * n, m, k, n);
    });
    if (recording<T>({&a, &b})) {
        auto as = a.storage();
        auto bs = b.storage();
        Tape<T>::active()->record(
            out, "matmul", {&a, &b},
            [as, bs, batch, m, k, n](const T* g, const std::vector<T*>& gp) {
                const T* av = as->data();
                const T* bv = bs->data();
                if (gp[0]) {
                    // dA[i,kk] = sum_j g[i,j] * B[kk,j]
                    parallel_for(batch, [&](int64_t lo, int64_t hi) {
                        for (int64_t bb = lo; bb < hi; ++bb) {
                            const T* gb = g + bb * m * n;
                            const T* Bb = bv + bb * k * n;
                            T* da = gp[0] + bb * m * k;
                            for (int64_t i = 0; i < m; ++i)
                                for (int64_t kk = 0; kk < k; ++kk) {
                                    const T* grow = gb + i * n;
                                    const T* brow = Bb + kk * n;
                                    T acc = T(0);
                                    for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                                    da[i * k + kk] += acc;
                                }
                        }
                    });
                }
                if (gp[1]) {
                    // dB[kk,j] = sum_i A[i,kk] * g[i,j]
                    parallel_for(batch, [&](int64_t lo, int64_t hi) {
                        for (int64_t bb = lo; bb < hi; ++bb) {
                            const T* gb = g + bb * m * n;
                            const T* Ab = av + bb * m * k;
                            T* db = gp[1] + bb * k * n;
                            for (int64_t i = 0; i < m; ++i)
                                for (int64_t kk = 0; kk < k; ++kk) {
                                    const T aik = Ab[i * k + kk];
                                    if (aik == T(0)) continue;
                                    const T* grow = gb + i * n;
                                    T* drow = db + kk * n;
                                    for (int64_t j = 0; j < n; ++j) drow[j] += aik * grow[j];
                                }
                        }
                    });
                }
            });
    }
    return out;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1)
        throw ShapeError("linear: need x rank>=1, w rank 2, b rank 1");
    const int64_t in = x.extent(x.rank() - 1);
    const int64_t wout = w.extent(1);
    if (w.extent(0) != in || b.extent(0) != wout)
        throw ShapeError("linear: x " + shape_str(x.shape()) + ", w " + shape_str(w.shape()) +
                         ", b " + shape_str(b.shape()));
    const int64_t rows = x.size() / std::max<int64_t>(in, 1);
    Shape oshape = x.shape();
    oshape.back() = wout;
    Tensor<T> out(oshape);
    const T* xd = x.data();
    const T* wd = w.data();
    const T* bd = b.data();
    T* od = out.data();
    parallel_for(rows, [&](int64_t lo, int64_t hi) {
        for (int64_t rr = lo; rr < hi; ++rr) {
            T* orow = od + rr * wout;
            for (int64_t j = 0; j < wout; ++j) orow[j] = bd[j];
            gemm_acc(xd + rr * in, wd, orow, 1, in, wout);
        }
    });
    if (recording<T>({&x, &w, &b})) {
        auto xs = x.storage();
        auto ws = w.storage();
        Tape<T>::active()->record(
            out, "linear", {&x, &w, &b},
            [xs, ws, rows, in, wout](const T* g, const std::vector<T*>& gp) {
                const T* xv = xs->data();
                const T* wv = ws->data();
                if (gp[0]) {
                    parallel_for(rows, [&](int64_t lo, int64_t hi) {
                        for (int64_t rr = lo; rr < hi; ++rr) {
                            const T* grow = g + rr * wout;
                            T* dx = gp[0] + rr * in;
                            for (int64_t i = 0; i < in; ++i) {
                                const T* wrow = wv + i * wout;
                                T acc = T(0);
                                for (int64_t j = 0; j < wout; ++j) acc += grow[j] * wrow[j];
                                dx[i] += acc;
                            }
                        }
                    });
                }
                if (gp[1]) {
                    parallel_for(in, [&](int64_t lo, int64_t hi) {
                        for (int64_t i = lo; i < hi; ++i) {
                            T* dwrow = gp[1] + i * wout;
                            for (int64_t rr = 0; rr < rows; ++rr) {
                                const T xv_ri = xv[rr * in + i];
                                if (xv_ri == T(0)) continue;
                                const T* grow = g + rr * wout;
                                for (int64_t j = 0; j < wout; ++j) dwrow[j] += xv_ri * grow[j];
                            }
                        }
                    });
                }
                if (gp[2]) {
                    for (int64_t rr = 0; rr < rows; ++rr) {
                        const T* grow = g + rr * wout;
                        for (int64_t j = 0; j < wout; ++j) gp[2][j] += grow[j];
                    }
                }
            });
    }
    return out;
}

template <class T>
Tensor<T> softmax_last(const Tensor<T>& x) {
    if (x.rank() < 1) throw ShapeError("softmax: scalar input");
    const int64_t n = x.extent(x.rank() - 1);
    if (n == 0) throw ShapeError("softmax: empty last axis");
    const int64_t rows = x.size() / n;
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    T* od = out.data();
    parallel_for(rows, [&](int64_t lo, int64_t hi) {
        for (int64_t rr = lo; rr < hi; ++rr) {
            const T* xr = xd + rr * n;
            T* orow = od + rr * n;
            T mx = xr[0];
            for (int64_t i = 1; i < n; ++i) mx = std::max(mx, xr[i]);
            T s = T(0);
            for (int64_t i = 0; i < n; ++i) {
                orow[i] = std::exp(xr[i] - mx);
                s += orow[i];
            }
            const T inv = T(1) / s;
            for (int64_t i = 0; i < n; ++i) orow[i] *= inv;
        }
    });
    if (recording<T>({&x})) {
        auto ys = out.storage();
        Tape<T>::active()->record(out, "softmax", {&x},
                                  [ys, rows, n](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      const T* yv = ys->data();
                                      parallel_for(rows, [&](int64_t lo, int64_t hi) {
                                          for (int64_t rr = lo; rr < hi; ++rr) {
                                              const T* yr = yv + rr * n;
                                              const T* gr = g + rr * n;
                                              T* dx = gp[0] + rr * n;
                                              T dot = T(0);
                                              for (int64_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
                                              for (int64_t i = 0; i < n; ++i)
                                                  dx[i] += yr[i] * (gr[i] - dot);
                                          }
                                      });
                                  });
    }
    return out;
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, double eps) {
    if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
    const int64_t c = x.extent(x.rank() - 1);
    if (gain.rank() != 1 || bias.rank() != 1 || gain.extent(0) != c || bias.extent(0) != c)
        throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(c) + "]");
    const int64_t rows = x.size() / c;
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    const T* gd = gain.data();
    const T* bd = bias.data();
    T* od = out.data();
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.size()));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    T* hd = xhat->data();
    T* ivd = inv_std->data();
    parallel_for(rows, [&](int64_t lo, int64_t hi) {
        for (int64_t rr = lo; rr < hi; ++rr) {
            const T* xr = xd + rr * c;
            T mu = T(0);
            for (int64_t i = 0; i < c; ++i) mu += xr[i];
            mu /= static_cast<T>(c);
            T var = T(0);
            for (int64_t i = 0; i < c; ++i) {
                const T d = xr[i] - mu;
                var += d * d;
            }
            var /= static_cast<T>(c);
            const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
            ivd[rr] = inv;
            T* hr = hd + rr * c;
            T* orow = od + rr * c;
            for (int64_t i = 0; i < c; ++i) {
                hr[i] = (xr[i] - mu) * inv;
                orow[i] = gd[i] * hr[i] + bd[i];
            }
        }
    });
    if (recording<T>({&x, &gain, &bias})) {
        auto gs = gain.storage();
        Tape<T>::active()->record(
            out, "layer_norm", {&x, &gain, &bias},
            [xhat, inv_std, gs, rows, c](const T* g, const std::vector<T*>& gp) {
                const T* hv = xhat->data();
                const T* iv = inv_std->data();
                const T* gainv = gs->data();
                if (gp[0]) {
                    parallel_for(rows, [&](int64_t lo, int64_t hi) {
                        for (int64_t rr = lo; rr < hi; ++rr) {
                            const T* hr = hv + rr * c;
                            const T* gr = g + rr * c;
                            T* dx = gp[0] + rr * c;
                            T m1 = T(0), m2 = T(0);
                            for (int64_t i = 0; i < c; ++i) {
                                const T dyh = gr[i] * gainv[i];
                                m1 += dyh;
                                m2 += dyh * hr[i];
                            }
                            m1 /= static_cast<T>(c);
                            m2 /= static_cast<T>(c);
                            for (int64_t i = 0; i < c; ++i) {
                                const T dyh = gr[i] * gainv[i];
                                dx[i] += iv[rr] * (dyh - m1 - hr[i] * m2);
                            }
                        }
                    });
                }
                if (gp[1] || gp[2]) {
                    for (int64_t rr = 0; rr < rows; ++rr) {
                        const T* hr = hv + rr * c;
                        const T* gr = g + rr * c;
                        for (int64_t i = 0; i < c; ++i) {
                            if (gp[1]) gp[1][i] += gr[i] * hr[i];
                            if (gp[2]) gp[2][i] += gr[i];
                        }
                    }
                }
            });
    }
    return out;
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int>& idx) {
    if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
    const int64_t r = table.extent(0), c = table.extent(1);
    for (int i : idx)
        if (i < 0 || i >= r)
            throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range " +
                             std::to_string(r));
    const int64_t n = static_cast<int64_t>(idx.size());
    Tensor<T> out(Shape{n, c});
    const T* td = table.data();
    T* od = out.data();
    for (int64_t i = 0; i < n; ++i)
        std::memcpy(od + i * c, td + static_cast<int64_t>(idx[static_cast<size_t>(i)]) * c,
                    static_cast<size_t>(c) * sizeof(T));
    if (recording<T>({&table})) {
        Tape<T>::active()->record(out, "gather_rows", {&table},
                                  [idx, n, c](const T* g, const std::vector<T*>& gp) {
                                      if (!gp[0]) return;
                                      for (int64_t i = 0; i < n; ++i) {
                                          T* dst = gp[0] + static_cast<int64_t>(idx[static_cast<size_t>(i)]) * c;
                                          const T* src = g + i * c;
                                          for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
                                      }
                                  });
    }
    return out;
}

template <class T>
Tensor<T> add_bcast(const Tensor<T>& x, const Tensor<T>& y) {
    if (x.rank() != y.rank()) throw ShapeError("add_bcast: rank mismatch");
    const int r = x.rank();
    const auto xst = row_major_strides(x.shape());
    const auto yst_full = row_major_strides(y.shape());
    std::vector<int64_t> yst(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        if (y.extent(i) == x.extent(i)) yst[static_cast<size_t>(i)] = yst_full[static_cast<size_t>(i)];
        else if (y.extent(i) == 1) yst[static_cast<size_t>(i)] = 0;
        else
            throw ShapeError("add_bcast: " + shape_str(y.shape()) + " does not broadcast to " +
                             shape_str(x.shape()));
    }
    Tensor<T> out(x.shape());
    const T* xd = x.data();
    const T* yd = y.data();
    T* od = out.data();
    const int64_t n = out.size();
    const Shape xs = x.shape();
    auto y_index = [&](int64_t i) {
        int64_t yi = 0;
        for (int k = 0; k < r; ++k) {
            const int64_t c = (i / xst[static_cast<size_t>(k)]) % xs[static_cast<size_t>(k)];
            yi += c * yst[static_cast<size_t>(k)];
        }
        return yi;
    };
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) od[i] = xd[i] + yd[y_index(i)];
    });
    if (recording<T>({&x, &y})) {
        Tape<T>::active()->record(out, "add_bcast", {&x, &y},
                                  [n, r, xs, xst, yst](const T* g, const std::vector<T*>& gp) {
                                      if (gp[0])
                                          for (int64_t i = 0; i < n; ++i) gp[0][i] += g[i];
                                      if (gp[1]) {
                                          for (int64_t i = 0; i < n; ++i) {
                                              int64_t yi = 0;
                                              for (int k = 0; k < r; ++k) {
                                                  const int64_t c = (i / xst[static_cast<size_t>(k)]) %
                                                                    xs[static_cast<size_t>(k)];
                                                  yi += c * yst[static_cast<size_t>(k)];
                                              }
                                              gp[1][yi] += g[i];
                                          }
                                      }
                                  });
    }
    return out;
}

// ---- convolutions ------------------------------------------------------------

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::array<int64_t, 3> stride) {
    if (x.rank() != 4 || w.rank() != 5 || b.rank() != 1)
        throw ShapeError("conv3d: need x [C,D,H,W], w [Co,Ci,kd,kh,kw], b [Co]");
    const int64_t ci = x.extent(0), d = x.extent(1), h = x.extent(2), ww_ = x.extent(3);
    const int64_t co = w.extent(0), kd = w.extent(2), kh = w.extent(3), kw = w.extent(4);
    if (w.extent(1) != ci || b.extent(0) != co)
        throw ShapeError("conv3d: x " + shape_str(x.shape()) + " vs w " + shape_str(w.shape()));
    const auto [sd, sh, sw] = stride;
    if (sd <= 0 || sh <= 0 || sw <= 0) throw ShapeError("conv3d: stride must be positive");
    if (d < kd || h < kh || ww_ < kw) throw ShapeError("conv3d: kernel larger than input");
    const int64_t od_ = (d - kd) / sd + 1, oh = (h - kh) / sh + 1, ow = (ww_ - kw) / sw + 1;
    Tensor<T> out(Shape{co, od_, oh, ow});
    const T* xd = x.data();
    const T* wd = w.data();
    const T* bd = b.data();
    T* outd = out.data();
    parallel_for(co, [&](int64_t lo, int64_t hi) {
        for (int64_t oc = lo; oc < hi; ++oc)
            for (int64_t z = 0; z < od_; ++z)
                for (int64_t y = 0; y < oh; ++y)
                    for (int64_t xx = 0; xx < ow; ++xx) {
                        T acc = bd[oc];
                        for (int64_t ic = 0; ic < ci; ++ic)
                            for (int64_t dz = 0; dz < kd; ++dz)
                                for (int64_t dy = 0; dy < kh; ++dy)
                                    for (int64_t dx = 0; dx < kw; ++dx)
                                        acc += wd[(((oc * ci + ic) * kd + dz) * kh + dy) * kw + dx] *
                                               xd[((ic * d + z * sd + dz) * h + y * sh + dy) * ww_ +
                                                  xx * sw + dx];
                        outd[((oc * od_ + z) * oh + y) * ow + xx] = acc;
                    }
    });
    if (recording<T>({&x, &w, &b})) {
        auto xs = x.storage();
        auto ws = w.storage();
        Tape<T>::active()->record(
            out, "conv3d", {&x, &w, &b},
            [xs, ws, ci, d, h, ww_, co, kd, kh, kw, sd, sh, sw, od_, oh,
             ow](const T* g, const std::vector<T*>& gp) {
                const T* xv = xs->data();
                const T* wv = ws->data();
                if (gp[0]) {
                    parallel_for(ci, [&](int64_t lo, int64_t hi) {
                        for (int64_t ic = lo; ic < hi; ++ic)
                            for (int64_t oc = 0; oc < co; ++oc)
                                for (int64_t z = 0; z < od_; ++z)
                                    for (int64_t y = 0; y < oh; ++y)
                                        for (int64_t xx = 0; xx < ow; ++xx) {
                                            const T gv = g[((oc * od_ + z) * oh + y) * ow + xx];
                                            if (gv == T(0)) continue;
                                            for (int64_t dz = 0; dz < kd; ++dz)
                                                for (int64_t dy = 0; dy < kh; ++dy)
                                                    for (int64_t dx = 0; dx < kw; ++dx)
                                                        gp[0][((ic * d + z * sd + dz) * h + y * sh + dy) *
                                                                  ww_ +
                                                              xx * sw + dx] +=
                                                            gv *
                                                            wv[(((oc * ci + ic) * kd + dz) * kh + dy) *
                                                                   kw +
                                                               dx];
                                        }
                    });
                }
                if (gp[1]) {
                    parallel_for(co, [&](int64_t lo, int64_t hi) {
                        for (int64_t oc = lo; oc < hi; ++oc)
                            for (int64_t z = 0; z < od_; ++z)
                                for (int64_t y = 0; y < oh; ++y)
                                    for (int64_t xx = 0; xx < ow; ++xx) {
                                        const T gv = g[((oc * od_ + z) * oh + y) * ow + xx];
                                        if (gv == T(0)) continue;
                                        for (int64_t ic = 0; ic < ci; ++ic)
                                            for (int64_t dz = 0; dz < kd; ++dz)
                                                for (int64_t dy = 0; dy < kh; ++dy)
                                                    for (int64_t dx = 0; dx < kw; ++dx)
                                                        gp[1][(((oc * ci + ic) * kd + dz) * kh + dy) * kw +
                                                              dx] +=
                                                            gv *
                                                            xv[((ic * d + z * sd + dz) * h + y * sh + dy) *
                                                                   ww_ +
                                                               xx * sw + dx];
                                    }
                    });
                }
                if (gp[2]) {
                    for (int64_t oc = 0; oc < co; ++oc) {
                        T acc = T(0);
                        for (int64_t i = 0; i < od_ * oh * ow; ++i) acc += g[oc * od_ * oh * ow + i];
                        gp[2][oc] += acc;
                    }
                }
            });
    }
    return out;
}

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                           std::array<int64_t, 2> stride) {
    if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1)
        throw ShapeError("conv_transpose2d: need x [Ci,H,W], w [Ci,Co,kh,kw], b [Co]");
    const int64_t ci = x.extent(0), h = x.extent(1), ww_ = x.extent(2);
    const int64_t co = w.extent(1), kh = w.extent(2), kw = w.extent(3);
    if (w.extent(0) != ci || b.extent(0) != co)
        throw ShapeError("conv_transpose2d: x " + shape_str(x.shape()) + " vs w " +
                         shape_str(w.shape()));
    const auto [sh, sw] = stride;
    if (sh <= 0 || sw <= 0) throw ShapeError("conv_transpose2d: stride must be positive");
    const int64_t oh = (h - 1) * sh + kh, ow = (ww_ - 1) * sw + kw;
    Tensor<T> out(Shape{co, oh, ow});
    const T* xd = x.data();
    const T* wd = w.data();
    const T* bd = b.data();
    T* outd = out.data();
    parallel_for(co, [&](int64_t lo, int64_t hi) {
        for (int64_t oc = lo; oc < hi; ++oc) {
            T* oplane = outd + oc * oh * ow;
            for (int64_t i = 0; i < oh * ow; ++i) oplane[i] = bd[oc];
            for (int64_t ic = 0; ic < ci; ++ic)
                for (int64_t y = 0; y < h; ++y)
                    for (int64_t xx = 0; xx < ww_; ++xx) {
                        const T xv = xd[(ic * h + y) * ww_ + xx];
                        if (xv == T(0)) continue;
                        for (int64_t dy = 0; dy < kh; ++dy)
                            for (int64_t dx = 0; dx < kw; ++dx)
                                oplane[(y * sh + dy) * ow + xx * sw + dx] +=
                                    xv * wd[((ic * co + oc) * kh + dy) * kw + dx];
                    }
        }
    });
    if (recording<T>({&x, &w, &b})) {
        auto xs = x.storage();
        auto ws = w.storage();
        Tape<T>::active()->record(
            out, "conv_transpose2d", {&x, &w, &b},
            [xs, ws, ci, h, ww_, co, kh, kw, sh, sw, oh, ow](const T* g, const std::vector<T*>& gp) {
                const T* xv = xs->data();
                const T* wv = ws->data();
                if (gp[0]) {
                    parallel_for(ci, [&](int64_t lo, int64_t hi) {
                        for (int64_t ic = lo; ic < hi; ++ic)
                            for (int64_t y = 0; y < h; ++y)
                                for (int64_t xx = 0; xx < ww_; ++xx) {
                                    T acc = T(0);
                                    for (int64_t oc = 0; oc < co; ++oc)
                                        for (int64_t dy = 0; dy < kh; ++dy)
                                            for (int64_t dx = 0; dx < kw; ++dx)
                                                acc += wv[((ic * co + oc) * kh + dy) * kw + dx] *
                                                       g[(oc * oh + y * sh + dy) * ow + xx * sw + dx];
                                    gp[0][(ic * h + y) * ww_ + xx] += acc;
                                }
                    });
                }
                if (gp[1]) {
                    parallel_for(ci, [&](int64_t lo, int64_t hi) {
                        for (int64_t ic = lo; ic < hi; ++ic)
                            for (int64_t oc = 0; oc < co; ++oc)
                                for (int64_t dy = 0; dy < kh; ++dy)
                                    for (int64_t dx = 0; dx < kw; ++dx) {
                                        T acc = T(0);
                                        for (int64_t y = 0; y < h; ++y)
                                            for (int64_t xx = 0; xx < ww_; ++xx)
                                                acc += xv[(ic * h + y) * ww_ + xx] *
                                                       g[(oc * oh + y * sh + dy) * ow + xx * sw + dx];
                                        gp[1][((ic * co + oc) * kh + dy) * kw + dx] += acc;
                                    }
                    });
                }
                if (gp[2]) {
                    for (int64_t oc = 0; oc < co; ++oc) {
                        T acc = T(0);
                        for (int64_t i = 0; i < oh * ow; ++i) acc += g[oc * oh * ow + i];
                        gp[2][oc] += acc;
                    }
                }
            });
    }
    return out;
}

// ---- windows -----------------------------------------------------------------

template <class T>
Tensor<T> window_partition(const Tensor<T>& x, int64_t win_h, int64_t win_w) {
    if (x.rank() != 3) throw ShapeError("window_partition: need [C,H,W]");
    const int64_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    if (win_h <= 0 || win_w <= 0 || h % win_h != 0 || w % win_w != 0)
        throw ShapeError("window_partition: " + std::to_string(win_h) + "x" + std::to_string(win_w) +
                         " does not tile " + std::to_string(h) + "x" + std::to_string(w));
    const int64_t nh = h / win_h, nw = w / win_w;
    Tensor<T> t = reshape(x, Shape{c, nh, win_h, nw, win_w});
    t = permute(t, {1, 3, 2, 4, 0});
    return reshape(t, Shape{nh * nw, win_h * win_w, c});
}

template <class T>
Tensor<T> window_reverse(const Tensor<T>& xw, int64_t channels, int64_t h, int64_t w, int64_t win_h,
                         int64_t win_w) {
    if (xw.rank() != 3) throw ShapeError("window_reverse: need [windows,tokens,C]");
    const int64_t nh = h / win_h, nw = w / win_w;
    if (win_h <= 0 || win_w <= 0 || h % win_h != 0 || w % win_w != 0 ||
        xw.extent(0) != nh * nw || xw.extent(1) != win_h * win_w || xw.extent(2) != channels)
        throw ShapeError("window_reverse: " + shape_str(xw.shape()) + " does not assemble to [" +
                         std::to_string(channels) + "," + std::to_string(h) + "," +
                         std::to_string(w) + "]");
    Tensor<T> t = reshape(xw, Shape{nh, nw, win_h, win_w, channels});
    t = permute(t, {4, 0, 2, 1, 3});
    return reshape(t, Shape{channels, h, w});
}

// ---- gradient check ----------------------------------------------------------

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  const Tensor<double>& x, double eps) {
    Tensor<double> analytic;
    {
        Tape<double> tape;
        Tensor<double> xw = x.detach();
        tape.watch(xw);
        Tensor<double> y = f(xw);
        if (y.size() != 1) throw NumericError("grad_check: f must return a scalar");
        if (!std::isfinite(static_cast<double>(y.item())))
            throw NumericError("grad_check: non-finite value from f");
        GradMap<double> gm = tape.backward(y);
        analytic = gm.of(xw);
    }
    const int64_t n = x.size();
    double worst = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> vp = x.values();
        std::vector<double> vm = x.values();
        vp[static_cast<size_t>(i)] += eps;
        vm[static_cast<size_t>(i)] -= eps;
        const double yp = f(Tensor<double>(x.shape(), std::move(vp))).item();
        const double ym = f(Tensor<double>(x.shape(), std::move(vm))).item();
        const double numeric = (yp - ym) / (2.0 * eps);
        if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite difference");
        const double a = analytic.data()[i];
        const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        worst = std::max(worst, rel);
    }
    return worst;
}

// ---- explicit instantiations ---------------------------------------------------

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class GradMap<float>;
template class GradMap<double>;

#define SEARTH_INSTANTIATE_OPS(T)                                                                  \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> scale<T>(const Tensor<T>&, double);                                         \
    template Tensor<T> abs<T>(const Tensor<T>&);                                                   \
    template Tensor<T> gelu<T>(const Tensor<T>&);                                                  \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                   \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                  \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                        \
    template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                      \
    template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                              \
    template Tensor<T> slice<T>(const Tensor<T>&, int, int64_t, int64_t);                          \
    template std::vector<Tensor<T>> split<T>(const Tensor<T>&, int, const std::vector<int64_t>&);  \
    template Tensor<T> roll<T>(const Tensor<T>&, int, int64_t);                                    \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
    template Tensor<T> softmax_last<T>(const Tensor<T>&);                                          \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                     double);                                                      \
    template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<int>&);                  \
    template Tensor<T> add_bcast<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                 std::array<int64_t, 3>);                                          \
    template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                           std::array<int64_t, 2>);                                \
    template Tensor<T> window_partition<T>(const Tensor<T>&, int64_t, int64_t);                    \
    template Tensor<T> window_reverse<T>(const Tensor<T>&, int64_t, int64_t, int64_t, int64_t,     \
                                         int64_t);

SEARTH_INSTANTIATE_OPS(float)
SEARTH_INSTANTIATE_OPS(double)

}  // namespace searth
