#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "searth/common.hpp"

namespace searth {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<int64_t> row_major_strides(const Shape& s);

template <class T>
class Tape;

// Dense row-major tensor. Values are immutable once produced by an op;
// data() is mutable only for initialization and optimizer updates, which
// happen outside differentiation episodes. Copies share storage.
template <class T>
class Tensor {
public:
    Tensor() : data_(std::make_shared<std::vector<T>>()) {}
    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(static_cast<size_t>(shape_numel(shape_)), T(0))) {}
    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (shape_numel(shape_) != static_cast<int64_t>(values.size()))
            throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                             shape_str(shape_));
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : *t.data_) x = v;
        return t;
    }
    // Shares the buffer instead of copying; the new tensor starts detached.
    static Tensor from_storage(Shape shape, std::shared_ptr<std::vector<T>> data) {
        if (!data || shape_numel(shape) != static_cast<int64_t>(data->size()))
            throw ShapeError("from_storage: buffer does not match shape " + shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t size() const { return static_cast<int64_t>(data_->size()); }

    T item() const {
        if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " values");
        return (*data_)[0];
    }

    const T* data() const { return data_->data(); }
    T* data() { return data_->data(); }
    const std::vector<T>& values() const { return *data_; }
    std::shared_ptr<const std::vector<T>> storage() const { return data_; }

    // Linked to the active tape's current episode (i.e. gradients can reach it).
    bool attached() const;
    bool requires_grad() const { return attached(); }
    int node() const { return node_; }

    // Same values, no graph linkage.
    Tensor detach() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    // Detached view of the same buffer under a different shape.
    Tensor with_shape(Shape shape) const {
        if (shape_numel(shape) != size())
            throw ShapeError("with_shape: cannot view " + shape_str(shape_) + " as " +
                             shape_str(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    uint64_t tape_id_ = 0;
    int64_t epoch_ = -1;
    int node_ = -1;
    friend class Tape<T>;
    template <class U> friend class GradMap;
};

// Gradients returned by Tape::backward, keyed by leaf node. Stamped with the
// episode they came from; querying a tensor from any other episode (or a
// detached one) yields zeros.
template <class T>
class GradMap {
public:
    Tensor<T> of(const Tensor<T>& x) const;
    bool has(const Tensor<T>& x) const;
    size_t entries() const { return grads_.size(); }

private:
    uint64_t tape_id_ = 0;
    int64_t epoch_ = -1;
    std::unordered_map<int, std::vector<T>> grads_;
    friend class Tape<T>;
};

// Reverse-mode tape. Constructing a Tape makes it the active recorder for
// the current thread (stack discipline; the previous one is restored on
// destruction). Ops record a node whenever at least one input is attached.
// backward() runs the reverse sweep, releases every node, and bumps the
// episode so stale tensors act as constants afterwards.
template <class T>
class Tape {
public:
    using BackwardFn = std::function<void(const T* grad_out, const std::vector<T*>& grad_parents)>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Registers x as a leaf of the current episode.
    void watch(Tensor<T>& x);

    GradMap<T> backward(const Tensor<T>& loss);

    // Drops all nodes and starts a new episode; previously produced tensors
    // keep their values but become constants.
    void clear();

    int64_t live_nodes() const { return static_cast<int64_t>(nodes_.size()); }
    int64_t peak_live_nodes() const { return peak_; }
    void reset_peak() { peak_ = live_nodes(); }

    uint64_t id() const { return id_; }
    int64_t epoch() const { return epoch_; }

    // Used by op implementations.
    bool is_current(const Tensor<T>& x) const {
        return x.tape_id_ == id_ && x.epoch_ == epoch_ && x.node_ >= 0;
    }
    void record(Tensor<T>& out, const char* op, const std::vector<const Tensor<T>*>& inputs,
                BackwardFn back);

private:
    struct Node {
        const char* op;
        std::vector<int> parents;
        int64_t numel;
        bool leaf;
        BackwardFn back;
    };

    std::vector<Node> nodes_;
    int64_t peak_ = 0;
    uint64_t id_;
    int64_t epoch_ = 0;
    Tape* previous_ = nullptr;
};

template <class T>
bool Tensor<T>::attached() const {
    const Tape<T>* t = Tape<T>::active();
    return t != nullptr && t->is_current(*this);
}

// ---- differentiable ops ----------------------------------------------------

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& x, double c);
template <class T> Tensor<T> abs(const Tensor<T>& x);
template <class T> Tensor<T> gelu(const Tensor<T>& x);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <class T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes);
template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <class T> Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len);
template <class T> std::vector<Tensor<T>> split(const Tensor<T>& x, int axis,
                                                const std::vector<int64_t>& sizes);
template <class T> Tensor<T> roll(const Tensor<T>& x, int axis, int64_t shift);

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
template <class T> Tensor<T> softmax_last(const Tensor<T>& x);
template <class T> Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                                        const Tensor<T>& bias, double eps = 1e-5);
template <class T> Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int>& idx);

// y broadcast-added to x; extents of y must equal x's or 1 per axis.
template <class T> Tensor<T> add_bcast(const Tensor<T>& x, const Tensor<T>& y);

template <class T> Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                                    std::array<int64_t, 3> stride);
template <class T> Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w,
                                              const Tensor<T>& b, std::array<int64_t, 2> stride);

// [C,H,W] -> [num_windows, win_h*win_w, C]; windows tile row-major, tokens
// row-major within a window. window_reverse is the exact inverse.
template <class T> Tensor<T> window_partition(const Tensor<T>& x, int64_t win_h, int64_t win_w);
template <class T> Tensor<T> window_reverse(const Tensor<T>& xw, int64_t channels, int64_t h,
                                            int64_t w, int64_t win_h, int64_t win_w);

template <class T> Tensor<T> detach(const Tensor<T>& x) { return x.detach(); }

// Max over coordinates of |analytic - central difference| /
// max(|analytic|, |numeric|, 1e-8) for a scalar-valued f. 64-bit only.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  const Tensor<double>& x, double eps);

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& x) {
    std::vector<To> v(static_cast<size_t>(x.size()));
    const From* d = x.data();
    for (int64_t i = 0; i < x.size(); ++i) v[static_cast<size_t>(i)] = static_cast<To>(d[i]);
    return Tensor<To>(x.shape(), std::move(v));
}

}  // namespace searth
