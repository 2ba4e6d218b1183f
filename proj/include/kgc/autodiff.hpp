#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/tensor.hpp"

namespace kgc::ad {

using Index = std::uint32_t;
using IndexList = std::shared_ptr<const std::vector<Index>>;

inline IndexList make_indices(std::vector<Index> idx) {
    return std::make_shared<const std::vector<Index>>(std::move(idx));
}

/// Trainable tensors by name, in registration order.
template <typename T>
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

    Tensor<T>& add(const std::string& name, Tensor<T> init);
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    Tensor<T>& get(const std::string& name);
    const Tensor<T>& get(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t parameter_count() const;

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out(seed_);
        for (const auto& n : order_) out.add(n, tensors_.at(n).template cast<U>());
        return out;
    }

    friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
        return a.order_ == b.order_ && a.tensors_ == b.tensors_;
    }

private:
    std::uint64_t seed_;
    std::vector<std::string> order_;
    std::map<std::string, Tensor<T>> tensors_;
};

template <typename T>
using Gradients = std::map<std::string, Tensor<T>>;

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Tensor<T>& value() const { return tape_->value(id_); }
    const Shape& shape() const { return value().shape(); }
    std::size_t dim(std::size_t axis) const { return value().dim(axis); }
    std::size_t id() const { return id_; }
    Tape<T>* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Append-only record of primitive applications. Values stay alive until the
/// tape is destroyed; `backward` walks the records in exact reverse order.
template <typename T>
class Tape {
public:
    /// Called during backward with the output gradient; accumulates into inputs.
    using Adjoint = std::function<void(Tape&, const Tensor<T>& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value);
    /// Constant that aliases caller-owned storage; it must outlive the tape.
    Var<T> constant_ref(const Tensor<T>& value);
    /// Leaf bound to a named parameter. Repeated calls return the same node.
    Var<T> param(const ParameterStore<T>& store, const std::string& name);

    Var<T> record(std::string_view op, Tensor<T> value, std::vector<std::size_t> inputs, Adjoint adjoint);

    const Tensor<T>& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }
    std::string_view op(std::size_t id) const { return nodes_[id].op; }

    /// Gradient buffer of node `id`, zero-initialised on first access.
    Tensor<T>& grad(std::size_t id);

    /// Reverse pass from a scalar. Every parameter of `store` gets an entry;
    /// parameters the loss does not reach get zeros.
    Gradients<T> backward(Var<T> loss, const ParameterStore<T>& store);

private:
    struct Node {
        std::string op;
        Tensor<T> owned;
        const Tensor<T>* external = nullptr;
        std::vector<std::size_t> inputs;
        Adjoint adjoint;
        bool requires_grad = false;
        std::string param_name;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    std::map<std::string, std::size_t> param_nodes_;
    const ParameterStore<T>* bound_store_ = nullptr;
};

// Test hook: while active, the adjoint of every node whose op equals `op`
// receives a negated output gradient. Used to show the gradient checker
// catches a broken adjoint.
class ScopedAdjointFault {
public:
    explicit ScopedAdjointFault(std::string op);
    ~ScopedAdjointFault();
    ScopedAdjointFault(const ScopedAdjointFault&) = delete;
    ScopedAdjointFault& operator=(const ScopedAdjointFault&) = delete;
};

// ---------------------------------------------------------------------------
// Primitives. Shapes are checked eagerly; a mismatch throws ShapeError naming
// the primitive, a non-finite output throws NumericError.

/// op(a) * op(b) on rank-2 operands.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_a = false, bool transpose_b = false);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);

/// Row `r` of `a` multiplied by `w[r]`; `a` is rank >= 1 with dim0 == |w|.
template <typename T>
Var<T> scale_rows(Var<T> a, Var<T> w);

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);

template <typename T>
Var<T> reshape(Var<T> a, Shape shape);

/// input [B,C,H,W] valid-correlated with filters [F,C,kh,kw], stride 1.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> filters);

template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);
template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> leaky_relu(Var<T> a, T negative_slope = T(0.2));

/// Softmax of a rank-1 tensor.
template <typename T>
Var<T> softmax(Var<T> a);
/// Softmax applied independently to a[offsets[i] .. offsets[i+1]).
template <typename T>
Var<T> segment_softmax(Var<T> a, IndexList offsets);

/// Sum of all elements, shape {1}.
template <typename T>
Var<T> sum(Var<T> a);
/// [B,d] -> [B].
template <typename T>
Var<T> row_sum(Var<T> a);

/// Rows of `table` selected by `indices`; adjoint scatter-adds.
template <typename T>
Var<T> gather_rows(Var<T> table, IndexList indices);
/// out[indices[i]] += src[i]; out has `rows` rows. Adjoint gathers.
template <typename T>
Var<T> scatter_add_rows(Var<T> src, IndexList indices, std::size_t rows);

/// c_k = sum_i a_i * b_{(i+k) mod d} for equal-length vectors.
template <typename T>
Var<T> ccorr(Var<T> a, Var<T> b);
/// Row-wise ccorr of two [B,d] tensors.
template <typename T>
Var<T> ccorr_rows(Var<T> a, Var<T> b);

/// Sum over elements of -t*log(p) - (1-t)*log(1-p), p = clamp(sigmoid(s), eps, 1-eps).
/// `targets` is a constant with the shape of `scores`.
template <typename T>
Var<T> bce_with_logits(Var<T> scores, const Tensor<T>& targets, T eps = T(1e-7));

}  // namespace kgc::ad
