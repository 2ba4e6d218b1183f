#include "kgc/autodiff.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <initializer_list>
#include <mutex>

namespace kgc::ad {

namespace {

template <typename T>
using MatrixRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const MatrixRM<T>>;
template <typename T>
using MutMap = Eigen::Map<MatrixRM<T>>;

std::mutex fault_mutex;
std::string fault_op;
std::atomic<bool> fault_active{false};

template <typename T>
Tape<T>& common_tape(std::string_view op, std::initializer_list<Var<T>> vars) {
    Tape<T>* tape = nullptr;
    for (const auto& v : vars) {
        if (!v.valid()) throw ContractError(std::string(op) + ": operand is not bound to a tape");
        if (tape == nullptr)
            tape = v.tape();
        else if (tape != v.tape())
            throw ContractError(std::string(op) + ": operands recorded on different tapes");
    }
    return *tape;
}

void require(bool ok, std::string_view op, const std::string& what) {
    if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

template <typename M, typename F>
void with_op(const M& m, bool transpose, F&& f) {
    if (transpose)
        f(m.transpose());
    else
        f(m);
}

template <typename T>
void segment_softmax_forward(const T* in, T* out, std::size_t begin, std::size_t end) {
    if (begin == end) return;
    T mx = in[begin];
    for (std::size_t i = begin + 1; i < end; ++i) mx = std::max(mx, in[i]);
    T total = 0;
    for (std::size_t i = begin; i < end; ++i) {
        out[i] = std::exp(in[i] - mx);
        total += out[i];
    }
    for (std::size_t i = begin; i < end; ++i) out[i] /= total;
}

template <typename T>
void ccorr_forward(const T* a, const T* b, T* c, std::size_t d) {
    for (std::size_t k = 0; k < d; ++k) {
        T s = 0;
        for (std::size_t i = 0; i + k < d; ++i) s += a[i] * b[i + k];
        for (std::size_t i = d - k; i < d; ++i) s += a[i] * b[i + k - d];
        c[k] = s;
    }
}

template <typename T>
Var<T> unary(std::string_view op, Var<T> a, T (*f)(T), T (*df)(T x, T y)) {
    Tape<T>& tape = common_tape(op, {a});
    const Tensor<T>& x = a.value();
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const std::size_t ia = a.id();
    std::size_t self = tape.size();
    return tape.record(op, std::move(y), {ia}, [ia, self, df](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        const Tensor<T>& x = t.value(ia);
        const Tensor<T>& y = t.value(self);
        Tensor<T>& gx = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
    });
}

template <typename T>
T sigmoid_value(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterStore

template <typename T>
Tensor<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> init) {
    if (contains(name)) throw ContractError("parameter '" + name + "' registered twice");
    order_.push_back(name);
    return tensors_.emplace(name, std::move(init)).first->second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::get(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

template <typename T>
std::size_t ParameterStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node node;
    node.op = "constant";
    node.owned = std::move(value);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant_ref(const Tensor<T>& value) {
    Node node;
    node.op = "constant";
    node.external = &value;
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(const ParameterStore<T>& store, const std::string& name) {
    if (bound_store_ != nullptr && bound_store_ != &store)
        throw ContractError("tape: parameters from two different stores");
    bound_store_ = &store;
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var<T>(this, it->second);
    Node node;
    node.op = "param";
    node.external = &store.get(name);
    node.requires_grad = true;
    node.param_name = name;
    nodes_.push_back(std::move(node));
    param_nodes_.emplace(name, nodes_.size() - 1);
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<std::size_t> inputs, Adjoint adjoint) {
    if (!value.all_finite())
        throw NumericError("primitive '" + std::string(op) + "' produced a non-finite value");
    Node node;
    node.op = std::string(op);
    node.owned = std::move(value);
    for (std::size_t i : inputs) node.requires_grad = node.requires_grad || nodes_.at(i).requires_grad;
    node.inputs = std::move(inputs);
    if (node.requires_grad) node.adjoint = std::move(adjoint);
    nodes_.push_back(std::move(node));
    return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.owned;
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
    Tensor<T>& g = grads_.at(id);
    if (g.empty()) g = Tensor<T>(value(id).shape());
    return g;
}

template <typename T>
Gradients<T> Tape<T>::backward(Var<T> loss, const ParameterStore<T>& store) {
    if (loss.tape() != this) throw ContractError("backward: loss was not recorded on this tape");
    if (loss.value().size() != 1)
        throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
    if (bound_store_ != nullptr && bound_store_ != &store)
        throw ContractError("backward: store differs from the one bound on the tape");

    grads_.assign(nodes_.size(), Tensor<T>());
    grads_[loss.id()] = Tensor<T>(loss.shape(), T(1));

    std::string flipped;
    if (fault_active.load()) {
        std::lock_guard lock(fault_mutex);
        flipped = fault_op;
    }

    for (std::size_t id = loss.id() + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.requires_grad || !node.adjoint || grads_[id].empty()) continue;
        if (!flipped.empty() && node.op == flipped) {
            Tensor<T> negated = grads_[id];
            for (auto& v : negated.storage()) v = -v;
            node.adjoint(*this, negated);
        } else {
            node.adjoint(*this, grads_[id]);
        }
        if (node.param_name.empty()) grads_[id] = Tensor<T>();
    }

    Gradients<T> out;
    for (const auto& name : store.names()) {
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end() && !grads_[it->second].empty())
            out.emplace(name, std::move(grads_[it->second]));
        else
            out.emplace(name, Tensor<T>(store.get(name).shape()));
    }
    grads_.clear();
    return out;
}

ScopedAdjointFault::ScopedAdjointFault(std::string op) {
    std::lock_guard lock(fault_mutex);
    fault_op = std::move(op);
    fault_active = true;
}

ScopedAdjointFault::~ScopedAdjointFault() {
    std::lock_guard lock(fault_mutex);
    fault_op.clear();
    fault_active = false;
}

// ---------------------------------------------------------------------------
// Primitives

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool ta, bool tb) {
    constexpr std::string_view op = "matmul";
    Tape<T>& tape = common_tape(op, {a, b});
    const Tensor<T>& A = a.value();
    const Tensor<T>& B = b.value();
    require(A.rank() == 2 && B.rank() == 2, op, "operands must be rank 2, got " + shape_string(A.shape()) +
                                                    " and " + shape_string(B.shape()));
    const std::size_t m = ta ? A.dim(1) : A.dim(0);
    const std::size_t k = ta ? A.dim(0) : A.dim(1);
    const std::size_t kb = tb ? B.dim(1) : B.dim(0);
    const std::size_t n = tb ? B.dim(0) : B.dim(1);
    require(k == kb, op, "inner extents differ: " + shape_string(A.shape()) + (ta ? "^T" : "") + " x " +
                             shape_string(B.shape()) + (tb ? "^T" : ""));

    Tensor<T> out({m, n});
    ConstMap<T> Am(A.data(), A.dim(0), A.dim(1));
    ConstMap<T> Bm(B.data(), B.dim(0), B.dim(1));
    MutMap<T> Om(out.data(), m, n);
    with_op(Am, ta, [&](const auto& oa) { with_op(Bm, tb, [&](const auto& ob) { Om.noalias() = oa * ob; }); });

    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(op, std::move(out), {ia, ib}, [ia, ib, ta, tb, m, n](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& A = t.value(ia);
        const Tensor<T>& B = t.value(ib);
        ConstMap<T> Am(A.data(), A.dim(0), A.dim(1));
        ConstMap<T> Bm(B.data(), B.dim(0), B.dim(1));
        ConstMap<T> G(g.data(), m, n);
        if (t.requires_grad(ia)) {
            Tensor<T>& ga = t.grad(ia);
            MutMap<T> dA(ga.data(), A.dim(0), A.dim(1));
            with_op(Bm, tb, [&](const auto& ob) {
                if (ta)
                    dA.noalias() += ob * G.transpose();
                else
                    dA.noalias() += G * ob.transpose();
            });
        }
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            MutMap<T> dB(gb.data(), B.dim(0), B.dim(1));
            with_op(Am, ta, [&](const auto& oa) {
                if (tb)
                    dB.noalias() += G.transpose() * oa;
                else
                    dB.noalias() += oa.transpose() * G;
            });
        }
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    constexpr std::string_view op = "add";
    Tape<T>& tape = common_tape(op, {a, b});
    require(a.shape() == b.shape(), op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor<T> out = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(op, std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        for (std::size_t in : {ia, ib}) {
            if (!t.requires_grad(in)) continue;
            Tensor<T>& gi = t.grad(in);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    constexpr std::string_view op = "sub";
    Tape<T>& tape = common_tape(op, {a, b});
    require(a.shape() == b.shape(), op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor<T> out = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(op, std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) {
            Tensor<T>& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    constexpr std::string_view op = "mul";
    Tape<T>& tape = common_tape(op, {a, b});
    require(a.shape() == b.shape(), op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor<T> out = a.value();
    const Tensor<T>& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(op, std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(ia);
        const Tensor<T>& bv = t.value(ib);
        if (t.requires_grad(ia)) {
            Tensor<T>& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.requires_grad(ib)) {
            Tensor<T>& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
    constexpr std::string_view op = "scale";
    Tape<T>& tape = common_tape(op, {a});
    Tensor<T> out = a.value();
    for (auto& v : out.storage()) v *= s;
    const std::size_t ia = a.id();
    return tape.record(op, std::move(out), {ia}, [ia, s](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        Tensor<T>& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    });
}

template <typename T>
Var<T> scale_rows(Var<T> a, Var<T> w) {
    constexpr std::string_view op = "scale_rows";
    Tape<T>& tape = common_tape(op, {a, w});
    const Tensor<T>& av = a.value();
    const Tensor<T>& wv = w.value();
    require(wv.rank() == 1 && av.rows() == wv.size(), op,
            "weights " + shape_string(wv.shape()) + " do not match rows of " + shape_string(av.shape()));
    Tensor<T> out = av;
    const std::size_t rs = av.row_size();
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t j = 0; j < rs; ++j) out[r * rs + j] *= wv[r];
    const std::size_t ia = a.id(), iw = w.id();
    return tape.record(op, std::move(out), {ia, iw}, [ia, iw](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(ia);
        const Tensor<T>& wv = t.value(iw);
        const std::size_t rs = av.row_size();
        if (t.requires_grad(ia)) {
            Tensor<T>& ga = t.grad(ia);
            for (std::size_t r = 0; r < av.rows(); ++r)
                for (std::size_t j = 0; j < rs; ++j) ga[r * rs + j] += wv[r] * g[r * rs + j];
        }
        if (t.requires_grad(iw)) {
            Tensor<T>& gw = t.grad(iw);
            for (std::size_t r = 0; r < av.rows(); ++r) {
                T s = 0;
                for (std::size_t j = 0; j < rs; ++j) s += g[r * rs + j] * av[r * rs + j];
                gw[r] += s;
            }
        }
    });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
    constexpr std::string_view op = "concat";
    require(!parts.empty(), op, "no operands");
    Tape<T>* tape = parts[0].tape();
    for (const auto& p : parts) common_tape(op, {parts[0], p});
    const Shape& first = parts[0].shape();
    require(axis < first.size(), op, "axis " + std::to_string(axis) + " out of range for rank " +
                                         std::to_string(first.size()));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool compatible = s.size() == first.size();
        for (std::size_t d = 0; compatible && d < s.size(); ++d)
            if (d != axis && s[d] != first[d]) compatible = false;
        require(compatible, op, shape_string(s) + " incompatible with " + shape_string(first) + " on axis " +
                                    std::to_string(axis));
        out_shape[axis] += s[axis];
        ids.push_back(p.id());
        extents.push_back(s[axis]);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
    const std::size_t total = out_shape[axis];

    Tensor<T> out(out_shape);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const Tensor<T>& v = parts[p].value();
        const std::size_t chunk = extents[p] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(v.data() + o * chunk, chunk, out.data() + o * total * inner + offset * inner);
        offset += extents[p];
    }
    return tape->record(op, std::move(out), ids,
                        [ids, extents, outer, inner, total](Tape<T>& t, const Tensor<T>& g) {
                            std::size_t offset = 0;
                            for (std::size_t p = 0; p < ids.size(); ++p) {
                                const std::size_t chunk = extents[p] * inner;
                                if (t.requires_grad(ids[p])) {
                                    Tensor<T>& gp = t.grad(ids[p]);
                                    for (std::size_t o = 0; o < outer; ++o) {
                                        const T* src = g.data() + o * total * inner + offset * inner;
                                        T* dst = gp.data() + o * chunk;
                                        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                                    }
                                }
                                offset += extents[p];
                            }
                        });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
    constexpr std::string_view op = "reshape";
    Tape<T>& tape = common_tape(op, {a});
    require(shape_size(shape) == a.value().size(), op,
            shape_string(a.shape()) + " -> " + shape_string(shape) + " changes element count");
    Tensor<T> out = a.value().reshaped(std::move(shape));
    const std::size_t ia = a.id();
    return tape.record(op, std::move(out), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        Tensor<T>& ga = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> filters) {
    constexpr std::string_view op = "conv2d";
    Tape<T>& tape = common_tape(op, {input, filters});
    const Tensor<T>& x = input.value();
    const Tensor<T>& w = filters.value();
    require(x.rank() == 4 && w.rank() == 4, op, "expects [B,C,H,W] input and [F,C,kh,kw] filters, got " +
                                                    shape_string(x.shape()) + " and " + shape_string(w.shape()));
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    require(w.dim(1) == C, op, "channel mismatch " + shape_string(x.shape()) + " vs " + shape_string(w.shape()));
    require(kh <= H && kw <= W, op, "filter larger than input");
    const std::size_t Ho = H - kh + 1, Wo = W - kw + 1;

    Tensor<T> out({B, F, Ho, Wo});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f) {
            T* o = out.data() + ((b * F + f) * Ho) * Wo;
            for (std::size_t c = 0; c < C; ++c) {
                const T* xc = x.data() + ((b * C + c) * H) * W;
                const T* wc = w.data() + ((f * C + c) * kh) * kw;
                for (std::size_t p = 0; p < kh; ++p)
                    for (std::size_t q = 0; q < kw; ++q) {
                        const T wv = wc[p * kw + q];
                        for (std::size_t i = 0; i < Ho; ++i) {
                            const T* xr = xc + (i + p) * W + q;
                            T* orow = o + i * Wo;
                            for (std::size_t j = 0; j < Wo; ++j) orow[j] += wv * xr[j];
                        }
                    }
            }
        }

    const std::size_t ix = input.id(), iw = filters.id();
    return tape.record(op, std::move(out), {ix, iw}, [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& x = t.value(ix);
        const Tensor<T>& w = t.value(iw);
        const bool need_x = t.requires_grad(ix), need_w = t.requires_grad(iw);
        T* gx = need_x ? t.grad(ix).data() : nullptr;
        T* gw = need_w ? t.grad(iw).data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t f = 0; f < F; ++f) {
                const T* go = g.data() + ((b * F + f) * Ho) * Wo;
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t xoff = ((b * C + c) * H) * W;
                    const std::size_t woff = ((f * C + c) * kh) * kw;
                    for (std::size_t p = 0; p < kh; ++p)
                        for (std::size_t q = 0; q < kw; ++q) {
                            const T wv = w[woff + p * kw + q];
                            T acc = 0;
                            for (std::size_t i = 0; i < Ho; ++i) {
                                const std::size_t row = xoff + (i + p) * W + q;
                                const T* grow = go + i * Wo;
                                for (std::size_t j = 0; j < Wo; ++j) {
                                    if (need_x) gx[row + j] += wv * grow[j];
                                    acc += grow[j] * x[row + j];
                                }
                            }
                            if (need_w) gw[woff + p * kw + q] += acc;
                        }
                }
            }
    });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
    return unary<T>(
        "sigmoid", a, [](T x) { return sigmoid_value(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
    return unary<T>(
        "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> relu(Var<T> a) {
    return unary<T>(
        "relu", a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(Var<T> a, T slope) {
    constexpr std::string_view op = "leaky_relu";
    Tape<T>& tape = common_tape(op, {a});
    const Tensor<T>& x = a.value();
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
    const std::size_t ia = a.id();
    return tape.record(op, std::move(y), {ia}, [ia, slope](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        const Tensor<T>& x = t.value(ia);
        Tensor<T>& gx = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (x[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Var<T> segment_softmax(Var<T> a, IndexList offsets) {
    constexpr std::string_view op = "softmax";
    Tape<T>& tape = common_tape(op, {a});
    const Tensor<T>& x = a.value();
    require(x.rank() == 1, op, "expects a rank-1 tensor, got " + shape_string(x.shape()));
    require(offsets && !offsets->empty() && offsets->front() == 0 && offsets->back() == x.size(), op,
            "segment offsets must span [0, " + std::to_string(x.size()) + "]");
    for (std::size_t s = 0; s + 1 < offsets->size(); ++s)
        require((*offsets)[s] <= (*offsets)[s + 1], op, "segment offsets must be non-decreasing");
    Tensor<T> y(x.shape());
    for (std::size_t s = 0; s + 1 < offsets->size(); ++s)
        segment_softmax_forward(x.data(), y.data(), (*offsets)[s], (*offsets)[s + 1]);
    const std::size_t ia = a.id();
    const std::size_t self = tape.size();
    return tape.record(op, std::move(y), {ia}, [ia, self, offsets](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        const Tensor<T>& y = t.value(self);
        Tensor<T>& gx = t.grad(ia);
        for (std::size_t s = 0; s + 1 < offsets->size(); ++s) {
            const std::size_t b = (*offsets)[s], e = (*offsets)[s + 1];
            T dot = 0;
            for (std::size_t i = b; i < e; ++i) dot += g[i] * y[i];
            for (std::size_t i = b; i < e; ++i) gx[i] += y[i] * (g[i] - dot);
        }
    });
}

template <typename T>
Var<T> softmax(Var<T> a) {
    require(a.valid() && a.value().rank() == 1, "softmax", "expects a rank-1 tensor");
    return segment_softmax(a, make_indices({0, static_cast<Index>(a.value().size())}));
}

template <typename T>
Var<T> sum(Var<T> a) {
    constexpr std::string_view op = "sum";
    Tape<T>& tape = common_tape(op, {a});
    T s = 0;
    for (T v : a.value().values()) s += v;
    const std::size_t ia = a.id();
    return tape.record(op, Tensor<T>::scalar(s), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        Tensor<T>& ga = t.grad(ia);
        for (auto& v : ga.storage()) v += g[0];
    });
}

template <typename T>
Var<T> row_sum(Var<T> a) {
    constexpr std::string_view op = "row_sum";
    Tape<T>& tape = common_tape(op, {a});
    const Tensor<T>& x = a.value();
    require(x.rank() == 2, op, "expects rank 2, got " + shape_string(x.shape()));
    const std::size_t B = x.dim(0), d = x.dim(1);
    Tensor<T> out({B});
    for (std::size_t b = 0; b < B; ++b) {
        T s = 0;
        for (std::size_t j = 0; j < d; ++j) s += x[b * d + j];
        out[b] = s;
    }
    const std::size_t ia = a.id();
    return tape.record(op, std::move(out), {ia}, [ia, B, d](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(ia)) return;
        Tensor<T>& ga = t.grad(ia);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < d; ++j) ga[b * d + j] += g[b];
    });
}

template <typename T>
Var<T> gather_rows(Var<T> table, IndexList indices) {
    constexpr std::string_view op = "gather_rows";
    Tape<T>& tape = common_tape(op, {table});
    const Tensor<T>& tv = table.value();
    require(indices && !indices->empty(), op, "empty index list");
    const std::size_t rows = tv.rows(), rs = tv.row_size();
    Shape shape = tv.shape();
    shape[0] = indices->size();
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < indices->size(); ++i) {
        const Index r = (*indices)[i];
        require(r < rows, op, "row " + std::to_string(r) + " out of range for " + shape_string(tv.shape()));
        std::copy_n(tv.data() + r * rs, rs, out.data() + i * rs);
    }
    const std::size_t it = table.id();
    return tape.record(op, std::move(out), {it}, [it, indices, rs](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(it)) return;
        Tensor<T>& gt = t.grad(it);
        for (std::size_t i = 0; i < indices->size(); ++i) {
            T* dst = gt.data() + (*indices)[i] * rs;
            const T* src = g.data() + i * rs;
            for (std::size_t j = 0; j < rs; ++j) dst[j] += src[j];
        }
    });
}

template <typename T>
Var<T> scatter_add_rows(Var<T> src, IndexList indices, std::size_t rows) {
    constexpr std::string_view op = "scatter_add_rows";
    Tape<T>& tape = common_tape(op, {src});
    const Tensor<T>& sv = src.value();
    require(indices && indices->size() == sv.rows(), op,
            "index count does not match rows of " + shape_string(sv.shape()));
    const std::size_t rs = sv.row_size();
    Shape shape = sv.shape();
    shape[0] = rows;
    Tensor<T> out(shape);
    for (std::size_t i = 0; i < indices->size(); ++i) {
        const Index r = (*indices)[i];
        require(r < rows, op, "target row " + std::to_string(r) + " out of range " + std::to_string(rows));
        T* dst = out.data() + r * rs;
        const T* s = sv.data() + i * rs;
        for (std::size_t j = 0; j < rs; ++j) dst[j] += s[j];
    }
    const std::size_t is = src.id();
    return tape.record(op, std::move(out), {is}, [is, indices, rs](Tape<T>& t, const Tensor<T>& g) {
        if (!t.requires_grad(is)) return;
        Tensor<T>& gs = t.grad(is);
        for (std::size_t i = 0; i < indices->size(); ++i) {
            const T* s = g.data() + (*indices)[i] * rs;
            T* dst = gs.data() + i * rs;
            for (std::size_t j = 0; j < rs; ++j) dst[j] += s[j];
        }
    });
}

namespace {

template <typename T>
Var<T> ccorr_impl(std::string_view op, Var<T> a, Var<T> b, std::size_t rows, std::size_t d) {
    Tape<T>& tape = common_tape(op, {a, b});
    Tensor<T> out(a.shape());
    for (std::size_t r = 0; r < rows; ++r)
        ccorr_forward(a.value().data() + r * d, b.value().data() + r * d, out.data() + r * d, d);
    const std::size_t ia = a.id(), ib = b.id();
    return tape.record(op, std::move(out), {ia, ib}, [ia, ib, rows, d](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(ia);
        const Tensor<T>& bv = t.value(ib);
        const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
        T* ga = need_a ? t.grad(ia).data() : nullptr;
        T* gb = need_b ? t.grad(ib).data() : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * d;
            const T* ar = av.data() + r * d;
            const T* br = bv.data() + r * d;
            for (std::size_t k = 0; k < d; ++k) {
                const T gk = gr[k];
                for (std::size_t i = 0; i < d; ++i) {
                    const std::size_t j = i + k < d ? i + k : i + k - d;
                    // c_k += a_i * b_j
                    if (need_a) ga[r * d + i] += gk * br[j];
                    if (need_b) gb[r * d + j] += gk * ar[i];
                }
            }
        }
    });
}

}  // namespace

template <typename T>
Var<T> ccorr(Var<T> a, Var<T> b) {
    constexpr std::string_view op = "ccorr";
    require(a.valid() && b.valid() && a.value().rank() == 1 && a.shape() == b.shape(), op,
            "expects two equal-length vectors");
    return ccorr_impl(op, a, b, 1, a.value().size());
}

template <typename T>
Var<T> ccorr_rows(Var<T> a, Var<T> b) {
    constexpr std::string_view op = "ccorr_rows";
    require(a.valid() && b.valid() && a.value().rank() == 2 && a.shape() == b.shape(), op,
            "expects two equal [B,d] tensors");
    return ccorr_impl(op, a, b, a.dim(0), a.dim(1));
}

template <typename T>
Var<T> bce_with_logits(Var<T> scores, const Tensor<T>& targets, T eps) {
    constexpr std::string_view op = "bce_with_logits";
    Tape<T>& tape = common_tape(op, {scores});
    const Tensor<T>& s = scores.value();
    require(targets.shape() == s.shape(), op,
            "targets " + shape_string(targets.shape()) + " vs scores " + shape_string(s.shape()));
    const double lo = static_cast<double>(eps), hi = 1.0 - static_cast<double>(eps);
    double loss = 0;
    auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double x = s[i], p = sigmoid_value<double>(x), y = targets[i];
        double log_p, log_q;  // log p, log(1 - p)
        if (p < lo || p > hi) {
            const double c = std::clamp(p, lo, hi);
            log_p = std::log(c);
            log_q = std::log(1.0 - c);
        } else {
            log_p = -softplus(-x);
            log_q = -softplus(x);
        }
        loss -= y * log_p + (1.0 - y) * log_q;
    }
    const std::size_t is = scores.id();
    auto tgt = std::make_shared<const Tensor<T>>(targets);
    return tape.record(op, Tensor<T>::scalar(static_cast<T>(loss)), {is},
                       [is, tgt, lo, hi](Tape<T>& t, const Tensor<T>& g) {
                           if (!t.requires_grad(is)) return;
                           const Tensor<T>& s = t.value(is);
                           Tensor<T>& gs = t.grad(is);
                           for (std::size_t i = 0; i < s.size(); ++i) {
                               const double p = sigmoid_value<double>(s[i]);
                               if (p < lo || p > hi) continue;  // clamped: flat
                               gs[i] += static_cast<T>(g[0] * (p - static_cast<double>((*tgt)[i])));
                           }
                       });
}

#define KGC_INSTANTIATE_AD(T)                                                              \
    template class ParameterStore<T>;                                                      \
    template class Tape<T>;                                                                \
    template Var<T> matmul<T>(Var<T>, Var<T>, bool, bool);                                 \
    template Var<T> add<T>(Var<T>, Var<T>);                                                \
    template Var<T> sub<T>(Var<T>, Var<T>);                                                \
    template Var<T> mul<T>(Var<T>, Var<T>);                                                \
    template Var<T> scale<T>(Var<T>, T);                                                   \
    template Var<T> scale_rows<T>(Var<T>, Var<T>);                                         \
    template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                       \
    template Var<T> reshape<T>(Var<T>, Shape);                                             \
    template Var<T> conv2d<T>(Var<T>, Var<T>);                                             \
    template Var<T> sigmoid<T>(Var<T>);                                                    \
    template Var<T> tanh<T>(Var<T>);                                                       \
    template Var<T> relu<T>(Var<T>);                                                       \
    template Var<T> leaky_relu<T>(Var<T>, T);                                              \
    template Var<T> softmax<T>(Var<T>);                                                    \
    template Var<T> segment_softmax<T>(Var<T>, IndexList);                                 \
    template Var<T> sum<T>(Var<T>);                                                        \
    template Var<T> row_sum<T>(Var<T>);                                                    \
    template Var<T> gather_rows<T>(Var<T>, IndexList);                                     \
    template Var<T> scatter_add_rows<T>(Var<T>, IndexList, std::size_t);                   \
    template Var<T> ccorr<T>(Var<T>, Var<T>);                                              \
    template Var<T> ccorr_rows<T>(Var<T>, Var<T>);                                         \
    template Var<T> bce_with_logits<T>(Var<T>, const Tensor<T>&, T);

KGC_INSTANTIATE_AD(float)
KGC_INSTANTIATE_AD(double)

}  // namespace kgc::ad
