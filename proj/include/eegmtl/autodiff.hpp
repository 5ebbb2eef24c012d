#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eegmtl/errors.hpp"
#include "eegmtl/tensor.hpp"

namespace eegmtl {

template <class S>
class Tape;

/// Handle to one node of a tape. Cheap to copy; valid as long as the tape lives.
template <class S>
struct Var {
    Tape<S>* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const noexcept { return tape != nullptr && id >= 0; }
    const Tensor<S>& value() const;
    const Tensor<S>& grad() const;
    const Dims& dims() const { return value().dims(); }
};

/// Named trainable tensor. Gradients accumulate across backward passes until
/// zero_grad. Names are unique within a model and double as RNG stream names,
/// so init draws do not depend on which other parameters exist.
template <class S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;

    Parameter(std::string name_, Tensor<S> value_)
        : name(std::move(name_)), value(std::move(value_)), grad(Tensor<S>(value.dims())) {}

    void zero_grad() { grad.set_zero(); }
};

/// Per-pass gradient buffers, indexed by node id.
template <class S>
using Flow = std::vector<Tensor<S>>;

template <class S>
struct Node {
    Tensor<S> value;
    Tensor<S> grad;                       // persistent, additive across backward passes
    std::vector<std::int32_t> parents;
    std::function<void(Tape<S>&, const Node<S>&, Flow<S>&)> backward;
    std::int32_t id = -1;
};

/// Recording tape for one forward/backward pass. Nodes are appended in
/// topological order by construction (an op's parents always precede it), so
/// the backward sweep is a single reverse scan. The tape is confined to one
/// logical thread and discarded after use.
template <class S>
class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_; }
    std::size_t node_count() const noexcept { return nodes_.size(); }

    /// Leaf holding a plain value (input data, targets, constants).
    Var<S> leaf(Tensor<S> value) { return push(std::move(value), {}, nullptr); }

    Var<S> push(Tensor<S> value,
                std::vector<std::int32_t> parents,
                std::function<void(Tape<S>&, const Node<S>&, Flow<S>&)> backward) {
        Node<S> n;
        n.id = static_cast<std::int32_t>(nodes_.size());
        if (record_) {
            n.grad = Tensor<S>(value.dims());
            n.parents = std::move(parents);
            n.backward = std::move(backward);
        }
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return Var<S>{this, nodes_.back().id};
    }

    const Node<S>& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Node<S>& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }

    /// Reverse sweep from a scalar root. Each reachable node is visited exactly
    /// once in reverse topological order; the pass distributes fresh flow
    /// buffers and then merges them into the persistent grads, so calling
    /// backward again adds another full pass (grad is additive).
    void backward(Var<S> root) {
        if (!record_) throw ShapeError("backward on a non-recording tape");
        if (root.tape != this) throw ShapeError("backward root belongs to another tape");
        const Node<S>& r = node(root.id);
        if (r.value.size() != 1) {
            throw ShapeError("backward requires a scalar root, got " + dims_str(r.value.dims()));
        }

        const auto rid = static_cast<std::size_t>(root.id);
        Flow<S> flow(rid + 1);
        std::vector<char> reached(rid + 1, 0);
        flow[rid] = Tensor<S>::scalar(S(1));
        reached[rid] = 1;

        for (std::size_t id = rid + 1; id-- > 0;) {
            if (!reached[id]) continue;
            Node<S>& n = nodes_[id];
            for (std::int32_t p : n.parents) {
                const auto pi = static_cast<std::size_t>(p);
                if (!reached[pi]) {
                    reached[pi] = 1;
                    flow[pi] = Tensor<S>(nodes_[pi].value.dims());
                }
            }
            if (n.backward) n.backward(*this, n, flow);
            const Tensor<S>& f = flow[id];
            for (std::size_t i = 0; i < f.size(); ++i) n.grad[i] += f[i];
            flow[id] = Tensor<S>();
        }
    }

    void zero_grads() {
        for (Node<S>& n : nodes_) n.grad.set_zero();
    }

private:
    std::deque<Node<S>> nodes_;
    bool record_ = true;
};

template <class S>
const Tensor<S>& Var<S>::value() const {
    return tape->node(id).value;
}

template <class S>
const Tensor<S>& Var<S>::grad() const {
    return tape->node(id).grad;
}

/// Binds parameters into a tape, once each, and remembers the binding order so
/// gradients flow back into Parameter::grad deterministically.
template <class S>
class GraphContext {
public:
    explicit GraphContext(Tape<S>& tape) : tape_(&tape) {}

    Tape<S>& tape() noexcept { return *tape_; }
    bool recording() const noexcept { return tape_->recording(); }

    Var<S> use(Parameter<S>& p) {
        auto it = bound_.find(&p);
        if (it != bound_.end()) return Var<S>{tape_, it->second};
        Var<S> v = tape_->leaf(p.value);
        bound_.emplace(&p, v.id);
        order_.push_back({&p, v.id});
        return v;
    }

    Var<S> input(Tensor<S> x) { return tape_->leaf(std::move(x)); }

    /// param.grad += scale * tape grad, in binding order.
    void accumulate_param_grads(S scale = S(1)) {
        if (!tape_->recording()) throw ShapeError("cannot accumulate grads from a non-recording tape");
        for (const auto& [p, id] : order_) {
            const Tensor<S>& g = tape_->node(id).grad;
            for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += scale * g[i];
        }
    }

    const std::vector<std::pair<Parameter<S>*, std::int32_t>>& bindings() const { return order_; }

private:
    Tape<S>* tape_;
    std::unordered_map<const Parameter<S>*, std::int32_t> bound_;
    std::vector<std::pair<Parameter<S>*, std::int32_t>> order_;
};

} // namespace eegmtl
