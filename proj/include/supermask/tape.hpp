#pragma once

#include "supermask/error.hpp"
#include "supermask/tensor.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace supermask {

/// Handle to a value recorded on a Tape.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;
    bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode autodiff record for one forward pass.
///
/// Values are appended in forward order; `backward` walks them in exact
/// reverse order. A node only keeps its backward closure when at least one
/// input needs a gradient, so inference passes record values only.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, Var self)>;

    Var leaf(BasicTensor<T> value, bool trainable = false) {
        check_finite(value, "leaf");
        nodes_.push_back(Node{std::move(value), std::nullopt, {}, trainable, trainable, true});
        return Var{nodes_.size() - 1};
    }

    /// Appends an op result. `fn` is dropped when no input requires grad.
    /// Op outputs are not scanned for NaN/Inf (it costs a full pass over every
    /// activation); non-finite values surface in the loss and in the
    /// trainable gradients, which `backward` checks.
    Var record(BasicTensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn,
               [[maybe_unused]] std::string_view op_name) {
        bool needs = false;
        for (Var in : inputs) needs = needs || requires_grad(in);
        nodes_.push_back(Node{std::move(value), std::nullopt, needs ? std::move(fn) : BackwardFn{},
                              needs, false, false});
        return Var{nodes_.size() - 1};
    }

    /// The reference is invalidated by the next `leaf` or `record`.
    const BasicTensor<T>& value(Var v) const { return node(v).value; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient accumulator for `v`, allocated as zeros on first use.
    BasicTensor<T>& grad_buffer(Var v) {
        Node& n = node(v);
        if (!n.grad) n.grad.emplace(n.value.shape());
        return *n.grad;
    }

    bool has_grad(Var v) const { return node(v).grad.has_value(); }

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure.
    void backward(Var loss) {
        if (!loss.valid() || loss.id >= nodes_.size()) {
            throw InvalidArgument("backward: loss was not produced by this tape");
        }
        if (node(loss).value.size() != 1) {
            throw ShapeError("backward: loss must be a scalar, got " +
                             shape_string(node(loss).value.shape()));
        }
        check_finite(node(loss).value, "loss");
        grad_buffer(loss)[0] = T{1};
        for (std::size_t id = loss.id + 1; id-- > 0;) {
            Node& n = nodes_[id];
            if (!n.requires_grad || !n.backward || !n.grad) continue;
            n.backward(*this, Var{id});
        }
        for (Node& n : nodes_) {
            if (n.trainable && n.grad) check_finite(*n.grad, "gradient");
        }
        backward_done_ = true;
    }

    /// Gradient of a trainable leaf after `backward`. Zeros if the loss does
    /// not depend on it.
    const BasicTensor<T>& grad(Var leaf_var) {
        Node& n = node(leaf_var);
        if (!n.is_leaf || !n.trainable) {
            throw InvalidArgument("grad requested for a node that is not a trainable leaf");
        }
        if (!backward_done_) throw InvalidArgument("grad requested before backward");
        return grad_buffer(leaf_var);
    }

private:
    struct Node {
        BasicTensor<T> value;
        std::optional<BasicTensor<T>> grad;
        BackwardFn backward;
        bool requires_grad;
        bool trainable;
        bool is_leaf;
    };

    Node& node(Var v) {
        if (v.id >= nodes_.size()) throw InvalidArgument("variable does not belong to this tape");
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) throw InvalidArgument("variable does not belong to this tape");
        return nodes_[v.id];
    }

    static void check_finite(const BasicTensor<T>& t, std::string_view what) {
        if (!t.all_finite()) throw NumericError("non-finite value produced by " + std::string(what));
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

} // namespace supermask
