#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "arflow/error.hpp"
#include "arflow/kernels.hpp"
#include "arflow/tensor.hpp"

namespace arflow {

// A tensor paired with its node id on a tape. id < 0 means untraced
// (a constant, or a value computed with no tape); gradients never flow
// into untraced values.
template <typename T>
struct Traced {
    Tensor<T> value;
    int id = -1;
};

template <typename T>
Traced<T> constant(Tensor<T> value) {
    return Traced<T>{std::move(value), -1};
}

// Reverse-mode tape, rebuilt for every forward pass. Nodes are appended in
// execution order, so ids already form a topological order: walking them
// from the loss id downward visits each node after all of its consumers.
// Each non-leaf node carries a closure that receives the node's output
// gradient and accumulates into its inputs' slots.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

    int push(Shape value_shape, BackwardFn backward) {
        nodes_.push_back(Node{std::move(value_shape), std::move(backward)});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Registers a tensor whose gradient should survive backward (parameters,
    // probed inputs).
    Traced<T> leaf(Tensor<T> value) {
        int id = push(value.shape(), nullptr);
        return Traced<T>{std::move(value), id};
    }

    int size() const { return static_cast<int>(nodes_.size()); }

    void accumulate(int id, const Tensor<T>& g) {
        if (id < 0) return;
        ARF_CHECK(id < size(), ErrorKind::contract,
                  "gradient for unknown node " << id);
        Tensor<T>& slot = grads_[static_cast<size_t>(id)];
        if (!slot.defined()) {
            slot = g.clone();
        } else {
            ARF_CHECK(slot.size() == g.size(), ErrorKind::dimension,
                      "gradient size mismatch at node " << id << ": "
                      << slot.size() << " vs " << g.size());
            kern::active<T>().axpy(T(1), g.data(), slot.data(), slot.size());
        }
    }

    bool has_grad(int id) const {
        return id >= 0 && id < size() && grads_[static_cast<size_t>(id)].defined();
    }

    const Tensor<T>& grad(int id) const {
        ARF_CHECK(has_grad(id), ErrorKind::contract,
                  "no gradient recorded for node " << id);
        return grads_[static_cast<size_t>(id)];
    }

    Tensor<T> grad_or_zeros(int id) const {
        if (has_grad(id)) return grads_[static_cast<size_t>(id)].clone();
        ARF_CHECK(id >= 0 && id < size(), ErrorKind::contract,
                  "gradient query for unknown node " << id);
        return Tensor<T>::zeros(nodes_[static_cast<size_t>(id)].shape);
    }

    // Seeds d(root)/d(root) = 1 (root must be a single element) and sweeps
    // the tape in reverse creation order. Ancestors of root all have smaller
    // ids, so one pass suffices; nodes whose gradient never materialized are
    // skipped.
    void backward(int root) {
        ARF_CHECK(root >= 0 && root < size(), ErrorKind::contract,
                  "backward from unknown node " << root);
        const Shape& rs = nodes_[static_cast<size_t>(root)].shape;
        ARF_CHECK(numel(rs) == 1, ErrorKind::contract,
                  "backward root must be scalar, has " << numel(rs)
                                                       << " elements");
        accumulate(root, Tensor<T>::full(rs, T(1)));
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.backward && grads_[static_cast<size_t>(i)].defined()) {
                n.backward(*this, grads_[static_cast<size_t>(i)]);
            }
        }
    }

private:
    struct Node {
        Shape shape;
        BackwardFn backward; // null for leaves
    };

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
};

} // namespace arflow
