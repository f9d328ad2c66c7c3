#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "g2/matrix.hpp"

namespace g2::ad {

class Tape;

/// Handle to a node on a tape.
struct Value {
    Tape* tape = nullptr;
    std::size_t id = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// Named trainable tensor with a gradient accumulator of the same shape.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }
    std::size_t count() const { return value.size(); }
};

/// Append-only reverse-mode tape over dense matrices. Each recorded node
/// caches its forward value and a backward closure; backward() visits nodes
/// in strictly decreasing id order exactly once.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Value push(Matrix value, BackwardFn backward = nullptr, Parameter* param = nullptr) {
        nodes_.push_back(Node{std::move(value), std::move(backward), param});
        const Node& n = nodes_.back();
        return Value{this, nodes_.size() - 1, n.value.rows(), n.value.cols()};
    }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& value(const Value& v) const { return nodes_[v.id].value; }

    std::size_t size() const { return nodes_.size(); }

    /// Drop all nodes with id >= n (checkpointing deep forward-only passes).
    void truncate(std::size_t n) {
        nodes_.resize(n);
        grads_.clear();
    }

    void clear() { truncate(0); }

    /// Reverse accumulation from a scalar loss. Parameter leaves accumulate
    /// into their Parameter::grad.
    void backward(const Value& loss) {
        if (loss.tape != this) throw std::invalid_argument("backward: value from another tape");
        if (loss.rows != 1 || loss.cols != 1)
            throw std::invalid_argument("backward: loss must be a 1x1 scalar");
        grads_.assign(nodes_.size(), Matrix());
        grads_[loss.id] = Matrix(1, 1, 1.0);
        for (std::size_t id = loss.id + 1; id-- > 0;) {
            if (grads_[id].size() == 0) continue;
            Node& n = nodes_[id];
            if (n.param) n.param->grad += grads_[id];
            if (n.backward) n.backward(*this, id);
        }
    }

    /// Gradient buffer of a node, allocated on first touch (backward only).
    Matrix& grad(std::size_t id) {
        Matrix& g = grads_[id];
        if (g.size() == 0) g = Matrix(nodes_[id].value.rows(), nodes_[id].value.cols());
        return g;
    }

    bool has_grad(std::size_t id) const {
        return id < grads_.size() && grads_[id].size() != 0;
    }

    void warn(std::string msg) { warnings_.push_back(std::move(msg)); }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    struct Node {
        Matrix value;
        BackwardFn backward;
        Parameter* param;
    };
    std::vector<Node> nodes_;
    std::vector<Matrix> grads_;
    std::vector<std::string> warnings_;
};

/// Record a parameter as a leaf; gradients flow into param.grad.
inline Value leaf(Tape& t, Parameter& p) { return t.push(p.value, nullptr, &p); }

/// Record a constant (no gradient).
inline Value constant(Tape& t, Matrix m) { return t.push(std::move(m)); }

}  // namespace g2::ad
