#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "resp/rng.hpp"
#include "resp/tensor.hpp"

namespace resp {

/// A learnable array. Identity (its address) is what gradients are keyed on, so
/// parameters are owned by their model and never copied during a forward pass.
struct Parameter {
    std::string name;
    Tensor value;
};

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    explicit Var(std::uint32_t id) : id_(id) {}
    std::uint32_t id() const { return id_; }

private:
    std::uint32_t id_ = 0;
};

/// Gradient of a scalar loss for every parameter registered on the tape that produced it.
class Gradients {
public:
    const Tensor& of(const Parameter& p) const;
    bool contains(const Parameter& p) const { return index_.contains(&p); }
    std::size_t size() const { return entries_.size(); }

    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void insert(const Parameter& p, Tensor grad);
    /// Element-wise sum, in the order entries were first seen; used for batch accumulation.
    void accumulate(const Gradients& other, double weight = 1.0);
    void scale(double factor);

private:
    std::vector<std::pair<const Parameter*, Tensor>> entries_;
    std::unordered_map<const Parameter*, std::size_t> index_;
};

/// Define-by-run gradient tape. A fresh tape is built for every forward pass;
/// nodes are stored in execution order, which is already a topological order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Registers a parameter; registering the same parameter twice returns the same node,
    /// so shared weights (one encoder applied to many windows) accumulate one gradient.
    Var param(const Parameter& p);

    const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    Var matmul(Var a, Var b);
    /// a · bᵀ without materializing the transpose.
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    /// Adds a row vector to every row of x.
    Var add_row(Var x, Var row);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double factor);
    /// x times a single-element variable.
    Var mul_scalar(Var x, Var s);
    Var add_constant(Var x, double c);
    Var softmax_rows(Var x);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var gelu(Var x);
    Var sigmoid(Var x);
    /// Inverted dropout; identity when !training or rate == 0. Throws for rate outside [0, 1).
    Var dropout(Var x, double rate, bool training, Rng& rng);
    Var mean_rows(Var x);
    Var concat_cols(std::span<const Var> parts);
    Var stack_rows(std::span<const Var> rows);
    Var sum(Var x);
    /// Cross-entropy against (1 - smoothing)·onehot(target) + smoothing / C.
    Var smoothed_cross_entropy(Var logits, std::size_t target, double smoothing);
    /// Forward value is onehot(index); the backward pass routes gradients to `soft` unchanged.
    Var straight_through(Var soft, std::size_t index);

    /// Reverse pass from a scalar loss. The tape is consumed: a second call throws.
    Gradients backward(Var loss);

private:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    struct Node {
        Tensor value;
        bool requires_grad = false;
        BackwardFn backward;
    };

    Var push(Tensor value, bool requires_grad, BackwardFn fn);
    void check_live() const;
    bool needs(Var v) const { return nodes_[v.id()].requires_grad; }
    Tensor& grad_slot(Var v);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<std::pair<const Parameter*, std::uint32_t>> params_;
    std::unordered_map<const Parameter*, std::uint32_t> param_index_;
    bool consumed_ = false;
};

// Raw kernels shared by the tape and by cost/oracle code. All accumulate into `out`
// in increasing inner-index order.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
             std::size_t k, std::size_t n);

}  // namespace resp
