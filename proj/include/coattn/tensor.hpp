#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "coattn/error.hpp"

namespace coattn {

// Reverse-mode autodiff core. Every tensor is a rank-2 array of doubles
// (vectors are k x 1, scalars 1 x 1). Operations execute eagerly; when a
// Tape is active and an input participates in gradients, the op records a
// backward closure on the tape.
//
// Gradient accumulation contract:
//   * grad buffers accumulate with += across backward() calls from
//     *different* tapes (this is how per-example losses in a batch add up);
//   * backward() on the same tape twice is rejected with ContractError --
//     tapes are single-use and rebuilt per forward pass.

struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad; // empty until first accumulation
    bool requires_grad = false;
    std::string name; // parameters only

    std::size_t size() const { return rows * cols; }
    double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

using NodePtr = std::shared_ptr<TensorNode>;

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor full(std::size_t rows, std::size_t cols, double v);
    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->size(); }

    double& at(std::size_t r, std::size_t c) { return node_->at(r, c); }
    double at(std::size_t r, std::size_t c) const { return node_->at(r, c); }
    double item() const;

    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    const std::vector<double>& grad() const;
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    double grad_at(std::size_t r, std::size_t c) const;
    void zero_grad() { if (node_) node_->grad.clear(); }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool b) { node_->requires_grad = b; return *this; }
    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string n) { node_->name = std::move(n); return *this; }

    std::string shape_str() const;

    const NodePtr& node() const { return node_; }
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

private:
    NodePtr node_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // While a Scope is alive, ops on this thread record onto the tape.
    class Scope {
    public:
        explicit Scope(Tape& t);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* prev_;
    };

    // Suspends recording (greedy baselines, finite-difference probes).
    class NoGrad {
    public:
        NoGrad();
        ~NoGrad();
        NoGrad(const NoGrad&) = delete;
        NoGrad& operator=(const NoGrad&) = delete;

    private:
        Tape* prev_;
    };

    static Tape* active();

    void record(std::function<void()> backward_step);
    std::size_t size() const { return steps_.size(); }
    bool consumed() const { return consumed_; }

    // Seeds d(loss)/d(loss) = 1 and replays recorded steps in reverse.
    // `loss` must be scalar and must have been produced under this tape.
    void backward(const Tensor& loss);

private:
    std::vector<std::function<void()>> steps_;
    bool consumed_ = false;
};

// ---- primitive operations ------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // elementwise
Tensor scale(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, const Tensor& s); // s is 1x1
Tensor add_col(const Tensor& x, const Tensor& bias); // bias k x 1, broadcast over columns
Tensor broadcast_col(const Tensor& v, std::size_t n); // k x 1 -> k x n
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1); // [c0, c1)
Tensor softmax_columns(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor sum(const Tensor& x); // 1x1
Tensor pick(const Tensor& x, std::size_t r, std::size_t c); // 1x1
// log of the (idx, 0) entry of a column distribution, clamped to [1e-300, 1].
Tensor log_prob_at(const Tensor& dist, std::size_t idx);
// rows grouped in consecutive blocks of `pool`; output row r is the max over
// input rows [r*pool, (r+1)*pool).
Tensor maxout_pool(const Tensor& x, std::size_t pool);
// table is e x V; output column t is table column ids[t]. Gradients scatter
// back into the table except for columns with id < frozen_prefix.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        std::size_t frozen_prefix);

// affine(W, x, b) = W * x + b-per-column; the workhorse composite.
Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b);

// ---- helpers shared by modules that define fused ops ----------------------

// True when a tape is active and any input wants gradients; fused ops use it
// to decide whether to record.
bool grad_enabled(std::initializer_list<const Tensor*> inputs);

// Marks the output as gradient-bearing and records the step.
void record_step(Tensor& out, std::function<void()> backward_step);

} // namespace coattn
