#include "coattn/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace coattn {

namespace {

thread_local Tape* g_active_tape = nullptr;

NodePtr make_node(std::size_t rows, std::size_t cols) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(rows * cols, 0.0);
    return n;
}

std::string shape_of(const Tensor& t) { return t.shape_str(); }

// Output-side gradient, or nullptr when nothing downstream contributed.
const std::vector<double>* out_grad(const NodePtr& n) {
    if (n->grad.empty()) return nullptr;
    return &n->grad;
}

} // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
    return Tensor(make_node(rows, cols));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v) {
    Tensor t(make_node(rows, cols));
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols)
        throw ShapeError("Tensor::from: " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " needs " + std::to_string(rows * cols) + " values, got " +
                         std::to_string(data.size()));
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(data);
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from(1, 1, {v}); }

double Tensor::item() const {
    if (size() != 1)
        throw ContractError("Tensor::item: tensor is " + shape_str() + ", not scalar");
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

double Tensor::grad_at(std::size_t r, std::size_t c) const {
    if (node_->grad.empty()) return 0.0;
    return node_->grad[r * node_->cols + c];
}

std::string Tensor::shape_str() const {
    if (!node_) return "<null>";
    return std::to_string(node_->rows) + "x" + std::to_string(node_->cols);
}

// ---- Tape ------------------------------------------------------------------

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape::NoGrad::NoGrad() : prev_(g_active_tape) { g_active_tape = nullptr; }
Tape::NoGrad::~NoGrad() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
}

void Tape::backward(const Tensor& loss) {
    if (consumed_)
        throw ContractError("Tape::backward: tape already consumed; tapes are single-use");
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("Tape::backward: loss must be scalar, got " +
                            (loss.defined() ? loss.shape_str() : std::string("<null>")));
    consumed_ = true;
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

// ---- op plumbing -----------------------------------------------------------

bool grad_enabled(std::initializer_list<const Tensor*> inputs) {
    if (!g_active_tape) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

void record_step(Tensor& out, std::function<void()> backward_step) {
    out.node()->requires_grad = true;
    g_active_tape->record(std::move(backward_step));
}

// ---- primitive ops ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree: " + shape_of(a) + " vs " + shape_of(b));
    const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
    Tensor out = Tensor::zeros(p, r);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
            double aik = av[i * q + k];
            if (aik == 0.0) continue;
            const double* brow = bv + k * r;
            double* orow = ov + i * r;
            for (std::size_t j = 0; j < r; ++j) orow[j] += aik * brow[j];
        }
    if (grad_enabled({&a, &b})) {
        record_step(out, [an = a.node(), bn = b.node(), on = out.node(), p, q, r] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            const double* gv = g->data();
            if (an->requires_grad) {
                an->ensure_grad();
                // dA = dC * B^T
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t k = 0; k < q; ++k) {
                        double acc = 0.0;
                        const double* grow = gv + i * r;
                        const double* brow = bn->value.data() + k * r;
                        for (std::size_t j = 0; j < r; ++j) acc += grow[j] * brow[j];
                        an->grad[i * q + k] += acc;
                    }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                // dB = A^T * dC
                for (std::size_t k = 0; k < q; ++k)
                    for (std::size_t i = 0; i < p; ++i) {
                        double aik = an->value[i * q + k];
                        if (aik == 0.0) continue;
                        const double* grow = gv + i * r;
                        double* brow = bn->grad.data() + k * r;
                        for (std::size_t j = 0; j < r; ++j) brow[j] += aik * grow[j];
                    }
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = Tensor::zeros(c, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node(), r, c] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += (*g)[j * r + i];
        });
    }
    return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shapes disagree: " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
    if (grad_enabled({&a, &b})) {
        record_step(out, [an = a.node(), bn = b.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) an->grad[i] += (*g)[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) bn->grad[i] += (*g)[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
    if (grad_enabled({&a, &b})) {
        record_step(out, [an = a.node(), bn = b.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) an->grad[i] += (*g)[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) bn->grad[i] -= (*g)[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
    if (grad_enabled({&a, &b})) {
        record_step(out, [an = a.node(), bn = b.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) an->grad[i] += (*g)[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) bn->grad[i] += (*g)[i] * an->value[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] * c;
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node(), c] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < g->size(); ++i) xn->grad[i] += c * (*g)[i];
        });
    }
    return out;
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.size() != 1)
        throw ShapeError("mul_scalar: scale factor must be 1x1, got " + s.shape_str());
    const double sv = s.values()[0];
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = x.values()[i] * sv;
    if (grad_enabled({&x, &s})) {
        record_step(out, [xn = x.node(), sn = s.node(), on = out.node(), sv] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) xn->grad[i] += sv * (*g)[i];
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                double acc = 0.0;
                for (std::size_t i = 0; i < g->size(); ++i) acc += (*g)[i] * xn->value[i];
                sn->grad[0] += acc;
            }
        });
    }
    return out;
}

Tensor add_col(const Tensor& x, const Tensor& bias) {
    if (bias.cols() != 1 || bias.rows() != x.rows())
        throw ShapeError("add_col: bias must be " + std::to_string(x.rows()) + "x1, got " +
                         bias.shape_str());
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double bi = bias.at(i, 0);
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + bi;
    }
    if (grad_enabled({&x, &bias})) {
        record_step(out, [xn = x.node(), bn = bias.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            const std::size_t r = on->rows, c = on->cols;
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < g->size(); ++i) xn->grad[i] += (*g)[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += (*g)[i * c + j];
                    bn->grad[i] += acc;
                }
            }
        });
    }
    return out;
}

Tensor broadcast_col(const Tensor& v, std::size_t n) {
    if (v.cols() != 1)
        throw ShapeError("broadcast_col: input must be a column vector, got " + v.shape_str());
    Tensor out = Tensor::zeros(v.rows(), n);
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = v.at(i, 0);
    if (grad_enabled({&v})) {
        record_step(out, [vn = v.node(), on = out.node(), n] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            vn->ensure_grad();
            for (std::size_t i = 0; i < vn->rows; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += (*g)[i * n + j];
                vn->grad[i] += acc;
            }
        });
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = parts[0].cols();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != c)
            throw ShapeError("concat_rows: column counts disagree: " + parts[0].shape_str() +
                             " vs " + p.shape_str());
        total += p.rows();
    }
    Tensor out = Tensor::zeros(total, c);
    std::size_t row = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out.values().begin() + row * c);
        row += p.rows();
    }
    bool need = false;
    for (const Tensor& p : parts) need = need || p.requires_grad();
    if (Tape::active() && need) {
        std::vector<NodePtr> nodes;
        for (const Tensor& p : parts) nodes.push_back(p.node());
        record_step(out, [nodes, on = out.node(), c] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            std::size_t row = 0;
            for (const NodePtr& pn : nodes) {
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (std::size_t i = 0; i < pn->value.size(); ++i)
                        pn->grad[i] += (*g)[row * c + i];
                }
                row += pn->rows;
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != r)
            throw ShapeError("concat_cols: row counts disagree: " + parts[0].shape_str() +
                             " vs " + p.shape_str());
        total += p.cols();
    }
    Tensor out = Tensor::zeros(r, total);
    std::size_t col = 0;
    for (const Tensor& p : parts) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j) out.at(i, col + j) = p.at(i, j);
        col += p.cols();
    }
    bool need = false;
    for (const Tensor& p : parts) need = need || p.requires_grad();
    if (Tape::active() && need) {
        std::vector<NodePtr> nodes;
        for (const Tensor& p : parts) nodes.push_back(p.node());
        record_step(out, [nodes, on = out.node(), r, total] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            std::size_t col = 0;
            for (const NodePtr& pn : nodes) {
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < pn->cols; ++j)
                            pn->grad[i * pn->cols + j] += (*g)[i * total + col + j];
                }
                col += pn->cols;
            }
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
    if (c0 >= c1 || c1 > x.cols())
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") invalid for " + x.shape_str());
    const std::size_t r = x.rows(), w = c1 - c0;
    Tensor out = Tensor::zeros(r, w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(i, j) = x.at(i, c0 + j);
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node(), c0, r, w] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    xn->grad[i * xn->cols + c0 + j] += (*g)[i * w + j];
        });
    }
    return out;
}

Tensor softmax_columns(const Tensor& x) {
    const std::size_t r = x.rows(), c = x.cols();
    Tensor out = Tensor::zeros(r, c);
    for (std::size_t j = 0; j < c; ++j) {
        double mx = x.at(0, j);
        for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, x.at(i, j));
        double total = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            double e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            total += e;
        }
        for (std::size_t i = 0; i < r; ++i) out.at(i, j) /= total;
    }
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node(), r, c] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t j = 0; j < c; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < r; ++i) dot += (*g)[i * c + j] * on->value[i * c + j];
                for (std::size_t i = 0; i < r; ++i)
                    xn->grad[i * c + j] += on->value[i * c + j] * ((*g)[i * c + j] - dot);
            }
        });
    }
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = std::tanh(x.values()[i]);
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < g->size(); ++i) {
                double y = on->value[i];
                xn->grad[i] += (*g)[i] * (1.0 - y * y);
            }
        });
    }
    return out;
}

namespace {

// Overflow-free logistic.
double logistic(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = logistic(x.values()[i]);
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < g->size(); ++i) {
                double y = on->value[i];
                xn->grad[i] += (*g)[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

Tensor exp(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.values()[i] = std::exp(x.values()[i]);
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < g->size(); ++i) xn->grad[i] += (*g)[i] * on->value[i];
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) total += v;
    Tensor out = Tensor::scalar(total);
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node()] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += (*g)[0];
        });
    }
    return out;
}

Tensor pick(const Tensor& x, std::size_t r, std::size_t c) {
    if (r >= x.rows() || c >= x.cols())
        throw ShapeError("pick: index (" + std::to_string(r) + ", " + std::to_string(c) +
                         ") out of range for " + x.shape_str());
    Tensor out = Tensor::scalar(x.at(r, c));
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node(), r, c] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            xn->grad[r * xn->cols + c] += (*g)[0];
        });
    }
    return out;
}

Tensor log_prob_at(const Tensor& dist, std::size_t idx) {
    if (dist.cols() != 1)
        throw ShapeError("log_prob_at: distribution must be a column vector, got " + dist.shape_str());
    if (idx >= dist.rows())
        throw ShapeError("log_prob_at: index " + std::to_string(idx) + " out of range for " +
                         dist.shape_str());
    double p = dist.at(idx, 0);
    double clamped = std::min(std::max(p, 1e-300), 1.0);
    Tensor out = Tensor::scalar(std::log(clamped));
    if (grad_enabled({&dist})) {
        record_step(out, [dn = dist.node(), on = out.node(), idx] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            dn->ensure_grad();
            double p = std::max(dn->value[idx], 1e-300);
            dn->grad[idx] += (*g)[0] / p;
        });
    }
    return out;
}

Tensor maxout_pool(const Tensor& x, std::size_t pool) {
    if (pool == 0 || x.rows() % pool != 0)
        throw ShapeError("maxout_pool: row count " + std::to_string(x.rows()) +
                         " not divisible by pool " + std::to_string(pool));
    const std::size_t out_rows = x.rows() / pool, c = x.cols();
    Tensor out = Tensor::zeros(out_rows, c);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out_rows * c);
    for (std::size_t r = 0; r < out_rows; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            std::size_t best = r * pool;
            double bv = x.at(best, j);
            for (std::size_t k = 1; k < pool; ++k) {
                double v = x.at(r * pool + k, j);
                if (v > bv) {
                    bv = v;
                    best = r * pool + k;
                }
            }
            out.at(r, j) = bv;
            (*argmax)[r * c + j] = best;
        }
    if (grad_enabled({&x})) {
        record_step(out, [xn = x.node(), on = out.node(), argmax, out_rows, c] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            xn->ensure_grad();
            for (std::size_t r = 0; r < out_rows; ++r)
                for (std::size_t j = 0; j < c; ++j)
                    xn->grad[(*argmax)[r * c + j] * c + j] += (*g)[r * c + j];
        });
    }
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                        std::size_t frozen_prefix) {
    const std::size_t e = table.rows(), v = table.cols();
    Tensor out = Tensor::zeros(e, ids.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
        int id = ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw DataError("embedding_lookup: token id " + std::to_string(id) +
                            " out of range for vocabulary of " + std::to_string(v));
        for (std::size_t i = 0; i < e; ++i) out.at(i, t) = table.at(i, static_cast<std::size_t>(id));
    }
    if (grad_enabled({&table})) {
        record_step(out, [tn = table.node(), on = out.node(), ids, frozen_prefix, e] {
            const std::vector<double>* g = out_grad(on);
            if (!g) return;
            tn->ensure_grad();
            for (std::size_t t = 0; t < ids.size(); ++t) {
                auto id = static_cast<std::size_t>(ids[t]);
                if (id < frozen_prefix) continue;
                for (std::size_t i = 0; i < e; ++i)
                    tn->grad[i * tn->cols + id] += (*g)[i * on->cols + t];
            }
        });
    }
    return out;
}

Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
    return add_col(matmul(w, x), b);
}

} // namespace coattn
