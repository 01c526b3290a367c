#include "coattn/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "coattn/error.hpp"

namespace coattn {

namespace {

constexpr double kMaskPenalty = -1e30;

Tensor uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng,
                    const std::string& name) {
    Tensor t = Tensor::zeros(rows, cols);
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.values()) v = rng.uniform(-bound, bound);
    t.set_requires_grad(true);
    t.set_name(name);
    return t;
}

std::size_t argmax_lowest(const Tensor& dist) {
    std::size_t best = 0;
    double bv = dist.at(0, 0);
    for (std::size_t i = 1; i < dist.rows(); ++i)
        if (dist.at(i, 0) > bv) {
            bv = dist.at(i, 0);
            best = i;
        }
    return best;
}

} // namespace

// ---- mixture of experts ------------------------------------------------------

MoeLayer MoeLayer::init(std::size_t in, std::size_t out, std::size_t experts, std::size_t topk,
                        Rng& rng, const std::string& name) {
    if (experts < 2)
        throw ConfigError("MoeLayer: need at least 2 experts, got " + std::to_string(experts));
    if (topk < 1 || topk > experts)
        throw ConfigError("MoeLayer: topk " + std::to_string(topk) + " outside [1, " +
                          std::to_string(experts) + "]");
    MoeLayer layer;
    layer.topk = topk;
    layer.gate_w = uniform_init(experts, in, in, rng, name + ".gate.w");
    layer.gate_b = uniform_init(experts, 1, in, rng, name + ".gate.b");
    for (std::size_t k = 0; k < experts; ++k) {
        layer.expert_w.push_back(uniform_init(out, in, in, rng,
                                              name + ".expert" + std::to_string(k) + ".w"));
        layer.expert_b.push_back(uniform_init(out, 1, in, rng,
                                              name + ".expert" + std::to_string(k) + ".b"));
    }
    return layer;
}

std::vector<Tensor> MoeLayer::parameters() const {
    std::vector<Tensor> out{gate_w, gate_b};
    for (const Tensor& t : expert_w) out.push_back(t);
    for (const Tensor& t : expert_b) out.push_back(t);
    return out;
}

Tensor moe_forward(const Tensor& x, const MoeLayer& layer) {
    const std::size_t experts = layer.experts();
    if (experts < 2)
        throw ConfigError("moe_forward: need at least 2 experts, got " + std::to_string(experts));
    const std::size_t topk = layer.topk;
    const std::size_t in = x.rows(), cols = x.cols();
    const std::size_t out_rows = layer.expert_w[0].rows();
    if (layer.gate_w.cols() != in)
        throw ShapeError("moe_forward: gate expects " + layer.gate_w.shape_str() +
                         ", input is " + x.shape_str());

    Tensor out = Tensor::zeros(out_rows, cols);
    auto selected = std::make_shared<std::vector<std::size_t>>(cols * topk);
    auto weights = std::make_shared<std::vector<double>>(cols * topk);
    auto expert_out = std::make_shared<std::vector<double>>(cols * topk * out_rows);

    std::vector<double> logits(experts);
    std::vector<std::size_t> order(experts);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t k = 0; k < experts; ++k) {
            double acc = layer.gate_b.at(k, 0);
            for (std::size_t i = 0; i < in; ++i) acc += layer.gate_w.at(k, i) * x.at(i, c);
            logits[k] = acc;
        }
        for (std::size_t k = 0; k < experts; ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });

        // Softmax over the selected logits only.
        double mx = logits[order[0]];
        double total = 0.0;
        for (std::size_t j = 0; j < topk; ++j) total += std::exp(logits[order[j]] - mx);
        for (std::size_t j = 0; j < topk; ++j) {
            std::size_t k = order[j];
            double w = std::exp(logits[k] - mx) / total;
            (*selected)[c * topk + j] = k;
            (*weights)[c * topk + j] = w;
            const Tensor& ew = layer.expert_w[k];
            const Tensor& eb = layer.expert_b[k];
            for (std::size_t r = 0; r < out_rows; ++r) {
                double acc = eb.at(r, 0);
                for (std::size_t i = 0; i < in; ++i) acc += ew.at(r, i) * x.at(i, c);
                (*expert_out)[(c * topk + j) * out_rows + r] = acc;
                out.at(r, c) += w * acc;
            }
        }
    }

    bool any_param_grad = layer.gate_w.requires_grad() || layer.gate_b.requires_grad();
    for (const Tensor& t : layer.expert_w) any_param_grad = any_param_grad || t.requires_grad();
    if (Tape::active() && (x.requires_grad() || any_param_grad)) {
        std::vector<NodePtr> ew, eb;
        for (const Tensor& t : layer.expert_w) ew.push_back(t.node());
        for (const Tensor& t : layer.expert_b) eb.push_back(t.node());
        record_step(out, [xn = x.node(), gw = layer.gate_w.node(), gb = layer.gate_b.node(), ew,
                          eb, on = out.node(), selected, weights, expert_out, in, cols, out_rows,
                          topk] {
            if (on->grad.empty()) return;
            const std::vector<double>& g = on->grad;
            for (std::size_t c = 0; c < cols; ++c) {
                // dw_j = <g_col, e_j>; dz via the softmax over selected logits.
                double s = 0.0;
                std::vector<double> dw(topk);
                for (std::size_t j = 0; j < topk; ++j) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < out_rows; ++r)
                        acc += g[r * cols + c] * (*expert_out)[(c * topk + j) * out_rows + r];
                    dw[j] = acc;
                    s += (*weights)[c * topk + j] * acc;
                }
                for (std::size_t j = 0; j < topk; ++j) {
                    std::size_t k = (*selected)[c * topk + j];
                    double w = (*weights)[c * topk + j];
                    double dz = w * (dw[j] - s);
                    if (ew[k]->requires_grad) {
                        ew[k]->ensure_grad();
                        eb[k]->ensure_grad();
                        for (std::size_t r = 0; r < out_rows; ++r) {
                            double gr = w * g[r * cols + c];
                            if (gr == 0.0) continue;
                            for (std::size_t i = 0; i < in; ++i)
                                ew[k]->grad[r * in + i] += gr * xn->value[i * cols + c];
                            eb[k]->grad[r] += gr;
                        }
                    }
                    if (gw->requires_grad) {
                        gw->ensure_grad();
                        gb->ensure_grad();
                        for (std::size_t i = 0; i < in; ++i)
                            gw->grad[k * in + i] += dz * xn->value[i * cols + c];
                        gb->grad[k] += dz;
                    }
                    if (xn->requires_grad) {
                        xn->ensure_grad();
                        for (std::size_t i = 0; i < in; ++i) {
                            double acc = dz * gw->value[k * in + i];
                            for (std::size_t r = 0; r < out_rows; ++r)
                                acc += w * ew[k]->value[r * in + i] * g[r * cols + c];
                            xn->grad[i * cols + c] += acc;
                        }
                    }
                }
            }
        });
    }
    return out;
}

// ---- scoring head -------------------------------------------------------------

ScoringHead ScoringHead::init(const DecoderConfig& config, Rng& rng, const std::string& name) {
    const std::size_t h = config.hidden, uw = config.u_width, pool = config.maxout_pool;
    const std::size_t l = h;             // head width
    const std::size_t in1 = uw + l;      // [u_t; r]
    ScoringHead head;
    head.wd_w = uniform_init(l, h + 2 * uw, h + 2 * uw, rng, name + ".wd.w");
    head.wd_b = uniform_init(l, 1, h + 2 * uw, rng, name + ".wd.b");
    head.m1_w = uniform_init(pool * l, in1, in1, rng, name + ".m1.w");
    head.m1_b = uniform_init(pool * l, 1, in1, rng, name + ".m1.b");
    head.moe = MoeLayer::init(in1, l, config.moe_experts, config.moe_topk, rng, name + ".moe");
    head.m2_w = uniform_init(pool * l, l, l, rng, name + ".m2.w");
    head.m2_b = uniform_init(pool * l, 1, l, rng, name + ".m2.b");
    head.m3_w = uniform_init(pool, 2 * l, 2 * l, rng, name + ".m3.w");
    head.m3_b = uniform_init(pool, 1, 2 * l, rng, name + ".m3.b");
    return head;
}

std::vector<Tensor> ScoringHead::parameters(bool moe_enabled) const {
    std::vector<Tensor> out{wd_w, wd_b};
    if (moe_enabled) {
        for (const Tensor& t : moe.parameters()) out.push_back(t);
    } else {
        out.push_back(m1_w);
        out.push_back(m1_b);
    }
    out.push_back(m2_w);
    out.push_back(m2_b);
    out.push_back(m3_w);
    out.push_back(m3_b);
    return out;
}

DecoderParams DecoderParams::init(const DecoderConfig& config, Rng& rng) {
    if (config.t_max < 1) throw ConfigError("DecoderParams: t_max must be >= 1");
    DecoderParams p;
    p.lstm = LstmParams::init(2 * config.u_width, config.hidden, rng, "dec.lstm");
    p.start_head = ScoringHead::init(config, rng, "dec.start");
    p.end_head = ScoringHead::init(config, rng, "dec.end");
    return p;
}

std::vector<Tensor> DecoderParams::parameters(const DecoderConfig& config) const {
    std::vector<Tensor> out{lstm.wx, lstm.wh, lstm.b};
    for (const Tensor& t : start_head.parameters(config.moe_enabled)) out.push_back(t);
    for (const Tensor& t : end_head.parameters(config.moe_enabled)) out.push_back(t);
    return out;
}

namespace {

Tensor head_scores(const ScoringHead& head, const Tensor& u, const Tensor& h_dec,
                   const Tensor& u_s, const Tensor& u_e, const Tensor& mask_bias,
                   const DecoderConfig& config) {
    Tensor r = tanh(affine(head.wd_w, concat_rows({h_dec, u_s, u_e}), head.wd_b));
    Tensor x = concat_rows({u, broadcast_col(r, u.cols())});
    Tensor m1 = config.moe_enabled
                    ? moe_forward(x, head.moe)
                    : maxout_pool(affine(head.m1_w, x, head.m1_b), config.maxout_pool);
    Tensor m2 = maxout_pool(affine(head.m2_w, m1, head.m2_b), config.maxout_pool);
    Tensor scores =
        maxout_pool(affine(head.m3_w, concat_rows({m1, m2}), head.m3_b), config.maxout_pool);
    return softmax_columns(add(transpose(scores), mask_bias)); // M x 1
}

} // namespace

const DecodeStep& DecodeTrace::last() const {
    if (steps.empty()) throw ContractError("DecodeTrace: empty trace");
    return steps.back();
}

DecodeTrace decode(const Tensor& u, const std::vector<int>& mask, const DecoderParams& params,
                   const DecoderConfig& config, const RolloutPolicy& policy) {
    const std::size_t m = u.cols();
    if (m == 0) throw InputError("decode: empty document");
    if (mask.size() != m)
        throw ShapeError("decode: mask length " + std::to_string(mask.size()) +
                         " does not match U " + u.shape_str());
    if (config.t_max < 1) throw ConfigError("decode: t_max must be >= 1");
    const bool forced_mode = policy.kind == RolloutPolicy::Kind::forced;
    if (forced_mode && (!policy.forced_estimates || policy.forced_estimates->empty()))
        throw ContractError("decode: forced rollout needs a non-empty estimate sequence");
    // A forced rollout replays exactly its estimate sequence, so recorded
    // traces can be reproduced step for step.
    const std::size_t steps = forced_mode ? policy.forced_estimates->size() : config.t_max;

    std::size_t last_real = m;
    for (std::size_t i = 0; i < m; ++i)
        if (mask[i] == 1) last_real = i;
    if (last_real == m) throw InputError("decode: mask has no real positions");

    Tensor mask_bias = Tensor::zeros(m, 1);
    for (std::size_t i = 0; i < m; ++i)
        if (mask[i] == 0) mask_bias.at(i, 0) = kMaskPenalty;

    DecodeTrace trace;
    std::size_t prev_s = 0, prev_e = last_real;
    Tensor h_dec = Tensor::zeros(config.hidden, 1);
    Tensor c_dec = Tensor::zeros(config.hidden, 1);

    for (std::size_t t = 1; t <= steps; ++t) {
        Tensor u_s = slice_cols(u, prev_s, prev_s + 1);
        Tensor u_e = slice_cols(u, prev_e, prev_e + 1);
        auto [h_next, c_next] = lstm_cell(concat_rows({u_s, u_e}), h_dec, c_dec, params.lstm);
        h_dec = h_next;
        c_dec = c_next;

        DecodeStep step;
        step.t = t;
        step.p_start = head_scores(params.start_head, u, h_dec, u_s, u_e, mask_bias, config);
        step.p_end = head_scores(params.end_head, u, h_dec, u_s, u_e, mask_bias, config);

        switch (policy.kind) {
        case RolloutPolicy::Kind::greedy:
            step.s = argmax_lowest(step.p_start);
            step.e = argmax_lowest(step.p_end);
            break;
        case RolloutPolicy::Kind::sampled:
            step.s = policy.rng->categorical(step.p_start.values());
            step.e = policy.rng->categorical(step.p_end.values());
            break;
        case RolloutPolicy::Kind::forced: {
            auto [fs, fe] = (*policy.forced_estimates)[t - 1];
            if (fs >= m || fe >= m || mask[fs] == 0 || mask[fe] == 0)
                throw ContractError("decode: forced estimate outside the unmasked range");
            step.s = fs;
            step.e = fe;
            break;
        }
        }
        if (policy.kind != RolloutPolicy::Kind::greedy)
            step.log_prob = add(log_prob_at(step.p_start, step.s), log_prob_at(step.p_end, step.e));

        trace.converged = (step.s == prev_s && step.e == prev_e);
        prev_s = step.s;
        prev_e = step.e;
        trace.steps.push_back(std::move(step));
        if (trace.converged && policy.early_stop) break;
    }
    return trace;
}

std::optional<AnswerSpan> extract_answer(const DecodeTrace& trace) {
    const DecodeStep& final_step = trace.last();
    if (final_step.e < final_step.s) return std::nullopt;
    return AnswerSpan{final_step.s, final_step.e};
}

} // namespace coattn
