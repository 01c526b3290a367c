#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "coattn/data.hpp"
#include "coattn/random.hpp"
#include "coattn/rnn.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

struct DecoderConfig {
    std::size_t hidden = 16;      // decoder LSTM / scoring-head width
    std::size_t u_width = 32;     // feature width of the fused encoding U
    std::size_t t_max = 4;        // iteration cap
    std::size_t maxout_pool = 16;
    bool moe_enabled = true;
    std::size_t moe_experts = 16;
    std::size_t moe_topk = 2;
};

// Sparse mixture of experts: affine gate scores all K experts, the top-k by
// gate logit are evaluated, their outputs mixed with softmax weights over
// those k logits. Gradients reach only the selected experts and the gate.
struct MoeLayer {
    Tensor gate_w; // K x in
    Tensor gate_b; // K x 1
    std::vector<Tensor> expert_w; // each out x in
    std::vector<Tensor> expert_b; // each out x 1
    std::size_t topk = 2;

    static MoeLayer init(std::size_t in, std::size_t out, std::size_t experts,
                         std::size_t topk, Rng& rng, const std::string& name);
    std::size_t experts() const { return expert_w.size(); }
    std::vector<Tensor> parameters() const;
};

// Applies the layer to every column of x independently (each column selects
// its own top-k experts). Fused forward/backward: one tape node.
Tensor moe_forward(const Tensor& x, const MoeLayer& layer);

// Position-scoring head: a highway maxout network over [u_t; r] where r is a
// pooled view of the decoder state and the previous-estimate columns. The
// first maxout layer is swappable for the MoE above.
struct ScoringHead {
    Tensor wd_w, wd_b;  // pooled representation r
    Tensor m1_w, m1_b;  // plain first maxout layer (when MoE is off)
    MoeLayer moe;       // MoE first layer (when on)
    Tensor m2_w, m2_b;
    Tensor m3_w, m3_b;  // highway layer over [m1; m2]

    static ScoringHead init(const DecoderConfig& config, Rng& rng, const std::string& name);
    std::vector<Tensor> parameters(bool moe_enabled) const;
};

struct DecoderParams {
    LstmParams lstm; // input [u_s; u_e], hidden h
    ScoringHead start_head;
    ScoringHead end_head;

    static DecoderParams init(const DecoderConfig& config, Rng& rng);
    std::vector<Tensor> parameters(const DecoderConfig& config) const;
};

struct DecodeStep {
    Tensor p_start; // M x 1, exactly zero at padded positions
    Tensor p_end;
    std::size_t s = 0; // estimates produced at this step by the rollout policy
    std::size_t e = 0;
    std::size_t t = 0; // 1-based step number
    // log p_start(s) + log p_end(e); populated by sampled/forced rollouts.
    Tensor log_prob;
};

struct DecodeTrace {
    std::vector<DecodeStep> steps;
    bool converged = false;

    const DecodeStep& last() const;
};

// How the per-step estimates are chosen while rolling forward.
struct RolloutPolicy {
    enum class Kind { greedy, sampled, forced } kind = Kind::greedy;
    Rng* rng = nullptr; // sampled
    const std::vector<std::pair<std::size_t, std::size_t>>* forced_estimates = nullptr;
    bool early_stop = true; // stop once estimates repeat

    static RolloutPolicy greedy(bool early_stop = true) { return {Kind::greedy, nullptr, nullptr, early_stop}; }
    static RolloutPolicy sampled(Rng& rng, bool early_stop = true) {
        return {Kind::sampled, &rng, nullptr, early_stop};
    }
    static RolloutPolicy forced(const std::vector<std::pair<std::size_t, std::size_t>>& seq) {
        return {Kind::forced, nullptr, &seq, false};
    }
};

// Iterative span decoding. Step t scores every document position from U, a
// recurrent decoder state and the U-columns at the previous estimates
// (s_{t-1}, e_{t-1}); initial estimates are (0, last real position). Stops
// early when consecutive estimates coincide or at t_max.
DecodeTrace decode(const Tensor& u, const std::vector<int>& mask, const DecoderParams& params,
                   const DecoderConfig& config, const RolloutPolicy& policy);

// Final-step estimates as a prediction; disordered estimates (e < s) yield
// an empty prediction rather than being swapped.
std::optional<AnswerSpan> extract_answer(const DecodeTrace& trace);

} // namespace coattn
