#include "coattn/objective.hpp"

#include "coattn/error.hpp"
#include "coattn/metrics.hpp"

namespace coattn {

Tensor cross_entropy_loss(const DecodeTrace& trace, const AnswerSpan& gold,
                          const std::vector<int>& doc_mask) {
    if (trace.steps.empty()) throw ContractError("cross_entropy_loss: empty trace");
    if (gold.start >= doc_mask.size() || gold.end >= doc_mask.size() ||
        doc_mask[gold.start] == 0 || doc_mask[gold.end] == 0)
        throw DataError("cross_entropy_loss: gold span [" + std::to_string(gold.start) + ", " +
                        std::to_string(gold.end) + "] touches a masked position");
    Tensor total;
    for (const DecodeStep& step : trace.steps) {
        Tensor lp = add(log_prob_at(step.p_start, gold.start), log_prob_at(step.p_end, gold.end));
        total = total.defined() ? add(total, lp) : lp;
    }
    return scale(total, -1.0);
}

double span_f1(const std::optional<AnswerSpan>& pred, const AnswerSpan& gold,
               const TokenizedText& doc) {
    if (!pred.has_value()) return 0.0;
    std::string pred_text = detokenize_span(doc, *pred);
    std::string gold_text = detokenize_span(doc, gold);
    return token_f1(normalized_tokens(pred_text), normalized_tokens(gold_text));
}

SampledRollout sample_trajectory(const QaModel& model, const ExampleInput& train_input,
                                 const ExampleInput& clean_input, Rng& rng) {
    SampledRollout out;
    // Sampled rollout runs every decoder step: a trajectory covers all T
    // time steps, so the convergence early-exit does not apply to it.
    out.sampled_trace = model.run(train_input, RolloutPolicy::sampled(rng, false)).trace;
    for (const DecodeStep& step : out.sampled_trace.steps) {
        out.trajectory.sampled.emplace_back(step.s, step.e);
        out.trajectory.log_probs.push_back(step.log_prob);
    }
    {
        Tape::NoGrad off;
        out.greedy_trace = model.run(clean_input, RolloutPolicy::greedy()).trace;
    }
    return out;
}

SampledRollout sample_trajectory(const QaModel& model, const ExampleInput& input, Rng& rng) {
    return sample_trajectory(model, input, input, rng);
}

Tensor rl_surrogate_loss(const Trajectory& trajectory, const RewardResult& reward) {
    if (trajectory.log_probs.empty())
        throw ContractError("rl_surrogate_loss: empty trajectory");
    Tensor total;
    for (const Tensor& lp : trajectory.log_probs)
        total = total.defined() ? add(total, lp) : lp;
    return scale(total, -reward.advantage);
}

Tensor mixed_loss(const Tensor& l_ce, const Tensor& rl_surrogate, const Tensor& log_var_ce,
                  const Tensor& log_var_rl) {
    Tensor ce_term = mul_scalar(scale(l_ce, 0.5), exp(scale(log_var_ce, -1.0)));
    Tensor rl_term = mul_scalar(scale(rl_surrogate, 0.5), exp(scale(log_var_rl, -1.0)));
    return add(add(ce_term, rl_term), add(log_var_ce, log_var_rl));
}

std::vector<std::pair<std::size_t, std::size_t>> trace_estimates(const DecodeTrace& trace) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const DecodeStep& step : trace.steps) out.emplace_back(step.s, step.e);
    return out;
}

} // namespace coattn
