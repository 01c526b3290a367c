#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "coattn/data.hpp"
#include "coattn/model.hpp"
#include "coattn/random.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

// Sampled decoding path: one (start, end) pair per executed step together
// with the graph-linked log-probability of having sampled it.
struct Trajectory {
    std::vector<std::pair<std::size_t, std::size_t>> sampled;
    std::vector<Tensor> log_probs; // scalar nodes, log p_start(s) + log p_end(e)
};

// Self-critical reward: token-overlap F1 of the sampled span minus the F1 of
// the model's own greedy span. Both terms are constants in the graph.
struct RewardResult {
    double f1_sampled = 0.0;
    double f1_greedy = 0.0;
    double advantage = 0.0;
};

struct LossReport {
    double l_ce = 0.0;
    double l_rl_surrogate = 0.0;
    double log_var_ce = 0.0;
    double log_var_rl = 0.0;
    double combined = 0.0;
    RewardResult reward;
};

// Sum over executed decoding steps of the negative log-probability of the
// gold start and end positions. Gold indices must be unmasked.
Tensor cross_entropy_loss(const DecodeTrace& trace, const AnswerSpan& gold,
                          const std::vector<int>& doc_mask);

// Token-overlap F1 between two spans of the same document, computed on the
// detokenized, normalized strings -- the identical function the evaluation
// metric uses. An empty prediction scores zero.
double span_f1(const std::optional<AnswerSpan>& pred, const AnswerSpan& gold,
               const TokenizedText& doc);

struct SampledRollout {
    Trajectory trajectory;
    DecodeTrace sampled_trace; // conditioned on sampled estimates, with grad
    DecodeTrace greedy_trace;  // greedy baseline: no grad, no word dropout
};

// Rolls the decoder forward once with categorical sampling at every step
// (conditioning each step on the sampled, not greedy, previous estimates)
// and separately runs greedy inference on the clean inputs without gradient
// participation. `train_input` may carry word-dropped ids; `clean_input` the
// originals.
SampledRollout sample_trajectory(const QaModel& model, const ExampleInput& train_input,
                                 const ExampleInput& clean_input, Rng& rng);

// Convenience overload when both views coincide.
SampledRollout sample_trajectory(const QaModel& model, const ExampleInput& input, Rng& rng);

// -advantage * sum_t log p_t(sampled); the reward factor is a constant, so
// gradients flow only through the log-probabilities.
Tensor rl_surrogate_loss(const Trajectory& trajectory, const RewardResult& reward);

// l = exp(-log_var_ce)/2 * l_ce + exp(-log_var_rl)/2 * l_rl
//     + log_var_ce + log_var_rl
// with both log-variances learned.
Tensor mixed_loss(const Tensor& l_ce, const Tensor& rl_surrogate, const Tensor& log_var_ce,
                  const Tensor& log_var_rl);

// The estimate sequence a trace followed; feeding it back through a forced
// rollout reproduces the same conditioning with the estimates held fixed.
std::vector<std::pair<std::size_t, std::size_t>> trace_estimates(const DecodeTrace& trace);

} // namespace coattn
