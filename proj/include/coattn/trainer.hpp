#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "coattn/config.hpp"
#include "coattn/data.hpp"
#include "coattn/metrics.hpp"
#include "coattn/model.hpp"
#include "coattn/objective.hpp"
#include "coattn/optim.hpp"

namespace coattn {

struct EpochRecord {
    std::size_t epoch = 0;
    double dev_em = 0.0;
    double dev_f1 = 0.0;
    double mean_loss = 0.0;
};

struct TrainResult {
    std::size_t epochs_run = 0;
    std::size_t steps_run = 0;
    double best_dev_f1 = 0.0;
    double final_dev_em = 0.0;
    double final_dev_f1 = 0.0;
    std::vector<EpochRecord> epochs;
};

// Owns the model/optimizer/RNG state for one training run rooted at
// config.out_dir. Artifacts: config.kv (echo), diagnostics.jsonl (one record
// per optimizer step plus one per evaluation), checkpoint_last.bin,
// checkpoint_best.bin (best dev F1), adam_state.bin and train_state.json
// (resume data). Single training thread; determinism is (config, seed, data).
class Trainer {
public:
    Trainer(RunConfig config, std::vector<QAExample> train_set, std::vector<QAExample> dev_set);

    // Continues from checkpoint_last when resume is set (epoch counters, Adam
    // moments and RNG streams are restored, so the loss curve continues
    // within floating-point identity).
    TrainResult train(bool resume = false);

    const QaModel& model() const { return *model_; }
    QaModel& model() { return *model_; }
    const Vocabulary& vocab() const { return vocab_; }

    // One mixed-objective step over a single example; exposed for tests and
    // the gradient-check harness. Returns the scalar loss node (built under
    // the active tape) and fills the report.
    Tensor example_loss(const ExampleInput& train_input, const ExampleInput& clean_input,
                        const AnswerSpan& gold, const TokenizedText& doc, Rng& sample_rng,
                        LossReport& report) const;

    EvalReport evaluate_dev() const;

private:
    RunConfig config_;
    std::vector<QAExample> train_set_;
    std::vector<QAExample> dev_set_;
    Vocabulary vocab_;
    std::unique_ptr<QaModel> model_;
    std::unique_ptr<Adam> adam_;
};

ExampleInput example_input(const QAExample& example, const Vocabulary& vocab);

// Greedy inference over a corpus: question id -> detokenized answer string
// (empty string for disordered spans).
std::unordered_map<std::string, std::string> predict_corpus(const QaModel& model,
                                                            const Vocabulary& vocab,
                                                            const std::vector<QAExample>& corpus);

// ---- gradient-check harness ---------------------------------------------------

struct GradcheckConfig {
    std::size_t embed_dim = 8;
    std::size_t hidden = 8;
    std::size_t doc_len = 10;
    std::size_t q_len = 5;
    std::size_t t_max = 2;
    std::size_t maxout_pool = 4;
    std::size_t moe_experts = 4;
    std::size_t moe_topk = 2;
    std::size_t seeds = 5;
    double tolerance = 1e-4;
    double fd_step = 1e-5;
    // Test hook: scales this parameter's analytic gradient by 1.01 before
    // comparing, to prove the harness catches a wrong backward rule.
    std::string corrupt_parameter;
};

struct GradcheckIssue {
    std::string parameter;
    std::string loss; // "cross_entropy", "rl_surrogate", "mixed"
    std::uint64_t seed = 0;
    double rel_error = 0.0;
};

struct GradcheckReport {
    bool passed = false;
    double max_rel_error = 0.0;
    std::string worst_parameter;
    std::string worst_loss;
    std::vector<GradcheckIssue> failures;
    std::size_t parameters_checked = 0;

    std::string summary() const;
};

// Compares analytic gradients of the cross-entropy loss, the policy-gradient
// surrogate (fixed trajectory, fixed advantage) and the mixed loss against
// central finite differences for every trainable parameter, over several
// seeds. Estimate conditioning is frozen, so each compared loss is a smooth
// function of the parameters.
GradcheckReport run_gradcheck(const GradcheckConfig& config);

} // namespace coattn
