#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "coattn/data.hpp"

namespace coattn {

// SQuAD-style scoring. normalize_answer follows the official evaluator:
// lowercase, strip ASCII punctuation, drop the articles {a, an, the},
// collapse whitespace. f1_match is the same function used as the training
// reward, so the metric being optimized and the metric being reported never
// diverge.

std::string normalize_answer(const std::string& s);
std::vector<std::string> normalized_tokens(const std::string& s);

int exact_match(const std::string& pred, const std::vector<std::string>& golds);

// Token-multiset F1 of two already-normalized token lists.
double token_f1(const std::vector<std::string>& pred_tokens,
                const std::vector<std::string>& gold_tokens);

// Max over golds of token-multiset F1 on normalized strings.
double f1_match(const std::string& pred, const std::vector<std::string>& golds);

struct BucketScore {
    double em = 0.0;
    double f1 = 0.0;
    std::size_t count = 0;
};

struct EvalReport {
    double em = 0.0; // percentages
    double f1 = 0.0;
    std::size_t n_examples = 0;
    std::size_t missing_predictions = 0;
    std::map<std::string, BucketScore> breakdowns;

    std::string to_json() const;
};

// Corpus EM/F1 plus breakdowns by question type (first question word),
// question length, and answer length. Missing predictions score zero and
// are counted.
EvalReport evaluate_corpus(const std::unordered_map<std::string, std::string>& predictions,
                           const std::vector<QAExample>& examples);

} // namespace coattn
