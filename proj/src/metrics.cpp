#include "coattn/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include <json.hpp>

#include "coattn/error.hpp"

namespace coattn {

std::string normalize_answer(const std::string& s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        lowered.push_back(static_cast<char>(std::tolower(uc)));
    }
    std::istringstream in(lowered);
    std::string tok, out;
    while (in >> tok) {
        if (tok == "a" || tok == "an" || tok == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += tok;
    }
    return out;
}

std::vector<std::string> normalized_tokens(const std::string& s) {
    std::istringstream in(normalize_answer(s));
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

int exact_match(const std::string& pred, const std::vector<std::string>& golds) {
    if (golds.empty()) throw ContractError("exact_match: gold list must be non-empty");
    std::string p = normalize_answer(pred);
    for (const std::string& g : golds)
        if (p == normalize_answer(g)) return 1;
    return 0;
}

double token_f1(const std::vector<std::string>& pred_tokens,
                const std::vector<std::string>& gold_tokens) {
    if (pred_tokens.empty() && gold_tokens.empty()) return 1.0; // both normalize to nothing
    if (pred_tokens.empty() || gold_tokens.empty()) return 0.0;
    std::map<std::string, std::size_t> gold_counts;
    for (const std::string& t : gold_tokens) ++gold_counts[t];
    std::size_t overlap = 0;
    for (const std::string& t : pred_tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    double precision = static_cast<double>(overlap) / static_cast<double>(pred_tokens.size());
    double recall = static_cast<double>(overlap) / static_cast<double>(gold_tokens.size());
    return 2.0 * precision * recall / (precision + recall);
}

double f1_match(const std::string& pred, const std::vector<std::string>& golds) {
    if (golds.empty()) throw ContractError("f1_match: gold list must be non-empty");
    std::vector<std::string> p = normalized_tokens(pred);
    double best = 0.0;
    for (const std::string& g : golds) best = std::max(best, token_f1(p, normalized_tokens(g)));
    return best;
}

namespace {

const char* question_type(const QAExample& ex) {
    static const char* kTypes[] = {"what", "which", "who", "when", "where", "why", "how"};
    std::vector<std::string> toks = normalized_tokens(ex.question.text);
    if (!toks.empty())
        for (const char* t : kTypes)
            if (toks.front() == t) return t;
    return "other";
}

std::string question_length_bucket(std::size_t n) {
    if (n <= 8) return "qlen<=8";
    if (n <= 12) return "qlen9-12";
    if (n <= 16) return "qlen13-16";
    return "qlen>=17";
}

std::string answer_length_bucket(std::size_t n) {
    if (n <= 1) return "alen1";
    if (n <= 3) return "alen2-3";
    if (n <= 7) return "alen4-7";
    return "alen>=8";
}

struct Accumulator {
    double em = 0.0, f1 = 0.0;
    std::size_t count = 0;
    void add(double e, double f) {
        em += e;
        f1 += f;
        ++count;
    }
    BucketScore finish() const {
        BucketScore b;
        b.count = count;
        if (count) {
            b.em = 100.0 * em / static_cast<double>(count);
            b.f1 = 100.0 * f1 / static_cast<double>(count);
        }
        return b;
    }
};

} // namespace

EvalReport evaluate_corpus(const std::unordered_map<std::string, std::string>& predictions,
                           const std::vector<QAExample>& examples) {
    EvalReport report;
    Accumulator total;
    std::map<std::string, Accumulator> buckets;
    for (const QAExample& ex : examples) {
        std::string pred;
        auto it = predictions.find(ex.id);
        if (it == predictions.end())
            ++report.missing_predictions;
        else
            pred = it->second;
        double em = static_cast<double>(exact_match(pred, ex.gold_texts));
        double f1 = f1_match(pred, ex.gold_texts);
        total.add(em, f1);
        buckets["qtype:" + std::string(question_type(ex))].add(em, f1);
        buckets["qlen:" + question_length_bucket(ex.question.size())].add(em, f1);
        std::size_t answer_len = normalized_tokens(ex.gold_texts.front()).size();
        buckets["alen:" + answer_length_bucket(answer_len)].add(em, f1);
    }
    BucketScore overall = total.finish();
    report.em = overall.em;
    report.f1 = overall.f1;
    report.n_examples = total.count;
    for (const auto& [label, acc] : buckets) report.breakdowns[label] = acc.finish();
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["exact_match"] = em;
    j["f1"] = f1;
    j["n_examples"] = n_examples;
    j["missing_predictions"] = missing_predictions;
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [label, score] : breakdowns)
        b[label] = {{"em", score.em}, {"f1", score.f1}, {"count", score.count}};
    j["breakdowns"] = b;
    return j.dump(2);
}

} // namespace coattn
