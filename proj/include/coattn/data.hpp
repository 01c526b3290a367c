#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "coattn/error.hpp"
#include "coattn/random.hpp"

namespace coattn {

// Tokenized view of a raw string. char_spans are half-open [start, end)
// intervals into `text`, strictly increasing and non-overlapping; the
// substring at span i is exactly tokens[i].
struct TokenizedText {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<std::pair<std::size_t, std::size_t>> char_spans;

    std::size_t size() const { return tokens.size(); }
};

// Inclusive token span [start, end].
struct AnswerSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const AnswerSpan&) const = default;
};

struct QAExample {
    std::string id;
    TokenizedText document;
    TokenizedText question;
    std::vector<AnswerSpan> answers;     // aligned token spans, non-empty
    std::vector<std::string> gold_texts; // every annotated answer string
};

// token -> id over lowercased surface forms. Ids 0 and 1 are reserved for
// padding and unknown; both embed to a frozen zero vector.
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr std::size_t kReserved = 2;

    static Vocabulary build(const std::vector<QAExample>& training_examples);

    int id(const std::string& token) const;
    const std::string& token(int id) const;
    std::size_t size() const { return id_to_token_.size(); }

    // One token per line in id order, reserved entries included.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_{"<pad>", "<unk>"};
};

// Padded minibatch. Mask is 1 exactly at real-token positions; padded
// positions carry id 0 and mask 0.
struct Batch {
    std::vector<std::vector<int>> doc_token_ids;
    std::vector<std::vector<int>> q_token_ids;
    std::vector<std::vector<int>> doc_mask;
    std::vector<std::vector<int>> q_mask;
    std::vector<AnswerSpan> gold_spans;    // first aligned answer per example
    std::vector<std::size_t> example_idx;  // index into the source corpus

    std::size_t size() const { return doc_token_ids.size(); }
};

// Whitespace split followed by peeling leading/trailing ASCII punctuation
// into single-character tokens. Interior punctuation (don't, U.S.) stays
// attached. Deterministic; empty input gives an empty token list.
TokenizedText tokenize(const std::string& text);

// Substring of the source text covering tokens [span.start, span.end],
// including any interior whitespace.
std::string detokenize_span(const TokenizedText& doc, const AnswerSpan& span);

struct SquadData {
    std::vector<QAExample> examples;
    std::size_t dropped_unalignable = 0; // answers that split token boundaries
};

// Parses SQuAD v1.1 JSON. Examples whose every annotated answer fails to
// align to token boundaries are dropped and counted.
SquadData parse_squad(const std::string& path);
SquadData parse_squad_text(const std::string& json_text);

Batch make_batch(const std::vector<QAExample>& corpus, const std::vector<std::size_t>& indices,
                 const Vocabulary& vocab);

// Independently replaces each real document token with the unknown id
// (frozen zero embedding) with probability p. Masks and gold spans are
// untouched. Training-time regularization; p must lie in [0, 1).
Batch word_dropout(const Batch& batch, double p, Rng& rng);

struct SyntheticConfig {
    std::size_t vocab_size = 100;
    std::size_t doc_len = 20;
    std::size_t corpus_size = 1000;
    std::uint64_t seed = 0;
};

// Generates a key-lookup QA corpus: the question contains exactly one token
// that also occurs in the document, exactly once, and that occurrence is the
// answer. Solvable to 100% EM by construction.
std::vector<QAExample> make_synthetic_corpus(const SyntheticConfig& config);

// Serializes examples in SQuAD v1.1 layout so synthetic corpora flow through
// the same ingestion path as real data.
std::string to_squad_json(const std::vector<QAExample>& examples, const std::string& title);

} // namespace coattn
