#include "coattn/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace coattn {

namespace {

bool is_ascii_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

TokenizedText tokenize(const std::string& text) {
    TokenizedText out;
    out.text = text;
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto emit = [&](std::size_t b, std::size_t e) {
        out.tokens.push_back(text.substr(b, e - b));
        out.char_spans.emplace_back(b, e);
    };
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        if (i >= n) break;
        std::size_t b = i;
        while (i < n && !is_space(text[i])) ++i;
        std::size_t e = i;
        // Peel leading punctuation as single-character tokens.
        while (b < e && is_ascii_punct(text[b])) {
            emit(b, b + 1);
            ++b;
        }
        // Find where trailing punctuation starts.
        std::size_t core_end = e;
        while (core_end > b && is_ascii_punct(text[core_end - 1])) --core_end;
        if (core_end > b) emit(b, core_end);
        for (std::size_t p = core_end; p < e; ++p) emit(p, p + 1);
    }
    return out;
}

std::string detokenize_span(const TokenizedText& doc, const AnswerSpan& span) {
    if (span.start > span.end || span.end >= doc.size())
        throw DataError("detokenize_span: span [" + std::to_string(span.start) + ", " +
                        std::to_string(span.end) + "] out of range for " +
                        std::to_string(doc.size()) + " tokens");
    std::size_t b = doc.char_spans[span.start].first;
    std::size_t e = doc.char_spans[span.end].second;
    return doc.text.substr(b, e - b);
}

// ---- vocabulary -------------------------------------------------------------

Vocabulary Vocabulary::build(const std::vector<QAExample>& training_examples) {
    Vocabulary v;
    auto add_all = [&](const TokenizedText& t) {
        for (const std::string& tok : t.tokens) {
            std::string key = lowercase(tok);
            if (v.token_to_id_.emplace(key, static_cast<int>(v.id_to_token_.size())).second)
                v.id_to_token_.push_back(key);
        }
    };
    for (const QAExample& ex : training_examples) {
        add_all(ex.document);
        add_all(ex.question);
    }
    return v;
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(lowercase(token));
    return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw DataError("Vocabulary::token: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("Vocabulary::save: cannot open " + path);
    for (const std::string& tok : id_to_token_) out << tok << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("Vocabulary::load: cannot open " + path);
    Vocabulary v;
    v.id_to_token_.clear();
    std::string line;
    while (std::getline(in, line)) {
        if (v.id_to_token_.size() >= kReserved)
            v.token_to_id_.emplace(line, static_cast<int>(v.id_to_token_.size()));
        v.id_to_token_.push_back(line);
    }
    if (v.id_to_token_.size() < kReserved || v.id_to_token_[0] != "<pad>" ||
        v.id_to_token_[1] != "<unk>")
        throw DataError("Vocabulary::load: " + path + " is not a vocabulary file");
    return v;
}

// ---- SQuAD parsing ----------------------------------------------------------

namespace {

using nlohmann::json;

const json& require_field(const json& obj, const char* field, const char* where) {
    auto it = obj.find(field);
    if (it == obj.end())
        throw SchemaError(std::string("parse_squad: missing field '") + field + "' in " + where);
    return *it;
}

// Aligns a character range to token boundaries: the range must start exactly
// at a token start and end exactly at a token end. Returns false otherwise.
bool align_answer(const TokenizedText& doc, std::size_t char_start, std::size_t char_end,
                  AnswerSpan& out) {
    std::size_t start_tok = doc.size(), end_tok = doc.size();
    for (std::size_t t = 0; t < doc.size(); ++t) {
        if (doc.char_spans[t].first == char_start) start_tok = t;
        if (doc.char_spans[t].second == char_end) end_tok = t;
    }
    if (start_tok == doc.size() || end_tok == doc.size() || start_tok > end_tok) return false;
    out = AnswerSpan{start_tok, end_tok};
    return true;
}

SquadData parse_squad_json(const json& root) {
    SquadData out;
    const json& data = require_field(root, "data", "document root");
    for (const json& article : data) {
        const json& paragraphs = require_field(article, "paragraphs", "article");
        for (const json& para : paragraphs) {
            std::string context = require_field(para, "context", "paragraph").get<std::string>();
            TokenizedText doc = tokenize(context);
            const json& qas = require_field(para, "qas", "paragraph");
            for (const json& qa : qas) {
                QAExample ex;
                ex.id = require_field(qa, "id", "qa entry").get<std::string>();
                ex.document = doc;
                ex.question =
                    tokenize(require_field(qa, "question", "qa entry").get<std::string>());
                const json& answers = require_field(qa, "answers", "qa entry");
                for (const json& ans : answers) {
                    std::string text = require_field(ans, "text", "answer").get<std::string>();
                    auto char_start =
                        require_field(ans, "answer_start", "answer").get<std::int64_t>();
                    ex.gold_texts.push_back(text);
                    AnswerSpan span;
                    if (char_start >= 0 &&
                        align_answer(doc, static_cast<std::size_t>(char_start),
                                     static_cast<std::size_t>(char_start) + text.size(), span)) {
                        if (std::find(ex.answers.begin(), ex.answers.end(), span) ==
                            ex.answers.end())
                            ex.answers.push_back(span);
                    }
                }
                if (ex.answers.empty()) {
                    ++out.dropped_unalignable;
                    continue;
                }
                out.examples.push_back(std::move(ex));
            }
        }
    }
    return out;
}

} // namespace

SquadData parse_squad_text(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("parse_squad: malformed JSON: ") + e.what());
    }
    return parse_squad_json(root);
}

SquadData parse_squad(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("parse_squad: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_squad_text(buf.str());
}

// ---- batching ---------------------------------------------------------------

Batch make_batch(const std::vector<QAExample>& corpus, const std::vector<std::size_t>& indices,
                 const Vocabulary& vocab) {
    Batch b;
    std::size_t doc_max = 0, q_max = 0;
    for (std::size_t idx : indices) {
        doc_max = std::max(doc_max, corpus[idx].document.size());
        q_max = std::max(q_max, corpus[idx].question.size());
    }
    for (std::size_t idx : indices) {
        const QAExample& ex = corpus[idx];
        std::vector<int> doc_ids(doc_max, Vocabulary::kPadId), doc_mask(doc_max, 0);
        std::vector<int> q_ids(q_max, Vocabulary::kPadId), q_mask(q_max, 0);
        for (std::size_t t = 0; t < ex.document.size(); ++t) {
            doc_ids[t] = vocab.id(ex.document.tokens[t]);
            doc_mask[t] = 1;
        }
        for (std::size_t t = 0; t < ex.question.size(); ++t) {
            q_ids[t] = vocab.id(ex.question.tokens[t]);
            q_mask[t] = 1;
        }
        b.doc_token_ids.push_back(std::move(doc_ids));
        b.q_token_ids.push_back(std::move(q_ids));
        b.doc_mask.push_back(std::move(doc_mask));
        b.q_mask.push_back(std::move(q_mask));
        b.gold_spans.push_back(ex.answers.front());
        b.example_idx.push_back(idx);
    }
    return b;
}

Batch word_dropout(const Batch& batch, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("word_dropout: probability " + std::to_string(p) + " outside [0, 1)");
    Batch out = batch;
    if (p == 0.0) return out;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t t = 0; t < out.doc_token_ids[i].size(); ++t)
            if (out.doc_mask[i][t] == 1 && rng.uniform01() < p)
                out.doc_token_ids[i][t] = Vocabulary::kUnkId;
    return out;
}

// ---- synthetic corpus --------------------------------------------------------

std::vector<QAExample> make_synthetic_corpus(const SyntheticConfig& config) {
    if (config.vocab_size < 10)
        throw ConfigError("make_synthetic_corpus: vocab_size must be >= 10, got " +
                          std::to_string(config.vocab_size));
    if (config.doc_len < 4)
        throw ConfigError("make_synthetic_corpus: doc_len must be >= 4, got " +
                          std::to_string(config.doc_len));
    if (config.corpus_size == 0)
        throw ConfigError("make_synthetic_corpus: corpus_size must be positive");

    // Three disjoint word pools: keys appear in both question and document,
    // fillers in only one of the two. This makes the key the unique question
    // token present in the document.
    const std::size_t n_keys = std::max<std::size_t>(2, config.vocab_size * 2 / 5);
    const std::size_t n_doc_fill = std::max<std::size_t>(2, (config.vocab_size - n_keys) / 2);
    const std::size_t n_q_fill = std::max<std::size_t>(2, config.vocab_size - n_keys - n_doc_fill);

    Rng rng(config.seed);
    std::vector<QAExample> out;
    out.reserve(config.corpus_size);
    for (std::size_t i = 0; i < config.corpus_size; ++i) {
        std::string key = "key" + std::to_string(rng.below(n_keys));
        std::size_t answer_pos = rng.below(config.doc_len);

        std::vector<std::string> doc_tokens(config.doc_len);
        for (std::size_t t = 0; t < config.doc_len; ++t)
            doc_tokens[t] = "doc" + std::to_string(rng.below(n_doc_fill));
        doc_tokens[answer_pos] = key;

        std::size_t q_len = 3 + rng.below(3);
        std::vector<std::string> q_tokens(q_len);
        for (std::size_t t = 0; t < q_len; ++t)
            q_tokens[t] = "qry" + std::to_string(rng.below(n_q_fill));
        q_tokens[rng.below(q_len)] = key;

        auto join = [](const std::vector<std::string>& toks) {
            std::string s;
            for (std::size_t t = 0; t < toks.size(); ++t) {
                if (t) s += ' ';
                s += toks[t];
            }
            return s;
        };

        QAExample ex;
        ex.id = "synth-" + std::to_string(config.seed) + "-" + std::to_string(i);
        ex.document = tokenize(join(doc_tokens));
        ex.question = tokenize(join(q_tokens));
        ex.answers.push_back(AnswerSpan{answer_pos, answer_pos});
        ex.gold_texts.push_back(key);
        out.push_back(std::move(ex));
    }
    return out;
}

std::string to_squad_json(const std::vector<QAExample>& examples, const std::string& title) {
    using nlohmann::json;
    json paragraphs = json::array();
    for (const QAExample& ex : examples) {
        json answers = json::array();
        for (const AnswerSpan& span : ex.answers) {
            answers.push_back({{"text", detokenize_span(ex.document, span)},
                               {"answer_start", ex.document.char_spans[span.start].first}});
        }
        paragraphs.push_back(
            {{"context", ex.document.text},
             {"qas", json::array({{{"id", ex.id}, {"question", ex.question.text},
                                   {"answers", answers}}})}});
    }
    json root = {{"version", "1.1"},
                 {"data", json::array({{{"title", title}, {"paragraphs", paragraphs}}})}};
    return root.dump(2);
}

} // namespace coattn
