#include <doctest.h>

#include <set>

#include "coattn/data.hpp"
#include "coattn/metrics.hpp"

using namespace coattn;

TEST_CASE("tokenize splits whitespace and peels boundary punctuation") {
    TokenizedText t = tokenize("The cat.");
    REQUIRE(t.tokens == std::vector<std::string>{"The", "cat", "."});
    REQUIRE(t.char_spans.size() == 3);
    CHECK(t.char_spans[0] == std::pair<std::size_t, std::size_t>{0, 3});
    CHECK(t.char_spans[1] == std::pair<std::size_t, std::size_t>{4, 7});
    CHECK(t.char_spans[2] == std::pair<std::size_t, std::size_t>{7, 8});
}

TEST_CASE("tokenize keeps interior apostrophes and handles empty input") {
    CHECK(tokenize("don't stop").tokens == std::vector<std::string>{"don't", "stop"});
    CHECK(tokenize("").tokens.empty());
    CHECK(tokenize("   ").tokens.empty());
    CHECK(tokenize("(end!)").tokens == std::vector<std::string>{"(", "end", "!", ")"});
}

TEST_CASE("tokenize char spans reproduce each token and are strictly increasing") {
    for (const char* text : {"The cat.", "a  b\tc", "don't (stop)! now...", "one"}) {
        TokenizedText t = tokenize(text);
        std::size_t prev_end = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            auto [b, e] = t.char_spans[i];
            CHECK(b >= prev_end);
            CHECK(e > b);
            CHECK(t.text.substr(b, e - b) == t.tokens[i]);
            prev_end = e;
        }
    }
}

namespace {

std::string squad_fixture(const std::string& answer_text, int answer_start) {
    return R"({"version":"1.1","data":[{"title":"t","paragraphs":[{"context":"a b c","qas":[{"id":"q1","question":"q?","answers":[{"text":")" +
           answer_text + R"(","answer_start":)" + std::to_string(answer_start) + "}]}]}]}]}";
}

} // namespace

TEST_CASE("parse_squad aligns character answers to token spans") {
    SUBCASE("single token") {
        SquadData d = parse_squad_text(squad_fixture("b", 2));
        REQUIRE(d.examples.size() == 1);
        CHECK(d.examples[0].answers[0] == AnswerSpan{1, 1});
        CHECK(d.dropped_unalignable == 0);
    }
    SUBCASE("two tokens") {
        SquadData d = parse_squad_text(squad_fixture("b c", 2));
        REQUIRE(d.examples.size() == 1);
        CHECK(d.examples[0].answers[0] == AnswerSpan{1, 2});
    }
    SUBCASE("answer splitting a token boundary is dropped and counted") {
        std::string j =
            R"({"data":[{"paragraphs":[{"context":"abc def","qas":[{"id":"x","question":"q","answers":[{"text":"bc","answer_start":1}]}]}]}]})";
        SquadData d = parse_squad_text(j);
        CHECK(d.examples.empty());
        CHECK(d.dropped_unalignable == 1);
    }
}

TEST_CASE("parse_squad raises typed errors for malformed input") {
    CHECK_THROWS_AS(parse_squad_text("{not json"), ParseError);
    CHECK_THROWS_WITH_AS(parse_squad_text(R"({"nope":1})"), doctest::Contains("data"),
                         SchemaError);
    CHECK_THROWS_WITH_AS(
        parse_squad_text(R"({"data":[{"paragraphs":[{"qas":[]}]}]})"),
        doctest::Contains("context"), SchemaError);
    CHECK_THROWS_AS(parse_squad("/no/such/file.json"), IoError);
}

TEST_CASE("detokenization through char spans matches the annotated answer text") {
    SquadData d = parse_squad_text(squad_fixture("b c", 2));
    const QAExample& ex = d.examples[0];
    std::string detok = detokenize_span(ex.document, ex.answers[0]);
    CHECK(normalize_answer(detok) == normalize_answer(ex.gold_texts[0]));
}

TEST_CASE("vocabulary reserves pad/unk and is bijective over the rest") {
    SquadData d = parse_squad_text(squad_fixture("b", 2));
    Vocabulary v = Vocabulary::build(d.examples);
    CHECK(v.id("b") >= static_cast<int>(Vocabulary::kReserved));
    CHECK(v.id("never-seen-token") == Vocabulary::kUnkId);
    std::set<int> ids;
    for (const char* tok : {"a", "b", "c", "q", "?"}) {
        int id = v.id(tok);
        CHECK(id >= static_cast<int>(Vocabulary::kReserved));
        CHECK(v.token(id) == tok);
        ids.insert(id);
    }
    CHECK(ids.size() == 5);
}

TEST_CASE("batches pad with id 0 / mask 0 and carry first aligned gold spans") {
    std::vector<QAExample> corpus = make_synthetic_corpus({12, 5, 6, 3});
    // Vary document lengths so padding actually occurs.
    corpus[0].document = tokenize("doc0 doc1");
    corpus[0].answers = {AnswerSpan{0, 0}};
    Vocabulary v = Vocabulary::build(corpus);
    Batch b = make_batch(corpus, {0, 1, 2}, v);
    REQUIRE(b.size() == 3);
    CHECK(b.doc_token_ids[0].size() == 5);
    CHECK(b.doc_mask[0] == std::vector<int>{1, 1, 0, 0, 0});
    CHECK(b.doc_token_ids[0][3] == Vocabulary::kPadId);
    CHECK(b.doc_token_ids[0][4] == Vocabulary::kPadId);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const QAExample& ex = corpus[b.example_idx[i]];
        CHECK(b.gold_spans[i] == ex.answers.front());
        for (std::size_t t = 0; t < b.doc_mask[i].size(); ++t) {
            bool real = t < ex.document.size();
            CHECK(b.doc_mask[i][t] == (real ? 1 : 0));
            if (!real) CHECK(b.doc_token_ids[i][t] == Vocabulary::kPadId);
        }
    }
}

TEST_CASE("word_dropout: degenerate p, empirical rate, and contract") {
    std::vector<QAExample> corpus = make_synthetic_corpus({50, 20, 500, 7});
    Vocabulary v = Vocabulary::build(corpus);
    std::vector<std::size_t> all(corpus.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    Batch b = make_batch(corpus, all, v);

    SUBCASE("p outside [0,1) is a config error") {
        Rng rng(0);
        CHECK_THROWS_AS(word_dropout(b, -0.1, rng), ConfigError);
        CHECK_THROWS_AS(word_dropout(b, 1.0, rng), ConfigError);
    }
    SUBCASE("p=0 leaves the batch unchanged") {
        Rng rng(0);
        Batch d = word_dropout(b, 0.0, rng);
        CHECK(d.doc_token_ids == b.doc_token_ids);
        CHECK(d.doc_mask == b.doc_mask);
    }
    SUBCASE("empirical drop fraction at p=0.075 over 1e5 tokens is within [0.070, 0.080]") {
        // 10,000 documents of 20 tokens = 2e5 real tokens; use the first 1e5.
        std::vector<QAExample> big = make_synthetic_corpus({50, 20, 5000, 11});
        Vocabulary bv = Vocabulary::build(big);
        std::vector<std::size_t> idx(big.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Batch base = make_batch(big, idx, bv);
        Rng rng(123);
        Batch dropped = word_dropout(base, 0.075, rng);
        std::size_t seen = 0, flipped = 0;
        for (std::size_t i = 0; i < base.size() && seen < 100000; ++i)
            for (std::size_t t = 0; t < base.doc_token_ids[i].size() && seen < 100000; ++t) {
                if (base.doc_mask[i][t] != 1) continue;
                ++seen;
                if (dropped.doc_token_ids[i][t] != base.doc_token_ids[i][t]) {
                    CHECK(dropped.doc_token_ids[i][t] == Vocabulary::kUnkId);
                    ++flipped;
                }
            }
        REQUIRE(seen == 100000);
        double rate = static_cast<double>(flipped) / static_cast<double>(seen);
        CHECK(rate >= 0.070);
        CHECK(rate <= 0.080);
    }
    SUBCASE("only token ids may differ; masks and spans never do") {
        Rng rng(5);
        Batch d = word_dropout(b, 0.075, rng);
        CHECK(d.doc_mask == b.doc_mask);
        CHECK(d.q_mask == b.q_mask);
        CHECK(d.q_token_ids == b.q_token_ids);
        CHECK(d.gold_spans.size() == b.gold_spans.size());
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.gold_spans[i] == b.gold_spans[i]);
    }
}

TEST_CASE("synthetic corpus: determinism, valid spans, and exhaustive-search oracle") {
    SyntheticConfig cfg{40, 12, 300, 99};
    std::vector<QAExample> a = make_synthetic_corpus(cfg);
    std::vector<QAExample> b = make_synthetic_corpus(cfg);
    REQUIRE(a.size() == 300);

    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].document.text == b[i].document.text);
        CHECK(a[i].question.text == b[i].question.text);
        REQUIRE(a[i].answers.size() == 1);
        CHECK(a[i].answers[0] == b[i].answers[0]);

        const QAExample& ex = a[i];
        CHECK(ex.answers[0].start <= ex.answers[0].end);
        CHECK(ex.answers[0].end < ex.document.size());

        // Oracle: scan the document for each question token; exactly one
        // question token occurs, exactly once, and it is the gold span.
        std::vector<std::size_t> hits;
        for (const std::string& q : ex.question.tokens)
            for (std::size_t t = 0; t < ex.document.size(); ++t)
                if (ex.document.tokens[t] == q) hits.push_back(t);
        REQUIRE(hits.size() == 1);
        CHECK(AnswerSpan{hits[0], hits[0]} == ex.answers[0]);
    }
}

TEST_CASE("synthetic corpus config validation") {
    CHECK_THROWS_AS(make_synthetic_corpus({5, 20, 10, 0}), ConfigError);
    CHECK_THROWS_AS(make_synthetic_corpus({20, 2, 10, 0}), ConfigError);
    CHECK_THROWS_AS(make_synthetic_corpus({20, 20, 0, 0}), ConfigError);
}

TEST_CASE("synthetic corpus round-trips through SQuAD JSON unchanged") {
    std::vector<QAExample> corpus = make_synthetic_corpus({30, 8, 50, 3});
    SquadData parsed = parse_squad_text(to_squad_json(corpus, "synthetic"));
    REQUIRE(parsed.examples.size() == corpus.size());
    CHECK(parsed.dropped_unalignable == 0);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(parsed.examples[i].id == corpus[i].id);
        CHECK(parsed.examples[i].answers == corpus[i].answers);
        CHECK(parsed.examples[i].document.tokens == corpus[i].document.tokens);
        // Round-trip: gold span text equals the official answer text.
        CHECK(normalize_answer(detokenize_span(parsed.examples[i].document,
                                               parsed.examples[i].answers[0])) ==
              normalize_answer(parsed.examples[i].gold_texts[0]));
    }
}

TEST_CASE("shuffled batching with a fixed seed is reproducible") {
    std::vector<QAExample> corpus = make_synthetic_corpus({30, 8, 64, 21});
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng r1(77), r2(77);
    auto o1 = order, o2 = order;
    r1.shuffle(o1);
    r2.shuffle(o2);
    CHECK(o1 == o2);
    CHECK(o1 != order); // vanishingly unlikely to be identity
}
