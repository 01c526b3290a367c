#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "coattn/optim.hpp"
#include "coattn/trainer.hpp"
#include "support.hpp"

using namespace coattn;
using namespace coattn::testing;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config(const fs::path& out_dir) {
    RunConfig cfg;
    cfg.model_embed_dim = 6;
    cfg.model_hidden = 6;
    cfg.decoder_t_max = 2;
    cfg.decoder_maxout_pool = 4;
    cfg.decoder_moe_experts = 4;
    cfg.decoder_moe_topk = 2;
    cfg.train_epochs = 2;
    cfg.train_batch_size = 8;
    cfg.train_word_dropout = 0.075;
    cfg.train_seed = 3;
    cfg.objective_seed = 4;
    cfg.optim_lr = 0.005;
    cfg.out_dir = out_dir.string();
    return cfg;
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("adam: zero gradients leave parameters unchanged while moments decay") {
    Tensor w = Tensor::from(2, 1, {1.5, -2.0});
    w.set_requires_grad(true);
    w.set_name("w");
    Adam adam({w}, AdamConfig{});
    std::vector<double> before = w.values();
    adam.step();
    adam.step();
    CHECK(w.values() == before);
}

TEST_CASE("adam: first step with constant gradient 1 moves by about lr") {
    Tensor w = Tensor::from(1, 1, {0.0});
    w.set_requires_grad(true);
    w.set_name("w");
    AdamConfig cfg;
    Adam adam({w}, cfg);
    w.node()->ensure_grad();
    w.node()->grad[0] = 1.0;
    adam.step();
    // Bias-corrected first step: lr * 1 / (1 + eps).
    CHECK(std::fabs(-w.values()[0] - cfg.lr) < 1e-8);
}

TEST_CASE("adam: non-finite gradients abort naming the parameter") {
    Tensor w = Tensor::from(1, 1, {0.0});
    w.set_requires_grad(true);
    w.set_name("dec.some.weight");
    Adam adam({w}, AdamConfig{});
    w.node()->ensure_grad();
    w.node()->grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(adam.step(), doctest::Contains("dec.some.weight"), DataError);
}

TEST_CASE("adam state round-trips through its binary serialization") {
    Rng rng(5);
    Tensor w = random_param(3, 2, rng, "w");
    Adam a({w}, AdamConfig{});
    for (int i = 0; i < 3; ++i) {
        w.zero_grad();
        w.node()->ensure_grad();
        for (double& g : w.node()->grad) g = rng.uniform(-1, 1);
        a.step();
    }
    std::stringstream buf;
    a.save_state(buf);

    Tensor w2 = w;
    Adam b({w2}, AdamConfig{});
    b.load_state(buf);
    CHECK(b.step_count() == a.step_count());
}

TEST_CASE("run config round-trips through its text form unchanged") {
    RunConfig cfg;
    cfg.model_hidden = 24;
    cfg.objective_rl_enabled = false;
    cfg.train_word_dropout = 0.0625;
    cfg.data_train = "some/path.json";
    RunConfig back = RunConfig::from_text(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());

    CHECK_THROWS_AS(RunConfig::from_text("bogus.key = 1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("model.hidden = abc"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_text("no equals sign here"), ConfigError);

    RunConfig commented = RunConfig::from_text("# comment\nmodel.hidden = 9\n\n");
    CHECK(commented.model_hidden == 9);
    CHECK(commented.get("model.hidden") == "9");

    RunConfig invalid;
    invalid.objective_ce_enabled = false;
    invalid.objective_rl_enabled = false;
    CHECK_THROWS_AS(invalid.validate(), ConfigError);
}

TEST_CASE("training on a tiny synthetic corpus runs, logs, and improves") {
    fs::path dir = fs::temp_directory_path() / "coattn_train_smoke";
    fs::remove_all(dir);
    std::vector<QAExample> train = make_synthetic_corpus({20, 6, 48, 1});
    std::vector<QAExample> dev = make_synthetic_corpus({20, 6, 16, 2});

    RunConfig cfg = tiny_run_config(dir);
    Trainer trainer(cfg, train, dev);
    TrainResult result = trainer.train();

    CHECK(result.epochs_run == 2);
    CHECK(result.steps_run == 12); // 48/8 batches x 2 epochs
    CHECK(fs::exists(dir / "checkpoint_last.bin"));
    CHECK(fs::exists(dir / "checkpoint_best.bin"));
    CHECK(fs::exists(dir / "config.kv"));

    // Diagnostics: one step record per optimizer step, one eval per epoch,
    // sigma trajectories present when the mixed objective is on.
    auto lines = read_lines(dir / "diagnostics.jsonl");
    std::size_t steps = 0, evals = 0;
    for (const std::string& line : lines) {
        auto rec = nlohmann::json::parse(line);
        if (rec["type"] == "step") {
            ++steps;
            CHECK(rec.contains("l_ce"));
            CHECK(rec.contains("l_rl"));
            CHECK(rec.contains("sigma_ce"));
            CHECK(rec.contains("sigma_rl"));
            CHECK(rec.contains("f1_sampled"));
            CHECK(rec.contains("f1_greedy"));
        } else if (rec["type"] == "eval") {
            ++evals;
        }
    }
    CHECK(steps == 12);
    CHECK(evals == 2);
    fs::remove_all(dir);
}

TEST_CASE("full-run determinism: same config, seed and data fix every logged number") {
    std::vector<QAExample> train = make_synthetic_corpus({20, 6, 32, 7});
    std::vector<QAExample> dev = make_synthetic_corpus({20, 6, 8, 8});

    fs::path d1 = fs::temp_directory_path() / "coattn_det_a";
    fs::path d2 = fs::temp_directory_path() / "coattn_det_b";
    fs::remove_all(d1);
    fs::remove_all(d2);

    Trainer t1(tiny_run_config(d1), train, dev);
    Trainer t2(tiny_run_config(d2), train, dev);
    t1.train();
    t2.train();

    CHECK(read_lines(d1 / "diagnostics.jsonl") == read_lines(d2 / "diagnostics.jsonl"));
    for (std::size_t i = 0; i < t1.model().parameters().size(); ++i)
        CHECK(t1.model().parameters()[i].values() == t2.model().parameters()[i].values());
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("interrupt and resume continues the loss curve bit-identically") {
    std::vector<QAExample> train = make_synthetic_corpus({20, 6, 32, 11});
    std::vector<QAExample> dev = make_synthetic_corpus({20, 6, 8, 12});

    fs::path full_dir = fs::temp_directory_path() / "coattn_resume_full";
    fs::path split_dir = fs::temp_directory_path() / "coattn_resume_split";
    fs::remove_all(full_dir);
    fs::remove_all(split_dir);

    RunConfig full_cfg = tiny_run_config(full_dir);
    full_cfg.train_epochs = 4;
    Trainer full(full_cfg, train, dev);
    full.train();

    RunConfig split_cfg = tiny_run_config(split_dir);
    split_cfg.train_epochs = 2;
    {
        Trainer first(split_cfg, train, dev);
        first.train();
    }
    split_cfg.train_epochs = 4;
    Trainer second(split_cfg, train, dev);
    second.train(/*resume=*/true);

    CHECK(read_lines(full_dir / "diagnostics.jsonl") ==
          read_lines(split_dir / "diagnostics.jsonl"));
    for (std::size_t i = 0; i < full.model().parameters().size(); ++i)
        CHECK(full.model().parameters()[i].values() ==
              second.model().parameters()[i].values());
    fs::remove_all(full_dir);
    fs::remove_all(split_dir);
}

TEST_CASE("predictions feed evaluation directly and empty spans emit empty strings") {
    std::vector<QAExample> corpus = make_synthetic_corpus({20, 6, 16, 13});
    Vocabulary vocab = Vocabulary::build(corpus);
    ModelConfig mc;
    mc.embed_dim = 6;
    mc.hidden = 6;
    mc.vocab_size = vocab.size();
    mc.t_max = 2;
    mc.maxout_pool = 4;
    mc.moe_experts = 4;
    QaModel model(mc, 1);

    auto preds = predict_corpus(model, vocab, corpus);
    CHECK(preds.size() == corpus.size());
    EvalReport report = evaluate_corpus(preds, corpus);
    CHECK(report.n_examples == corpus.size());
    CHECK(report.missing_predictions == 0);

    auto preds2 = predict_corpus(model, vocab, corpus);
    CHECK(preds == preds2); // deterministic given a fixed checkpoint
}

TEST_CASE("gradcheck harness passes on fresh models and catches corrupted rules") {
    GradcheckConfig cfg;
    cfg.embed_dim = 5;
    cfg.hidden = 5;
    cfg.doc_len = 6;
    cfg.t_max = 2;
    cfg.maxout_pool = 3;
    cfg.moe_experts = 3;
    cfg.moe_topk = 2;
    cfg.seeds = 2;

    GradcheckReport ok = run_gradcheck(cfg);
    INFO(ok.summary());
    CHECK(ok.passed);
    CHECK(ok.max_rel_error < cfg.tolerance);
    CHECK(ok.parameters_checked > 10);

    cfg.corrupt_parameter = "dec.start.wd.w";
    cfg.seeds = 1;
    GradcheckReport bad = run_gradcheck(cfg);
    CHECK_FALSE(bad.passed);
    REQUIRE(!bad.failures.empty());
    CHECK(bad.failures.front().parameter == "dec.start.wd.w");
    CHECK(bad.summary().find("dec.start.wd.w") != std::string::npos);
}

TEST_CASE("composed-model gradients hold across 20 seeds at toy sizes") {
    GradcheckConfig cfg;
    cfg.embed_dim = 4;
    cfg.hidden = 4;
    cfg.doc_len = 5;
    cfg.q_len = 3;
    cfg.t_max = 2;
    cfg.maxout_pool = 2;
    cfg.moe_experts = 2;
    cfg.moe_topk = 2;
    cfg.seeds = 20;
    GradcheckReport report = run_gradcheck(cfg);
    INFO(report.summary());
    CHECK(report.passed);

    cfg.embed_dim = 64;
    CHECK_THROWS_AS(run_gradcheck(cfg), ConfigError);
}

TEST_CASE("a trained convergent decode is idempotent under one more step") {
    // Train a tiny model onto a single example until its greedy decode
    // stabilizes, then compare the early-stopped trace against a full-length
    // rollout of the same frozen model.
    std::vector<QAExample> one = make_synthetic_corpus({20, 6, 1, 31});
    fs::path dir = fs::temp_directory_path() / "coattn_stable_fixture";
    fs::remove_all(dir);
    RunConfig cfg = tiny_run_config(dir);
    cfg.train_epochs = 40;
    cfg.train_batch_size = 1;
    cfg.train_word_dropout = 0.0;
    cfg.optim_lr = 0.01;
    Trainer trainer(cfg, one, one);
    trainer.train();
    fs::remove_all(dir);

    const QaModel& model = trainer.model();
    ExampleInput in = example_input(one[0], trainer.vocab());
    Tape::NoGrad off;
    DecodeTrace stopped = model.run(in, RolloutPolicy::greedy()).trace;
    REQUIRE(stopped.converged);
    CHECK(stopped.steps.size() >= 2);
    CHECK(stopped.steps.size() <= cfg.decoder_t_max);

    DecodeTrace full = model.run(in, RolloutPolicy::greedy(/*early_stop=*/false)).trace;
    CHECK(full.steps.size() == cfg.decoder_t_max);
    CHECK(extract_answer(full) == extract_answer(stopped));
    // The trained fixture decodes to the gold span.
    CHECK(extract_answer(stopped) == one[0].answers.front());
}

TEST_CASE("pure cross-entropy and pure-RL configurations both run") {
    std::vector<QAExample> train = make_synthetic_corpus({20, 6, 16, 21});
    std::vector<QAExample> dev = make_synthetic_corpus({20, 6, 8, 22});

    for (bool rl_only : {false, true}) {
        fs::path dir = fs::temp_directory_path() /
                       (rl_only ? "coattn_rl_only" : "coattn_ce_only");
        fs::remove_all(dir);
        RunConfig cfg = tiny_run_config(dir);
        cfg.train_epochs = 1;
        cfg.objective_ce_enabled = !rl_only;
        cfg.objective_rl_enabled = rl_only;
        Trainer trainer(cfg, train, dev);
        TrainResult result = trainer.train();
        CHECK(result.epochs_run == 1);

        auto lines = read_lines(dir / "diagnostics.jsonl");
        CHECK(!lines.empty());
        auto rec = nlohmann::json::parse(lines.front());
        if (rl_only) {
            CHECK(rec.contains("sigma_ce") == false);
        } else {
            // With the RL term disabled the combined loss is plain
            // cross-entropy: no uncertainty weighting remains.
            CHECK(rec["loss"].get<double>() == doctest::Approx(rec["l_ce"].get<double>()));
        }
        fs::remove_all(dir);
    }
}
