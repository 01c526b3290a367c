#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "coattn/config.hpp"
#include "coattn/data.hpp"
#include "coattn/error.hpp"
#include "coattn/metrics.hpp"
#include "coattn/model.hpp"
#include "coattn/trainer.hpp"

namespace {

using namespace coattn;

// Collects `--<key> <value>` overrides for every config key, applied on top
// of the optional config file.
struct ConfigCli {
    std::string config_path;
    std::unordered_map<std::string, std::string> overrides;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config_path, "key-value config file");
        for (const std::string& key : RunConfig::keys()) {
            cmd.add_option_function<std::string>(
                "--" + key, [this, key](const std::string& v) { overrides[key] = v; },
                "override config key " + key);
        }
    }

    RunConfig resolve() const {
        RunConfig config =
            config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
        for (const auto& [key, value] : overrides) config.set(key, value);
        if (const char* env_seed = std::getenv("COATTN_SEED")) {
            config.set("train.seed", env_seed);
            std::cerr << "train.seed overridden by COATTN_SEED=" << env_seed << "\n";
        }
        return config;
    }
};

std::vector<QAExample> load_squad_or_fail(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing ") + what + " path");
    SquadData data = parse_squad(path);
    if (data.dropped_unalignable > 0)
        std::cerr << what << ": dropped " << data.dropped_unalignable
                  << " example(s) whose answers do not align to token boundaries\n";
    return std::move(data.examples);
}

int cmd_train(const ConfigCli& cli, bool resume) {
    RunConfig config = cli.resolve();
    std::vector<QAExample> train_set = load_squad_or_fail(config.data_train, "data.train");
    std::vector<QAExample> dev_set;
    if (!config.data_dev.empty()) dev_set = load_squad_or_fail(config.data_dev, "data.dev");

    Trainer trainer(config, std::move(train_set), std::move(dev_set));
    TrainResult result = trainer.train(resume);
    std::cout << "epochs " << result.epochs_run << ", steps " << result.steps_run
              << ", best dev F1 " << result.best_dev_f1 << ", final dev EM "
              << result.final_dev_em << ", final dev F1 " << result.final_dev_f1 << "\n"
              << "artifacts in " << config.out_dir << "\n";
    return 0;
}

int cmd_predict(const ConfigCli& cli, std::string run_dir, std::string checkpoint,
                std::string vocab_path, const std::string& data_path,
                const std::string& out_path) {
    RunConfig config;
    if (!run_dir.empty()) {
        config = RunConfig::from_file(run_dir + "/config.kv");
        if (checkpoint.empty()) checkpoint = run_dir + "/checkpoint_best.bin";
        if (vocab_path.empty()) vocab_path = run_dir + "/vocab.txt";
    } else {
        config = cli.resolve();
    }
    if (checkpoint.empty() || vocab_path.empty())
        throw ConfigError("predict: need --run, or both --checkpoint and --vocab");

    Vocabulary vocab = Vocabulary::load(vocab_path);
    QaModel model(config.model_config(vocab.size()), config.train_seed);
    model.load_checkpoint(checkpoint);

    std::vector<QAExample> corpus = load_squad_or_fail(data_path, "--data");
    auto predictions = predict_corpus(model, vocab, corpus);

    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, answer] : predictions) j[id] = answer;
    std::ofstream out(out_path);
    if (!out) throw IoError("predict: cannot open " + out_path);
    out << j.dump(2) << "\n";
    std::cout << "wrote " << predictions.size() << " predictions to " << out_path << "\n";
    return 0;
}

int cmd_evaluate(const std::string& data_path, const std::string& pred_path) {
    std::vector<QAExample> corpus = load_squad_or_fail(data_path, "--data");
    std::ifstream pred_in(pred_path);
    if (!pred_in) throw IoError("evaluate: cannot open " + pred_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(pred_in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("evaluate: malformed predictions JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("evaluate: predictions must be an id->answer object");
    std::unordered_map<std::string, std::string> predictions;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_string())
            throw SchemaError("evaluate: prediction for '" + it.key() + "' is not a string");
        predictions[it.key()] = it.value().get<std::string>();
    }
    std::cout << evaluate_corpus(predictions, corpus).to_json() << "\n";
    return 0;
}

int cmd_gradcheck(const GradcheckConfig& config) {
    GradcheckReport report = run_gradcheck(config);
    std::cout << report.summary() << "\n";
    return report.passed ? 0 : 1;
}

int cmd_synth(const ConfigCli& cli, const std::string& out_path) {
    RunConfig config = cli.resolve();
    SyntheticConfig synth{config.synth_vocab_size, config.synth_doc_len,
                          config.synth_corpus_size, config.synth_seed};
    std::vector<QAExample> corpus = make_synthetic_corpus(synth);
    std::ofstream out(out_path);
    if (!out) throw IoError("synth: cannot open " + out_path);
    out << to_squad_json(corpus, "synthetic") << "\n";
    std::cout << "wrote " << corpus.size() << " examples to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"extractive question answering: deep residual coattention encoder, "
                 "dynamic span decoder, mixed cross-entropy / self-critical objective"};
    app.require_subcommand(1);

    ConfigCli train_cli, predict_cli, synth_cli;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    bool resume = false;
    train_cmd->add_flag("--resume", resume, "continue from checkpoint_last in out.dir");
    train_cli.attach(*train_cmd);

    CLI::App* predict_cmd = app.add_subcommand("predict", "write a predictions JSON");
    std::string run_dir, checkpoint, vocab_path, pred_data, pred_out = "predictions.json";
    predict_cmd->add_option("--run", run_dir, "training run directory (config/checkpoint/vocab)");
    predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
    predict_cmd->add_option("--vocab", vocab_path, "vocabulary file");
    predict_cmd->add_option("--data", pred_data, "SQuAD-format JSON")->required();
    predict_cmd->add_option("--out", pred_out, "output predictions path");
    predict_cli.attach(*predict_cmd);

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "score predictions against gold answers");
    std::string eval_data, eval_pred;
    eval_cmd->add_option("--data", eval_data, "SQuAD-format JSON")->required();
    eval_cmd->add_option("--pred", eval_pred, "predictions JSON")->required();

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    GradcheckConfig grad_config;
    grad_cmd->add_option("--embed_dim", grad_config.embed_dim);
    grad_cmd->add_option("--hidden", grad_config.hidden);
    grad_cmd->add_option("--doc_len", grad_config.doc_len);
    grad_cmd->add_option("--t_max", grad_config.t_max);
    grad_cmd->add_option("--maxout_pool", grad_config.maxout_pool);
    grad_cmd->add_option("--moe_experts", grad_config.moe_experts);
    grad_cmd->add_option("--moe_topk", grad_config.moe_topk);
    grad_cmd->add_option("--seeds", grad_config.seeds);
    grad_cmd->add_option("--tolerance", grad_config.tolerance);

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_out = "synthetic.json";
    synth_cmd->add_option("--out", synth_out, "output SQuAD-format JSON path");
    synth_cli.attach(*synth_cmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(train_cli, resume);
        if (predict_cmd->parsed())
            return cmd_predict(predict_cli, run_dir, checkpoint, vocab_path, pred_data, pred_out);
        if (eval_cmd->parsed()) return cmd_evaluate(eval_data, eval_pred);
        if (grad_cmd->parsed()) return cmd_gradcheck(grad_config);
        if (synth_cmd->parsed()) return cmd_synth(synth_cli, synth_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
