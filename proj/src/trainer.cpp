#include "coattn/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coattn/error.hpp"

namespace coattn {

namespace fs = std::filesystem;
using nlohmann::json;

ExampleInput example_input(const QAExample& example, const Vocabulary& vocab) {
    ExampleInput in;
    for (const std::string& tok : example.document.tokens) {
        in.doc_ids.push_back(vocab.id(tok));
        in.doc_mask.push_back(1);
    }
    for (const std::string& tok : example.question.tokens) {
        in.q_ids.push_back(vocab.id(tok));
        in.q_mask.push_back(1);
    }
    return in;
}

std::unordered_map<std::string, std::string> predict_corpus(const QaModel& model,
                                                            const Vocabulary& vocab,
                                                            const std::vector<QAExample>& corpus) {
    std::unordered_map<std::string, std::string> preds;
    Tape::NoGrad off;
    for (const QAExample& ex : corpus) {
        DecodeTrace trace = model.run(example_input(ex, vocab), RolloutPolicy::greedy()).trace;
        std::optional<AnswerSpan> span = extract_answer(trace);
        preds[ex.id] = span ? detokenize_span(ex.document, *span) : std::string();
    }
    return preds;
}

Trainer::Trainer(RunConfig config, std::vector<QAExample> train_set,
                 std::vector<QAExample> dev_set)
    : config_(std::move(config)), train_set_(std::move(train_set)), dev_set_(std::move(dev_set)) {
    config_.validate();
    if (train_set_.empty()) throw DataError("Trainer: empty training set");
    vocab_ = Vocabulary::build(train_set_);
    model_ = std::make_unique<QaModel>(config_.model_config(vocab_.size()), config_.train_seed);
    AdamConfig adam_cfg{config_.optim_lr, config_.optim_beta1, config_.optim_beta2,
                        config_.optim_epsilon};
    adam_ = std::make_unique<Adam>(model_->parameters(), adam_cfg);
}

Tensor Trainer::example_loss(const ExampleInput& train_input, const ExampleInput& clean_input,
                             const AnswerSpan& gold, const TokenizedText& doc, Rng& sample_rng,
                             LossReport& report) const {
    DeepEncoding encoding = model_->encode(train_input);

    Tensor l_ce;
    if (config_.objective_ce_enabled) {
        DecodeTrace trace =
            model_->decode_encoding(encoding, train_input.doc_mask, RolloutPolicy::greedy());
        l_ce = cross_entropy_loss(trace, gold, train_input.doc_mask);
        report.l_ce = l_ce.item();
    }

    Tensor surrogate;
    if (config_.objective_rl_enabled) {
        DecodeTrace sampled_trace = model_->decode_encoding(
            encoding, train_input.doc_mask, RolloutPolicy::sampled(sample_rng, false));
        Trajectory trajectory;
        for (const DecodeStep& step : sampled_trace.steps) {
            trajectory.sampled.emplace_back(step.s, step.e);
            trajectory.log_probs.push_back(step.log_prob);
        }
        std::optional<AnswerSpan> greedy_span;
        {
            Tape::NoGrad off;
            greedy_span =
                extract_answer(model_->run(clean_input, RolloutPolicy::greedy()).trace);
        }
        report.reward.f1_sampled = span_f1(extract_answer(sampled_trace), gold, doc);
        report.reward.f1_greedy = span_f1(greedy_span, gold, doc);
        report.reward.advantage = report.reward.f1_sampled - report.reward.f1_greedy;
        surrogate = rl_surrogate_loss(trajectory, report.reward);
        report.l_rl_surrogate = surrogate.item();
    }

    Tensor combined;
    if (config_.objective_ce_enabled && config_.objective_rl_enabled) {
        combined = mixed_loss(l_ce, surrogate, model_->log_var_ce(), model_->log_var_rl());
        report.log_var_ce = model_->log_var_ce().item();
        report.log_var_rl = model_->log_var_rl().item();
    } else if (config_.objective_ce_enabled) {
        combined = l_ce;
    } else {
        combined = surrogate;
    }
    report.combined = combined.item();
    return combined;
}

EvalReport Trainer::evaluate_dev() const {
    return evaluate_corpus(predict_corpus(*model_, vocab_, dev_set_), dev_set_);
}

TrainResult Trainer::train(bool resume) {
    fs::create_directories(config_.out_dir);
    const std::string diag_path = config_.out_dir + "/diagnostics.jsonl";
    const std::string ckpt_last = config_.out_dir + "/checkpoint_last.bin";
    const std::string ckpt_best = config_.out_dir + "/checkpoint_best.bin";
    const std::string adam_path = config_.out_dir + "/adam_state.bin";
    const std::string state_path = config_.out_dir + "/train_state.json";

    {
        std::ofstream cfg_out(config_.out_dir + "/config.kv");
        cfg_out << config_.to_text();
    }
    vocab_.save(config_.out_dir + "/vocab.txt");

    Rng data_rng(config_.train_seed);
    Rng sample_rng(config_.objective_seed);
    std::size_t start_epoch = 0;
    std::size_t step = 0;
    double best_dev_f1 = -1.0;

    if (resume) {
        std::ifstream state_in(state_path);
        if (!state_in) throw IoError("resume: missing " + state_path);
        json state = json::parse(state_in);
        start_epoch = state.at("epoch").get<std::size_t>();
        step = state.at("step").get<std::size_t>();
        best_dev_f1 = state.at("best_dev_f1").get<double>();
        data_rng.deserialize(state.at("data_rng").get<std::string>());
        sample_rng.deserialize(state.at("sample_rng").get<std::string>());
        model_->load_checkpoint(ckpt_last);
        std::ifstream adam_in(adam_path, std::ios::binary);
        if (!adam_in) throw IoError("resume: missing " + adam_path);
        adam_->load_state(adam_in);
    }

    std::ofstream diag(diag_path, resume ? std::ios::app : std::ios::trunc);
    if (!diag) throw IoError("train: cannot open " + diag_path);

    TrainResult result;
    double best_so_far = resume ? best_dev_f1 : -1.0; // first eval always wins
    result.best_dev_f1 = std::max(best_so_far, 0.0);

    std::vector<std::size_t> order(train_set_.size());
    for (std::size_t epoch = start_epoch + 1; epoch <= config_.train_epochs; ++epoch) {
        // The permutation must be a pure function of the RNG state so resumed
        // runs reproduce it; start from the identity every epoch.
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        data_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;

        for (std::size_t begin = 0; begin < order.size(); begin += config_.train_batch_size) {
            std::size_t end = std::min(begin + config_.train_batch_size, order.size());
            std::vector<std::size_t> indices(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
            Batch batch = make_batch(train_set_, indices, vocab_);
            Batch dropped = config_.train_word_dropout > 0.0
                                ? word_dropout(batch, config_.train_word_dropout, data_rng)
                                : batch;

            model_->zero_grad();
            double batch_loss = 0.0, batch_ce = 0.0, batch_rl = 0.0;
            double batch_f1s = 0.0, batch_f1g = 0.0;
            LossReport last_report;
            const double inv_batch = 1.0 / static_cast<double>(indices.size());
            for (std::size_t i = 0; i < indices.size(); ++i) {
                ExampleInput train_in{dropped.doc_token_ids[i], dropped.doc_mask[i],
                                      dropped.q_token_ids[i], dropped.q_mask[i]};
                ExampleInput clean_in{batch.doc_token_ids[i], batch.doc_mask[i],
                                      batch.q_token_ids[i], batch.q_mask[i]};
                const QAExample& ex = train_set_[indices[i]];

                Tape tape;
                LossReport report;
                Tensor scaled;
                {
                    Tape::Scope scope(tape);
                    Tensor loss = example_loss(train_in, clean_in, batch.gold_spans[i],
                                               ex.document, sample_rng, report);
                    scaled = scale(loss, inv_batch);
                }
                tape.backward(scaled);

                batch_loss += report.combined * inv_batch;
                batch_ce += report.l_ce * inv_batch;
                batch_rl += report.l_rl_surrogate * inv_batch;
                batch_f1s += report.reward.f1_sampled * inv_batch;
                batch_f1g += report.reward.f1_greedy * inv_batch;
                last_report = report;
            }
            adam_->step();
            ++step;
            epoch_loss += batch_loss;
            ++epoch_batches;

            json rec = {{"type", "step"},   {"step", step},      {"epoch", epoch},
                        {"loss", batch_loss}, {"l_ce", batch_ce}, {"l_rl", batch_rl}};
            if (config_.objective_rl_enabled) {
                rec["f1_sampled"] = batch_f1s;
                rec["f1_greedy"] = batch_f1g;
                if (config_.objective_ce_enabled) {
                    // Learned uncertainty weights exist only for the mixed objective.
                    rec["sigma_ce"] = std::exp(0.5 * last_report.log_var_ce);
                    rec["sigma_rl"] = std::exp(0.5 * last_report.log_var_rl);
                }
            }
            diag << rec.dump() << "\n";
        }

        EpochRecord er;
        er.epoch = epoch;
        er.mean_loss = epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
        if (!dev_set_.empty()) {
            EvalReport dev = evaluate_dev();
            er.dev_em = dev.em;
            er.dev_f1 = dev.f1;
            json rec = {{"type", "eval"},   {"epoch", epoch},  {"step", step},
                        {"dev_em", dev.em}, {"dev_f1", dev.f1}};
            diag << rec.dump() << "\n";
        }
        diag.flush();

        model_->save_checkpoint(ckpt_last);
        {
            std::ofstream adam_out(adam_path, std::ios::binary);
            adam_->save_state(adam_out);
        }
        if (dev_set_.empty() || er.dev_f1 > best_so_far) {
            best_so_far = er.dev_f1;
            result.best_dev_f1 = std::max(er.dev_f1, 0.0);
            model_->save_checkpoint(ckpt_best);
        }
        {
            json state = {{"epoch", epoch},
                          {"step", step},
                          {"best_dev_f1", best_so_far},
                          {"data_rng", data_rng.serialize()},
                          {"sample_rng", sample_rng.serialize()}};
            std::ofstream state_out(state_path);
            state_out << state.dump(2) << "\n";
        }

        result.epochs.push_back(er);
        result.epochs_run = epoch;
        result.steps_run = step;
        result.final_dev_em = er.dev_em;
        result.final_dev_f1 = er.dev_f1;
        if (er.dev_em >= config_.train_stop_at_dev_em) break;
    }
    return result;
}

// ---- gradient-check harness ----------------------------------------------------

namespace {

double fd_noise_floor(double loss_magnitude, double step) {
    return std::max(3e-6, 50.0 * std::fabs(loss_magnitude) * 2.2e-16 / step);
}

double rel_err(double a, double b, double floor) {
    double denom = std::max({std::fabs(a), std::fabs(b), floor});
    return std::fabs(a - b) / denom;
}

} // namespace

std::string GradcheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << ": max rel. error " << max_rel_error << " ("
       << worst_parameter << ", " << worst_loss << " path), " << parameters_checked
       << " parameter tensors checked";
    if (!failures.empty()) {
        os << "; " << failures.size() << " failure(s), first: " << failures.front().parameter
           << " on " << failures.front().loss << " at " << failures.front().rel_error;
    }
    return os.str();
}

GradcheckReport run_gradcheck(const GradcheckConfig& config) {
    // Finite differencing every parameter is only tractable at toy sizes.
    if (config.embed_dim > 8 || config.hidden > 8 || config.doc_len > 12 || config.q_len > 6)
        throw ConfigError("run_gradcheck: toy sizes required (embed/hidden <= 8, doc <= 12, "
                          "question <= 6)");
    GradcheckReport report;
    for (std::uint64_t seed = 0; seed < config.seeds; ++seed) {
        // One key-lookup example with exactly doc_len document tokens and
        // q_len question tokens.
        Rng ex_rng(seed + 1);
        std::size_t answer_pos = ex_rng.below(config.doc_len);
        std::vector<std::string> doc_toks(config.doc_len), q_toks(config.q_len);
        for (std::size_t i = 0; i < doc_toks.size(); ++i) doc_toks[i] = "d" + std::to_string(i);
        for (std::size_t i = 0; i < q_toks.size(); ++i) q_toks[i] = "q" + std::to_string(i);
        doc_toks[answer_pos] = "key";
        q_toks[ex_rng.below(config.q_len)] = "key";
        auto join = [](const std::vector<std::string>& toks) {
            std::string s;
            for (std::size_t i = 0; i < toks.size(); ++i) s += (i ? " " : "") + toks[i];
            return s;
        };
        QAExample ex;
        ex.id = "gradcheck-" + std::to_string(seed);
        ex.document = tokenize(join(doc_toks));
        ex.question = tokenize(join(q_toks));
        ex.answers.push_back(AnswerSpan{answer_pos, answer_pos});
        ex.gold_texts.push_back("key");
        Vocabulary vocab = Vocabulary::build({ex});

        ModelConfig mc;
        mc.embed_dim = config.embed_dim;
        mc.hidden = config.hidden;
        mc.vocab_size = vocab.size();
        mc.t_max = config.t_max;
        mc.maxout_pool = config.maxout_pool;
        mc.moe_experts = config.moe_experts;
        mc.moe_topk = config.moe_topk;
        QaModel model(mc, seed * 7919 + 1);

        ExampleInput input = example_input(ex, vocab);
        AnswerSpan gold = ex.answers.front();

        // Freeze the conditioning so every compared loss is smooth: greedy
        // estimates for the cross-entropy path, one sampled trajectory and
        // its advantage for the surrogate.
        std::vector<std::pair<std::size_t, std::size_t>> greedy_est, sampled_est;
        double advantage;
        {
            Tape::NoGrad off;
            DecodeTrace greedy = model.run(input, RolloutPolicy::greedy()).trace;
            greedy_est = trace_estimates(greedy);
            Rng sample_rng(seed + 100);
            DecodeTrace sampled =
                model.run(input, RolloutPolicy::sampled(sample_rng, false)).trace;
            sampled_est = trace_estimates(sampled);
            double f1_s = span_f1(extract_answer(sampled), gold, ex.document);
            double f1_g = span_f1(extract_answer(greedy), gold, ex.document);
            advantage = f1_s - f1_g;
            if (std::fabs(advantage) < 1e-9) advantage = 0.7; // keep the check informative
        }

        RewardResult reward{0.0, 0.0, advantage};
        auto surrogate_of = [&](const DecodeTrace& trace) {
            Trajectory traj;
            traj.sampled = sampled_est;
            for (const DecodeStep& s : trace.steps) traj.log_probs.push_back(s.log_prob);
            return rl_surrogate_loss(traj, reward);
        };

        struct LossDef {
            const char* name;
            std::function<Tensor()> build;
        };
        std::vector<LossDef> losses = {
            {"cross_entropy",
             [&] {
                 DecodeTrace t = model.run(input, RolloutPolicy::forced(greedy_est)).trace;
                 return cross_entropy_loss(t, gold, input.doc_mask);
             }},
            {"rl_surrogate",
             [&] {
                 DecodeTrace t = model.run(input, RolloutPolicy::forced(sampled_est)).trace;
                 return surrogate_of(t);
             }},
            {"mixed",
             [&] {
                 DeepEncoding enc = model.encode(input);
                 DecodeTrace ce_t =
                     model.decode_encoding(enc, input.doc_mask, RolloutPolicy::forced(greedy_est));
                 DecodeTrace rl_t = model.decode_encoding(enc, input.doc_mask,
                                                          RolloutPolicy::forced(sampled_est));
                 return mixed_loss(cross_entropy_loss(ce_t, gold, input.doc_mask),
                                   surrogate_of(rl_t), model.log_var_ce(), model.log_var_rl());
             }},
        };

        for (const LossDef& loss : losses) {
            model.zero_grad();
            Tape tape;
            Tensor value;
            {
                Tape::Scope scope(tape);
                value = loss.build();
            }
            tape.backward(value);
            const double loss_scale = value.item();
            auto eval = [&] {
                Tape::NoGrad off;
                return loss.build().item();
            };

            for (Tensor param : model.parameters()) {
                std::vector<double> analytic =
                    param.has_grad() ? param.grad() : std::vector<double>(param.size(), 0.0);
                if (param.name() == config.corrupt_parameter)
                    for (double& a : analytic) a = a * 1.01 + 1e-3;
                double floor = fd_noise_floor(loss_scale, config.fd_step);
                for (std::size_t k = 0; k < param.size(); ++k) {
                    if (param.name() == "embed.table" &&
                        k % param.cols() < Vocabulary::kReserved)
                        continue; // frozen pad/unk columns are not trainable
                    double keep = param.values()[k];
                    param.values()[k] = keep + config.fd_step;
                    double hi = eval();
                    param.values()[k] = keep - config.fd_step;
                    double lo = eval();
                    param.values()[k] = keep;
                    double numeric = (hi - lo) / (2.0 * config.fd_step);
                    double err = rel_err(analytic[k], numeric, floor);
                    if (err >= config.tolerance) {
                        // Re-probe at a smaller step: a maxout/top-k selection
                        // boundary straddled at the base step is almost never
                        // straddled at step/100, while a wrong backward rule
                        // keeps disagreeing.
                        double small = config.fd_step / 100.0;
                        param.values()[k] = keep + small;
                        double hi2 = eval();
                        param.values()[k] = keep - small;
                        double lo2 = eval();
                        param.values()[k] = keep;
                        double numeric2 = (hi2 - lo2) / (2.0 * small);
                        err = rel_err(analytic[k], numeric2, fd_noise_floor(loss_scale, small));
                    }
                    if (err > report.max_rel_error) {
                        report.max_rel_error = err;
                        report.worst_parameter = param.name();
                        report.worst_loss = loss.name;
                    }
                    if (err >= config.tolerance)
                        report.failures.push_back(
                            GradcheckIssue{param.name(), loss.name, seed, err});
                }
                if (seed == 0 && loss.name == std::string("cross_entropy"))
                    ++report.parameters_checked;
            }
        }
    }
    report.passed = report.failures.empty();
    return report;
}

} // namespace coattn
