#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coattn/model.hpp"

namespace coattn {

// Run configuration. Every field is addressable by its dotted key, both in
// the plain key-value config file ("key = value" lines, '#' comments) and as
// a command-line flag of the same name.
struct RunConfig {
    std::size_t model_embed_dim = 16;
    std::size_t model_hidden = 16;
    bool encoder_residual = true;
    std::size_t decoder_t_max = 4;
    std::size_t decoder_maxout_pool = 16;
    bool decoder_moe_enabled = true;
    std::size_t decoder_moe_experts = 16;
    std::size_t decoder_moe_topk = 2;
    bool objective_rl_enabled = true;
    bool objective_ce_enabled = true;
    std::uint64_t objective_seed = 1;
    std::uint64_t train_seed = 0;
    std::size_t train_epochs = 10;
    std::size_t train_batch_size = 32;
    double train_word_dropout = 0.075;
    // Stop once dev EM reaches this value; >100 disables the shortcut.
    double train_stop_at_dev_em = 200.0;
    double optim_lr = 0.001;
    double optim_beta1 = 0.9;
    double optim_beta2 = 0.999;
    double optim_epsilon = 1e-8;
    std::string data_train;
    std::string data_dev;
    std::string out_dir = "run";
    std::size_t synth_vocab_size = 100;
    std::size_t synth_doc_len = 20;
    std::size_t synth_corpus_size = 1000;
    std::uint64_t synth_seed = 0;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);
    std::string to_text() const;

    // Dotted-key access; unknown keys and unparseable values raise ConfigError.
    static const std::vector<std::string>& keys();
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    void validate() const;
    ModelConfig model_config(std::size_t vocab_size) const;
};

} // namespace coattn
