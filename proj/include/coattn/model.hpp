#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coattn/data.hpp"
#include "coattn/decoder.hpp"
#include "coattn/encoder.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

struct ModelConfig {
    std::size_t embed_dim = 16;
    std::size_t hidden = 16;
    std::size_t vocab_size = 2; // pad + unk at minimum
    bool residual_coattention = true;
    std::size_t t_max = 4;
    std::size_t maxout_pool = 16;
    bool moe_enabled = true;
    std::size_t moe_experts = 16;
    std::size_t moe_topk = 2;

    EncoderConfig encoder() const;
    DecoderConfig decoder() const;
};

// Per-example input view: token ids plus 0/1 masks.
struct ExampleInput {
    std::vector<int> doc_ids;
    std::vector<int> doc_mask;
    std::vector<int> q_ids;
    std::vector<int> q_mask;
};

struct ModelOutput {
    DeepEncoding encoding;
    DecodeTrace trace;
};

// The assembled question-answering model: trainable embeddings (pad/unk rows
// frozen at zero), the deep coattention encoder, the dynamic decoder, and
// the two learned log-variance scalars of the uncertainty-weighted loss.
class QaModel {
public:
    QaModel(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const std::vector<Tensor>& parameters() const { return parameters_; }
    void zero_grad();

    Tensor embed(const std::vector<int>& ids) const;
    DeepEncoding encode(const ExampleInput& input) const;
    DecodeTrace decode_encoding(const DeepEncoding& encoding, const std::vector<int>& doc_mask,
                                const RolloutPolicy& policy) const;
    ModelOutput run(const ExampleInput& input, const RolloutPolicy& policy) const;

    Tensor log_var_ce() const { return log_var_ce_; }
    Tensor log_var_rl() const { return log_var_rl_; }

    void save_checkpoint(const std::string& path) const;
    // Validates every record's shape against this model and fails loudly on
    // any mismatch, missing record, or extra record.
    void load_checkpoint(const std::string& path);

private:
    ModelConfig config_;
    Tensor embedding_; // e x V, columns 0/1 frozen at zero
    EncoderParams encoder_;
    DecoderParams decoder_;
    Tensor log_var_ce_;
    Tensor log_var_rl_;
    std::vector<Tensor> parameters_;
};

// Named-record serialization shared by checkpoints and optimizer state:
// a version tag, then ordered (name, shape, little-endian float64 payload)
// records.
void write_tensor_records(std::ostream& out, const std::vector<Tensor>& tensors);
std::vector<std::pair<std::string, std::vector<double>>> read_tensor_records(
    std::istream& in, std::vector<std::pair<std::size_t, std::size_t>>* shapes = nullptr);

} // namespace coattn
