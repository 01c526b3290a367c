#include "coattn/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "coattn/error.hpp"
#include "coattn/serialize.hpp"

namespace coattn {

namespace {

constexpr char kCheckpointMagic[] = "COATTN1\n";

} // namespace

EncoderConfig ModelConfig::encoder() const {
    EncoderConfig c;
    c.embed_dim = embed_dim;
    c.hidden = hidden;
    c.residual = residual_coattention;
    return c;
}

DecoderConfig ModelConfig::decoder() const {
    DecoderConfig c;
    c.hidden = hidden;
    c.u_width = 2 * hidden;
    c.t_max = t_max;
    c.maxout_pool = maxout_pool;
    c.moe_enabled = moe_enabled;
    c.moe_experts = moe_experts;
    c.moe_topk = moe_topk;
    return c;
}

QaModel::QaModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    if (config.vocab_size < Vocabulary::kReserved)
        throw ConfigError("QaModel: vocab_size must cover the reserved ids");
    Rng rng(seed);

    embedding_ = Tensor::zeros(config.embed_dim, config.vocab_size);
    double bound = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
    for (std::size_t i = 0; i < config.embed_dim; ++i)
        for (std::size_t v = Vocabulary::kReserved; v < config.vocab_size; ++v)
            embedding_.at(i, v) = rng.uniform(-bound, bound);
    embedding_.set_requires_grad(true);
    embedding_.set_name("embed.table");

    encoder_ = EncoderParams::init(config.encoder(), rng);
    decoder_ = DecoderParams::init(config.decoder(), rng);

    log_var_ce_ = Tensor::zeros(1, 1);
    log_var_ce_.set_requires_grad(true);
    log_var_ce_.set_name("obj.log_var_ce");
    log_var_rl_ = Tensor::zeros(1, 1);
    log_var_rl_.set_requires_grad(true);
    log_var_rl_.set_name("obj.log_var_rl");

    parameters_.push_back(embedding_);
    for (const Tensor& t : encoder_.parameters()) parameters_.push_back(t);
    for (const Tensor& t : decoder_.parameters(config.decoder())) parameters_.push_back(t);
    parameters_.push_back(log_var_ce_);
    parameters_.push_back(log_var_rl_);
}

void QaModel::zero_grad() {
    for (Tensor& t : parameters_) t.zero_grad();
}

Tensor QaModel::embed(const std::vector<int>& ids) const {
    return embedding_lookup(embedding_, ids, Vocabulary::kReserved);
}

DeepEncoding QaModel::encode(const ExampleInput& input) const {
    return encode_deep(embed(input.doc_ids), embed(input.q_ids), input.doc_mask, input.q_mask,
                       encoder_, config_.encoder());
}

DecodeTrace QaModel::decode_encoding(const DeepEncoding& encoding,
                                     const std::vector<int>& doc_mask,
                                     const RolloutPolicy& policy) const {
    return decode(encoding.u, doc_mask, decoder_, config_.decoder(), policy);
}

ModelOutput QaModel::run(const ExampleInput& input, const RolloutPolicy& policy) const {
    ModelOutput out;
    out.encoding = encode(input);
    out.trace = decode_encoding(out.encoding, input.doc_mask, policy);
    return out;
}

// ---- serialization ------------------------------------------------------------

void write_tensor_records(std::ostream& out, const std::vector<Tensor>& tensors) {
    write_u64(out, tensors.size());
    for (const Tensor& t : tensors) {
        write_u64(out, t.name().size());
        out.write(t.name().data(), static_cast<std::streamsize>(t.name().size()));
        write_u64(out, t.rows());
        write_u64(out, t.cols());
        for (double v : t.values()) write_f64_le(out, v);
    }
}

std::vector<std::pair<std::string, std::vector<double>>> read_tensor_records(
    std::istream& in, std::vector<std::pair<std::size_t, std::size_t>>* shapes) {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    std::uint64_t count = read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t name_len = read_u64(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        std::uint64_t rows = read_u64(in), cols = read_u64(in);
        std::vector<double> payload(rows * cols);
        for (double& v : payload) v = read_f64_le(in);
        if (!in) throw IoError("checkpoint: truncated payload for record '" + name + "'");
        if (shapes) shapes->emplace_back(rows, cols);
        out.emplace_back(std::move(name), std::move(payload));
    }
    return out;
}

void QaModel::save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    write_tensor_records(out, parameters_);
    if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

void QaModel::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError("load_checkpoint: " + path + " is not a checkpoint (bad version tag)");

    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    auto records = read_tensor_records(in, &shapes);

    std::unordered_map<std::string, Tensor*> by_name;
    for (Tensor& t : parameters_) by_name[t.name()] = &t;
    if (records.size() != parameters_.size())
        throw IoError("load_checkpoint: " + path + " holds " + std::to_string(records.size()) +
                      " records, model has " + std::to_string(parameters_.size()) +
                      " parameters");
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& [name, payload] = records[i];
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw IoError("load_checkpoint: unknown parameter '" + name + "' in " + path);
        Tensor& t = *it->second;
        if (t.rows() != shapes[i].first || t.cols() != shapes[i].second)
            throw IoError("load_checkpoint: shape mismatch for '" + name + "': checkpoint " +
                          std::to_string(shapes[i].first) + "x" + std::to_string(shapes[i].second) +
                          ", model " + t.shape_str());
        t.values() = std::move(payload);
    }
}

} // namespace coattn
