#include "coattn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "coattn/error.hpp"

namespace coattn {

namespace {

struct KeyEntry {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" +
                          value + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double d = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + value + "'");
}

std::string format_double(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

#define SIZE_KEY(key, field)                                                       \
    {key, [](const RunConfig& c) { return std::to_string(c.field); },              \
     [](RunConfig& c, const std::string& v) { c.field = parse_unsigned<std::size_t>(key, v); }}
#define U64_KEY(key, field)                                                        \
    {key, [](const RunConfig& c) { return std::to_string(c.field); },              \
     [](RunConfig& c, const std::string& v) { c.field = parse_unsigned<std::uint64_t>(key, v); }}
#define BOOL_KEY(key, field)                                                       \
    {key, [](const RunConfig& c) { return c.field ? "true" : "false"; },           \
     [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); }}
#define DOUBLE_KEY(key, field)                                                     \
    {key, [](const RunConfig& c) { return format_double(c.field); },               \
     [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); }}
#define STRING_KEY(key, field)                                                     \
    {key, [](const RunConfig& c) { return c.field; },                              \
     [](RunConfig& c, const std::string& v) { c.field = v; }}

const std::vector<KeyEntry>& key_table() {
    static const std::vector<KeyEntry> table = {
        SIZE_KEY("model.embed_dim", model_embed_dim),
        SIZE_KEY("model.hidden", model_hidden),
        BOOL_KEY("encoder.residual", encoder_residual),
        SIZE_KEY("decoder.t_max", decoder_t_max),
        SIZE_KEY("decoder.maxout_pool", decoder_maxout_pool),
        BOOL_KEY("decoder.moe_enabled", decoder_moe_enabled),
        SIZE_KEY("decoder.moe_experts", decoder_moe_experts),
        SIZE_KEY("decoder.moe_topk", decoder_moe_topk),
        BOOL_KEY("objective.rl_enabled", objective_rl_enabled),
        BOOL_KEY("objective.ce_enabled", objective_ce_enabled),
        U64_KEY("objective.seed", objective_seed),
        U64_KEY("train.seed", train_seed),
        SIZE_KEY("train.epochs", train_epochs),
        SIZE_KEY("train.batch_size", train_batch_size),
        DOUBLE_KEY("train.word_dropout", train_word_dropout),
        DOUBLE_KEY("train.stop_at_dev_em", train_stop_at_dev_em),
        DOUBLE_KEY("optim.lr", optim_lr),
        DOUBLE_KEY("optim.beta1", optim_beta1),
        DOUBLE_KEY("optim.beta2", optim_beta2),
        DOUBLE_KEY("optim.epsilon", optim_epsilon),
        STRING_KEY("data.train", data_train),
        STRING_KEY("data.dev", data_dev),
        STRING_KEY("out.dir", out_dir),
        SIZE_KEY("synth.vocab_size", synth_vocab_size),
        SIZE_KEY("synth.doc_len", synth_doc_len),
        SIZE_KEY("synth.corpus_size", synth_corpus_size),
        U64_KEY("synth.seed", synth_seed),
    };
    return table;
}

#undef SIZE_KEY
#undef U64_KEY
#undef BOOL_KEY
#undef DOUBLE_KEY
#undef STRING_KEY

const KeyEntry& find_key(const std::string& key) {
    for (const KeyEntry& e : key_table())
        if (e.name == key) return e;
    throw ConfigError("config: unknown key '" + key + "'");
}

} // namespace

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const KeyEntry& e : key_table()) out.push_back(e.name);
        return out;
    }();
    return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    find_key(key).set(*this, trim(value));
}

std::string RunConfig::get(const std::string& key) const { return find_key(key).get(*this); }

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not 'key = value': " + stripped);
        config.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return config;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

std::string RunConfig::to_text() const {
    std::ostringstream out;
    for (const KeyEntry& e : key_table()) out << e.name << " = " << e.get(*this) << "\n";
    return out.str();
}

void RunConfig::validate() const {
    if (model_embed_dim == 0 || model_hidden == 0)
        throw ConfigError("config: model dimensions must be positive");
    if (decoder_t_max < 1) throw ConfigError("config: decoder.t_max must be >= 1");
    if (decoder_maxout_pool < 1) throw ConfigError("config: decoder.maxout_pool must be >= 1");
    if (decoder_moe_experts < 2) throw ConfigError("config: decoder.moe_experts must be >= 2");
    if (decoder_moe_topk < 1 || decoder_moe_topk > decoder_moe_experts)
        throw ConfigError("config: decoder.moe_topk outside [1, experts]");
    if (!objective_rl_enabled && !objective_ce_enabled)
        throw ConfigError("config: at least one of objective.{rl,ce}_enabled must be on");
    if (train_batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
    if (train_word_dropout < 0.0 || train_word_dropout >= 1.0)
        throw ConfigError("config: train.word_dropout outside [0, 1)");
    if (optim_lr <= 0.0) throw ConfigError("config: optim.lr must be positive");
    if (optim_beta1 < 0.0 || optim_beta1 >= 1.0 || optim_beta2 < 0.0 || optim_beta2 >= 1.0)
        throw ConfigError("config: optim betas outside [0, 1)");
    if (optim_epsilon <= 0.0) throw ConfigError("config: optim.epsilon must be positive");
}

ModelConfig RunConfig::model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.embed_dim = model_embed_dim;
    m.hidden = model_hidden;
    m.vocab_size = vocab_size;
    m.residual_coattention = encoder_residual;
    m.t_max = decoder_t_max;
    m.maxout_pool = decoder_maxout_pool;
    m.moe_enabled = decoder_moe_enabled;
    m.moe_experts = decoder_moe_experts;
    m.moe_topk = decoder_moe_topk;
    return m;
}

} // namespace coattn
