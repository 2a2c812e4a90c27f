#pragma once

// Run configuration: one sectioned key-value file mirroring each stage's
// config type, plus the single global seed every stage derives its own seed
// from. Unknown sections or keys are rejected by name. render_run_config
// materializes every default so a run log alone can reproduce a run.

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "nts/augment.hpp"
#include "nts/common.hpp"
#include "nts/decoder.hpp"
#include "nts/seq2seq.hpp"
#include "nts/trainer.hpp"

namespace nts {

struct TextpipeConfig {
    std::size_t min_len = 10;
    std::size_t max_len = 40;
    std::size_t vocab_size = 10000;
};

struct AugmentConfig {
    std::size_t sample_n = 0;
    bool sample_n_set = false;  // the sample size has no hidden default
    std::size_t max_len = 50;   // back-translation decode cap
};

struct RunConfig {
    std::uint64_t seed = 0;
    TextpipeConfig textpipe;
    ModelConfig model;
    TrainConfig train;
    DecodeConfig decode;
    AugmentConfig augment;
    std::string eval_system = "nts";
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected an unsigned integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& section,
                               const std::string& key, const std::string& value) {
    const std::string full = section.empty() ? key : section + "." + key;
    auto u64 = [&] { return detail::parse_u64(full, value); };
    auto num = [&] { return detail::parse_double(full, value); };
    auto boolean = [&] { return detail::parse_bool(full, value); };

    if (section.empty()) {
        if (key == "seed") {
            cfg.seed = u64();
            return;
        }
        throw ConfigError("unknown top-level config key: " + key);
    }
    if (section == "textpipe") {
        if (key == "min_len") cfg.textpipe.min_len = static_cast<std::size_t>(u64());
        else if (key == "max_len") cfg.textpipe.max_len = static_cast<std::size_t>(u64());
        else if (key == "vocab_size") cfg.textpipe.vocab_size = static_cast<std::size_t>(u64());
        else throw ConfigError("unknown config key: " + full);
        return;
    }
    if (section == "model") {
        if (key == "embed_dim") cfg.model.embed_dim = static_cast<std::size_t>(u64());
        else if (key == "hidden_dim") cfg.model.hidden_dim = static_cast<std::size_t>(u64());
        else if (key == "attention_dim") cfg.model.attention_dim = static_cast<std::size_t>(u64());
        else if (key == "dropout_rate") cfg.model.dropout_rate = num();
        else throw ConfigError("unknown config key: " + full);
        return;
    }
    if (section == "train") {
        if (key == "epochs") cfg.train.epochs = static_cast<std::size_t>(u64());
        else if (key == "learning_rate") cfg.train.learning_rate = num();
        else if (key == "lr_decay") cfg.train.lr_decay = num();
        else if (key == "decay_start_epoch") cfg.train.decay_start_epoch = static_cast<std::size_t>(u64());
        else if (key == "clip_norm") cfg.train.clip_norm = num();
        else if (key == "dropout") cfg.train.dropout = num();
        else if (key == "shuffle") cfg.train.shuffle = boolean();
        else throw ConfigError("unknown config key: " + full);
        return;
    }
    if (section == "decode") {
        if (key == "beam_size") cfg.decode.beam_size = static_cast<std::size_t>(u64());
        else if (key == "max_len") cfg.decode.max_len = static_cast<std::size_t>(u64());
        else if (key == "length_norm") cfg.decode.length_norm = boolean();
        else throw ConfigError("unknown config key: " + full);
        return;
    }
    if (section == "augment") {
        if (key == "sample_n") {
            cfg.augment.sample_n = static_cast<std::size_t>(u64());
            cfg.augment.sample_n_set = true;
        } else if (key == "max_len") {
            cfg.augment.max_len = static_cast<std::size_t>(u64());
        } else {
            throw ConfigError("unknown config key: " + full);
        }
        return;
    }
    if (section == "eval") {
        if (key == "system") cfg.eval_system = value;
        else throw ConfigError("unknown config key: " + full);
        return;
    }
    throw ConfigError("unknown config section: " + section);
}

inline RunConfig parse_run_config(std::string_view text) {
    RunConfig cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = detail::trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        apply_config_entry(cfg, section, key, value);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

// Full materialization, defaults included.
inline std::string render_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "seed = " << cfg.seed << '\n';
    os << "\n[textpipe]\n";
    os << "min_len = " << cfg.textpipe.min_len << '\n';
    os << "max_len = " << cfg.textpipe.max_len << '\n';
    os << "vocab_size = " << cfg.textpipe.vocab_size << '\n';
    os << "\n[model]\n";
    os << "embed_dim = " << cfg.model.embed_dim << '\n';
    os << "hidden_dim = " << cfg.model.hidden_dim << '\n';
    os << "attention_dim = " << cfg.model.attention_dim << '\n';
    os << "dropout_rate = " << cfg.model.dropout_rate << '\n';
    os << "\n[train]\n";
    os << "epochs = " << cfg.train.epochs << '\n';
    os << "learning_rate = " << cfg.train.learning_rate << '\n';
    os << "lr_decay = " << cfg.train.lr_decay << '\n';
    os << "decay_start_epoch = " << cfg.train.decay_start_epoch << '\n';
    os << "clip_norm = " << cfg.train.clip_norm << '\n';
    os << "dropout = " << cfg.train.dropout << '\n';
    os << "shuffle = " << (cfg.train.shuffle ? "true" : "false") << '\n';
    os << "\n[decode]\n";
    os << "beam_size = " << cfg.decode.beam_size << '\n';
    os << "max_len = " << cfg.decode.max_len << '\n';
    os << "length_norm = " << (cfg.decode.length_norm ? "true" : "false") << '\n';
    os << "\n[augment]\n";
    if (cfg.augment.sample_n_set) os << "sample_n = " << cfg.augment.sample_n << '\n';
    os << "max_len = " << cfg.augment.max_len << '\n';
    os << "\n[eval]\n";
    os << "system = " << cfg.eval_system << '\n';
    return os.str();
}

}  // namespace nts
