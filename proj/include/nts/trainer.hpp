#pragma once

// SGD training loop (per-sentence updates, teacher forcing, global-norm
// gradient clipping, epoch-wise learning-rate halving) and the versioned
// binary checkpoint format.
//
// Checkpoint layout, all integers little-endian:
//   magic "NTSCKPT1" | u32 version | u32 n_meta | n_meta x (u32 klen, key,
//   u32 vlen, value) | u32 n_tensors | per tensor (u32 nlen, name, u32 rank,
//   rank x u64 dims, u64 byte offset into payload) | u64 payload size |
//   packed f32 payload.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nts/common.hpp"
#include "nts/seq2seq.hpp"
#include "nts/tensor.hpp"
#include "nts/textpipe.hpp"

namespace nts {

struct TrainConfig {
    std::size_t epochs = 10;
    double learning_rate = 1.0;
    double lr_decay = 0.5;
    std::size_t decay_start_epoch = 8;  // halving begins after this epoch
    double clip_norm = 5.0;
    double dropout = 0.3;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const {
        if (epochs < 1) throw InvalidArgument("train config: epochs must be at least 1");
        if (!(learning_rate > 0.0) && learning_rate != 0.0)
            throw InvalidArgument("train config: learning_rate must be nonnegative");
        if (!(lr_decay > 0.0 && lr_decay <= 1.0))
            throw InvalidArgument("train config: lr_decay must be in (0,1]");
        if (!(clip_norm > 0.0)) throw InvalidArgument("train config: clip_norm must be positive");
        if (!(dropout >= 0.0 && dropout < 1.0))
            throw InvalidArgument("train config: dropout must be in [0,1)");
    }
};

// ----------------------------- checkpoints -----------------------------

constexpr char kCheckpointMagic[8] = {'N', 'T', 'S', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensorF32 {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

struct Checkpoint {
    std::uint32_t format_version = kCheckpointVersion;
    ModelConfig model_config;
    std::map<std::string, std::string> metadata;
    std::vector<NamedTensorF32> tensors;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw CorruptCheckpoint("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

inline std::string model_config_key(const std::string& field) { return "model." + field; }

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out;
    out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u32(out, ckpt.format_version);

    std::map<std::string, std::string> meta = ckpt.metadata;
    meta[detail::model_config_key("src_vocab_size")] = std::to_string(ckpt.model_config.src_vocab_size);
    meta[detail::model_config_key("tgt_vocab_size")] = std::to_string(ckpt.model_config.tgt_vocab_size);
    meta[detail::model_config_key("embed_dim")] = std::to_string(ckpt.model_config.embed_dim);
    meta[detail::model_config_key("hidden_dim")] = std::to_string(ckpt.model_config.hidden_dim);
    meta[detail::model_config_key("attention_dim")] = std::to_string(ckpt.model_config.attention_dim);

    detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        detail::put_u32(out, static_cast<std::uint32_t>(k.size()));
        out += k;
        detail::put_u32(out, static_cast<std::uint32_t>(v.size()));
        out += v;
    }

    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    std::uint64_t offset = 0;
    for (const auto& t : ckpt.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) detail::put_u64(out, d);
        detail::put_u64(out, offset);
        offset += t.values.size() * 4;
    }
    detail::put_u64(out, offset);
    for (const auto& t : ckpt.tensors)
        for (float f : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    detail::ByteReader r{bytes};
    const std::string magic = r.str(sizeof(kCheckpointMagic));
    if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        throw CorruptCheckpoint("checkpoint magic mismatch");
    Checkpoint ckpt;
    ckpt.format_version = r.u32();
    if (ckpt.format_version != kCheckpointVersion)
        throw UnsupportedVersion("checkpoint version " + std::to_string(ckpt.format_version) +
                                 " not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");

    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        const std::string k = r.str(r.u32());
        const std::string v = r.str(r.u32());
        ckpt.metadata[k] = v;
    }
    auto take_dim = [&ckpt](const std::string& field) -> std::size_t {
        auto it = ckpt.metadata.find(detail::model_config_key(field));
        if (it == ckpt.metadata.end())
            throw CorruptCheckpoint("checkpoint missing model." + field);
        const std::size_t v = static_cast<std::size_t>(std::stoull(it->second));
        ckpt.metadata.erase(it);
        return v;
    };
    ckpt.model_config.src_vocab_size = take_dim("src_vocab_size");
    ckpt.model_config.tgt_vocab_size = take_dim("tgt_vocab_size");
    ckpt.model_config.embed_dim = take_dim("embed_dim");
    ckpt.model_config.hidden_dim = take_dim("hidden_dim");
    ckpt.model_config.attention_dim = take_dim("attention_dim");

    const std::uint32_t n_tensors = r.u32();
    std::vector<std::uint64_t> offsets;
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        NamedTensorF32 t;
        t.name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t dim = r.u64();
            if (dim == 0) throw CorruptCheckpoint("checkpoint tensor with zero dimension");
            t.shape.push_back(static_cast<std::size_t>(dim));
            numel *= static_cast<std::size_t>(dim);
        }
        offsets.push_back(r.u64());
        t.values.resize(numel);
        ckpt.tensors.push_back(std::move(t));
    }
    const std::uint64_t payload_size = r.u64();
    std::uint64_t expect = 0;
    for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
        if (offsets[i] != expect) throw CorruptCheckpoint("checkpoint tensor offsets inconsistent");
        expect += ckpt.tensors[i].values.size() * 4;
    }
    if (payload_size != expect) throw CorruptCheckpoint("checkpoint payload size mismatch");
    r.need(payload_size);
    for (auto& t : ckpt.tensors)
        for (float& f : t.values) f = std::bit_cast<float>(r.u32());
    if (r.pos != bytes.size()) throw CorruptCheckpoint("checkpoint has trailing bytes");
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

inline Checkpoint make_checkpoint(ModelParams& params,
                                  std::map<std::string, std::string> metadata) {
    Checkpoint ckpt;
    ckpt.model_config = params.config;
    ckpt.metadata = std::move(metadata);
    for (auto& [name, t] : params.named()) {
        NamedTensorF32 nt;
        nt.name = name;
        nt.shape = t->shape();
        nt.values.reserve(t->size());
        for (double v : t->data()) nt.values.push_back(static_cast<float>(v));
        ckpt.tensors.push_back(std::move(nt));
    }
    return ckpt;
}

inline ModelParams params_from_checkpoint(const Checkpoint& ckpt) {
    ModelParams p = ModelParams::make(ckpt.model_config);
    std::map<std::string, const NamedTensorF32*> by_name;
    for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
    for (auto& [name, t] : p.named()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw CorruptCheckpoint("checkpoint missing tensor " + name);
        const NamedTensorF32& src = *it->second;
        if (src.shape != t->shape())
            throw CorruptCheckpoint("checkpoint tensor " + name + " has unexpected shape");
        auto dst = t->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(src.values[i]);
    }
    return p;
}

// ----------------------------- training -----------------------------

// g <- g * min(1, clip_norm / ||g||2) over the global norm of all parameter
// gradients. Returns the applied scale.
inline double clip_gradients(ModelParams& params, double clip_norm) {
    double sq = 0.0;
    for (auto& [name, t] : params.named()) {
        if (!t->has_grad()) continue;
        for (double v : t->grad_view()) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm <= clip_norm) return 1.0;
    const double s = clip_norm / norm;
    for (auto& [name, t] : params.named()) {
        if (!t->has_grad()) continue;
        for (double& v : t->grad()) v *= s;
    }
    return s;
}

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss, double lr)>;

// Vocabulary fingerprint recorded in checkpoints and verified at decode time.
inline std::map<std::string, std::string> vocab_fingerprint(const Vocabulary& src,
                                                            const Vocabulary& tgt) {
    return {
        {"src_vocab_size", std::to_string(src.size())},
        {"tgt_vocab_size", std::to_string(tgt.size())},
        {"src_vocab_hash", to_hex(src.content_hash())},
        {"tgt_vocab_hash", to_hex(tgt.content_hash())},
    };
}

inline void check_vocab_fingerprint(const Checkpoint& ckpt, const Vocabulary& src,
                                    const Vocabulary& tgt) {
    const auto expect = vocab_fingerprint(src, tgt);
    for (const auto& [k, v] : expect) {
        auto it = ckpt.metadata.find(k);
        if (it == ckpt.metadata.end())
            throw VocabMismatch("checkpoint lacks vocabulary fingerprint key " + k);
        if (it->second != v)
            throw VocabMismatch("checkpoint " + k + " is " + it->second +
                                " but supplied vocabulary has " + v);
    }
}

// Per-sentence SGD with teacher forcing. Returns the final parameters as a
// checkpoint carrying epoch/loss/seed metadata plus any extra entries given
// (typically the vocabulary fingerprint).
inline Checkpoint train(const std::vector<SentencePair>& pairs, const TrainConfig& tcfg,
                        const ModelConfig& mcfg, const EpochCallback& on_epoch = nullptr,
                        std::map<std::string, std::string> extra_meta = {}) {
    tcfg.validate();
    mcfg.validate();
    if (pairs.empty()) throw InvalidArgument("train: no training pairs");

    ModelConfig run_cfg = mcfg;
    run_cfg.dropout_rate = tcfg.dropout;

    ModelParams params = ModelParams::init(mcfg, derive_seed(tcfg.seed, "init"));
    std::mt19937_64 shuffle_rng(derive_seed(tcfg.seed, "shuffle"));

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double mean_loss = 0.0;
    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const double lr =
            tcfg.learning_rate *
            std::pow(tcfg.lr_decay,
                     static_cast<double>(epoch > tcfg.decay_start_epoch
                                             ? epoch - tcfg.decay_start_epoch
                                             : 0));
        if (tcfg.shuffle) seeded_shuffle(order, shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const SentencePair& pair = pairs[order[i]];
            Graph g(derive_seed(tcfg.seed, "dropout", epoch, i));
            Tensor loss = forward_loss(g, pair, params, run_cfg, /*training=*/true);
            const double lv = loss.at(0);
            if (!std::isfinite(lv))
                throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                       ", pair " + std::to_string(order[i]));
            loss_sum += lv;
            g.backward(loss);
            clip_gradients(params, tcfg.clip_norm);
            for (auto& [name, t] : params.named()) {
                if (!t->has_grad()) continue;
                auto data = t->data();
                auto grad = t->grad_view();
                for (std::size_t k = 0; k < data.size(); ++k) data[k] -= lr * grad[k];
            }
            params.zero_grads();
        }
        mean_loss = loss_sum / static_cast<double>(order.size());
        if (on_epoch) on_epoch(epoch, mean_loss, lr);
    }

    std::map<std::string, std::string> meta = std::move(extra_meta);
    meta["epoch"] = std::to_string(tcfg.epochs);
    {
        std::ostringstream os;
        os.precision(17);
        os << mean_loss;
        meta["final_loss"] = os.str();
    }
    meta["seed"] = std::to_string(tcfg.seed);
    return make_checkpoint(params, std::move(meta));
}

}  // namespace nts
