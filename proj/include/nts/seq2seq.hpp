#pragma once

// Attention-based encoder-decoder: bidirectional GRU encoder, additive
// attention scored against the pre-update decoder state, GRU decoder fed
// [embedding; context], and an output softmax over a single linear map of
// [state; context; embedding].
//
// Processing is one sentence at a time; there is no batching.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nts/common.hpp"
#include "nts/tensor.hpp"
#include "nts/textpipe.hpp"

namespace nts {

struct ModelConfig {
    std::size_t src_vocab_size = 0;
    std::size_t tgt_vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 64;  // per direction
    std::size_t attention_dim = 64;
    double dropout_rate = 0.0;

    void validate() const {
        if (src_vocab_size < 1 || tgt_vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 ||
            attention_dim < 1)
            throw InvalidArgument("model config: all dimensions must be at least 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw InvalidArgument("model config: dropout_rate must be in [0,1)");
    }
};

struct GruWeights {
    Tensor w_z, w_r, w_h;  // input-to-hidden
    Tensor u_z, u_r, u_h;  // hidden-to-hidden
    Tensor b_z, b_r, b_h;

    static GruWeights make(std::size_t input_dim, std::size_t hidden_dim) {
        GruWeights w;
        for (Tensor* t : {&w.w_z, &w.w_r, &w.w_h})
            *t = Tensor({hidden_dim, input_dim}, /*requires_grad=*/true);
        for (Tensor* t : {&w.u_z, &w.u_r, &w.u_h})
            *t = Tensor({hidden_dim, hidden_dim}, /*requires_grad=*/true);
        for (Tensor* t : {&w.b_z, &w.b_r, &w.b_h})
            *t = Tensor({hidden_dim}, /*requires_grad=*/true);
        return w;
    }
};

struct ModelParams {
    ModelConfig config;
    Tensor src_embed;  // [src_vocab, embed]
    Tensor tgt_embed;  // [tgt_vocab, embed]
    GruWeights encoder_fwd, encoder_bwd, decoder;
    Tensor attn_w;    // [attn, hidden]
    Tensor attn_u;    // [attn, 2*hidden]
    Tensor attn_v;    // [attn]
    Tensor bridge;    // [hidden, hidden]
    Tensor out_proj;  // [tgt_vocab, hidden + 2*hidden + embed]

    static ModelParams make(const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        p.config = cfg;
        p.src_embed = Tensor({cfg.src_vocab_size, cfg.embed_dim}, true);
        p.tgt_embed = Tensor({cfg.tgt_vocab_size, cfg.embed_dim}, true);
        p.encoder_fwd = GruWeights::make(cfg.embed_dim, cfg.hidden_dim);
        p.encoder_bwd = GruWeights::make(cfg.embed_dim, cfg.hidden_dim);
        p.decoder = GruWeights::make(cfg.embed_dim + 2 * cfg.hidden_dim, cfg.hidden_dim);
        p.attn_w = Tensor({cfg.attention_dim, cfg.hidden_dim}, true);
        p.attn_u = Tensor({cfg.attention_dim, 2 * cfg.hidden_dim}, true);
        p.attn_v = Tensor({cfg.attention_dim}, true);
        p.bridge = Tensor({cfg.hidden_dim, cfg.hidden_dim}, true);
        p.out_proj =
            Tensor({cfg.tgt_vocab_size, cfg.hidden_dim + 2 * cfg.hidden_dim + cfg.embed_dim},
                   true);
        return p;
    }

    // Uniform init on [-0.08, 0.08], biases zero. Fill order is fixed so a
    // seed pins every weight.
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
        ModelParams p = make(cfg);
        std::mt19937_64 rng(splitmix64(seed));
        for (auto& [name, t] : p.named()) {
            if (name.find(".b_") != std::string::npos) continue;  // biases stay zero
            for (double& v : t->data()) v = (2.0 * uniform01(rng) - 1.0) * 0.08;
        }
        return p;
    }

    // Stable enumeration used by init, SGD, clipping and checkpoints.
    std::vector<std::pair<std::string, Tensor*>> named() {
        std::vector<std::pair<std::string, Tensor*>> out;
        out.emplace_back("src_embed", &src_embed);
        out.emplace_back("tgt_embed", &tgt_embed);
        auto add_gru = [&out](const std::string& prefix, GruWeights& w) {
            out.emplace_back(prefix + ".w_z", &w.w_z);
            out.emplace_back(prefix + ".w_r", &w.w_r);
            out.emplace_back(prefix + ".w_h", &w.w_h);
            out.emplace_back(prefix + ".u_z", &w.u_z);
            out.emplace_back(prefix + ".u_r", &w.u_r);
            out.emplace_back(prefix + ".u_h", &w.u_h);
            out.emplace_back(prefix + ".b_z", &w.b_z);
            out.emplace_back(prefix + ".b_r", &w.b_r);
            out.emplace_back(prefix + ".b_h", &w.b_h);
        };
        add_gru("encoder_fwd", encoder_fwd);
        add_gru("encoder_bwd", encoder_bwd);
        add_gru("decoder", decoder);
        out.emplace_back("attn_w", &attn_w);
        out.emplace_back("attn_u", &attn_u);
        out.emplace_back("attn_v", &attn_v);
        out.emplace_back("bridge", &bridge);
        out.emplace_back("out_proj", &out_proj);
        return out;
    }

    void zero_grads() {
        for (auto& [name, t] : named()) t->zero_grad();
    }
};

// Encoder annotations: h[j] concatenates the forward and backward states at
// source position j, so each is a vector of size 2*hidden.
struct Annotations {
    std::vector<Tensor> h;

    std::size_t length() const { return h.size(); }
};

struct AttentionResult {
    Tensor context;  // [2*hidden]
    Tensor weights;  // [source length], sums to 1
};

struct DecodeStepResult {
    Tensor probs;  // [tgt_vocab], sums to 1
    Tensor state;  // [hidden]
    Tensor attn;   // [source length]
};

// ----------------------------- cells and passes -----------------------------

// z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
// hbar = tanh(Wh x + Uh (r.h) + bh), out = (1-z).h + z.hbar
inline Tensor gru_cell(Graph& g, const Tensor& x, const Tensor& h_prev, const GruWeights& w) {
    Tensor z = sigmoid(g, add(g, add(g, matmul(g, w.w_z, x), matmul(g, w.u_z, h_prev)), w.b_z));
    Tensor r = sigmoid(g, add(g, add(g, matmul(g, w.w_r, x), matmul(g, w.u_r, h_prev)), w.b_r));
    Tensor hbar = tanh(
        g, add(g, add(g, matmul(g, w.w_h, x), matmul(g, w.u_h, mul(g, r, h_prev))), w.b_h));
    Tensor ones = Tensor::full(h_prev.shape(), 1.0);
    return add(g, mul(g, sub(g, ones, z), h_prev), mul(g, z, hbar));
}

// Bidirectional scan over dropout-applied embeddings; both directions start
// from the zero state.
inline Annotations encode(Graph& g, std::span<const int> src_ids, const ModelParams& params,
                          const ModelConfig& cfg, bool training) {
    if (src_ids.empty()) throw InvalidArgument("encode: empty source sequence");
    const std::size_t len = src_ids.size();
    Tensor emb = gather_rows(g, params.src_embed, src_ids);
    emb = dropout(g, emb, cfg.dropout_rate, training, g.draw_seed());
    std::vector<Tensor> xs(len);
    for (std::size_t j = 0; j < len; ++j)
        xs[j] = reshape(g, gather_rows(g, emb, {static_cast<int>(j)}), {cfg.embed_dim});

    std::vector<Tensor> fwd(len), bwd(len);
    Tensor h = Tensor::zeros({cfg.hidden_dim});
    for (std::size_t j = 0; j < len; ++j) {
        h = gru_cell(g, xs[j], h, params.encoder_fwd);
        fwd[j] = h;
    }
    h = Tensor::zeros({cfg.hidden_dim});
    for (std::size_t j = len; j-- > 0;) {
        h = gru_cell(g, xs[j], h, params.encoder_bwd);
        bwd[j] = h;
    }

    Annotations ann;
    ann.h.resize(len);
    for (std::size_t j = 0; j < len; ++j) ann.h[j] = concat(g, fwd[j], bwd[j]);
    return ann;
}

// s0 = tanh(bridge * bwd_1), where bwd_1 is the backward encoder state at the
// first source position.
inline Tensor initial_state(Graph& g, const Annotations& ann, const ModelParams& params) {
    if (ann.h.empty()) throw InvalidArgument("initial_state: empty annotations");
    const std::size_t hidden = params.config.hidden_dim;
    Tensor bwd_first = slice(g, ann.h[0], hidden, hidden);
    return tanh(g, matmul(g, params.bridge, bwd_first));
}

// e_tj = v . tanh(W s_prev + U h_j); a_t = softmax(e_t); c_t = sum_j a_tj h_j.
inline AttentionResult attention(Graph& g, const Tensor& s_prev, const Annotations& ann,
                                 const ModelParams& params) {
    if (ann.h.empty()) throw InvalidArgument("attention: empty annotations");
    Tensor ws = matmul(g, params.attn_w, s_prev);
    std::vector<Tensor> scores(ann.h.size());
    for (std::size_t j = 0; j < ann.h.size(); ++j)
        scores[j] = dot(g, params.attn_v, tanh(g, add(g, ws, matmul(g, params.attn_u, ann.h[j]))));
    Tensor e = concat(g, std::span<const Tensor>(scores));
    Tensor a = softmax(g, e);
    Tensor context = smul(g, slice(g, a, 0, 1), ann.h[0]);
    for (std::size_t j = 1; j < ann.h.size(); ++j)
        context = add(g, context, smul(g, slice(g, a, j, 1), ann.h[j]));
    return {context, a};
}

inline DecodeStepResult decode_step(Graph& g, int y_prev, const Tensor& s_prev,
                                    const Annotations& ann, const ModelParams& params,
                                    const ModelConfig& cfg, bool training) {
    const int prev[] = {y_prev};
    Tensor e_prev = reshape(g, gather_rows(g, params.tgt_embed, prev), {cfg.embed_dim});
    e_prev = dropout(g, e_prev, cfg.dropout_rate, training, g.draw_seed());
    auto [context, a] = attention(g, s_prev, ann, params);
    Tensor s_t = gru_cell(g, concat(g, e_prev, context), s_prev, params.decoder);
    Tensor probs = softmax(g, matmul(g, params.out_proj, concat(g, s_t, context, e_prev)));
    return {probs, s_t, a};
}

// Teacher-forced mean cross-entropy over the target, which must be wrapped
// BOS ... EOS. The mean runs over every predicted token including EOS.
inline Tensor forward_loss(Graph& g, const SentencePair& pair, const ModelParams& params,
                           const ModelConfig& cfg, bool training) {
    if (pair.src_ids.empty() || pair.tgt_ids.empty())
        throw InvalidArgument("forward_loss: empty sentence side");
    if (pair.tgt_ids.size() < 2 || pair.tgt_ids.front() != Vocabulary::kBos ||
        pair.tgt_ids.back() != Vocabulary::kEos)
        throw InvalidArgument("forward_loss: target must be wrapped BOS ... EOS");
    Annotations ann = encode(g, pair.src_ids, params, cfg, training);
    Tensor s = initial_state(g, ann, params);
    Tensor total;
    const std::size_t steps = pair.tgt_ids.size() - 1;
    for (std::size_t t = 0; t < steps; ++t) {
        auto step = decode_step(g, pair.tgt_ids[t], s, ann, params, cfg, training);
        s = step.state;
        Tensor ce = cross_entropy(g, step.probs, pair.tgt_ids[t + 1]);
        total = t == 0 ? ce : add(g, total, ce);
    }
    return scale(g, total, 1.0 / static_cast<double>(steps));
}

}  // namespace nts
