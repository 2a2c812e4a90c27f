#pragma once

// Inference: greedy decoding, beam search with a completed-hypothesis pool,
// attention-based UNK replacement, and line-oriented corpus decoding.
//
// Tie-breaking is pinned everywhere: equal scores prefer the
// lexicographically smaller id sequence, equal attention prefers the lower
// source index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "nts/common.hpp"
#include "nts/seq2seq.hpp"
#include "nts/tensor.hpp"
#include "nts/textpipe.hpp"
#include "nts/trainer.hpp"

namespace nts {

struct DecodeConfig {
    std::size_t beam_size = 5;
    std::size_t max_len = 50;
    bool length_norm = true;

    void validate() const {
        if (beam_size < 1) throw InvalidArgument("decode config: beam_size must be at least 1");
        if (max_len < 1) throw InvalidArgument("decode config: max_len must be at least 1");
    }
};

// Partial or completed decode. ids start after BOS and include EOS when it
// was emitted; attn_trace holds one weight vector per emitted token.
struct Hypothesis {
    std::vector<int> ids;
    double log_prob = 0.0;
    Tensor state;
    std::vector<std::vector<double>> attn_trace;
    bool finished = false;
};

namespace detail {

inline double ranking_score(const Hypothesis& h, bool length_norm) {
    if (!length_norm || h.ids.empty()) return h.log_prob;
    return h.log_prob / static_cast<double>(h.ids.size());
}

// Score-descending order; ties prefer the lexicographically smaller sequence.
inline bool better(double score_a, const std::vector<int>& ids_a, double score_b,
                   const std::vector<int>& ids_b) {
    if (score_a != score_b) return score_a > score_b;
    return ids_a < ids_b;
}

inline std::vector<double> tensor_to_vec(const Tensor& t) {
    return std::vector<double>(t.data().begin(), t.data().end());
}

inline int argmax_lowest(std::span<const double> v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

}  // namespace detail

inline Hypothesis greedy_decode(std::span<const int> src_ids, const ModelParams& params,
                                const DecodeConfig& dcfg) {
    dcfg.validate();
    const ModelConfig& cfg = params.config;
    Graph g = Graph::inference();
    Annotations ann = encode(g, src_ids, params, cfg, /*training=*/false);
    Hypothesis hyp;
    hyp.state = initial_state(g, ann, params);
    int y_prev = Vocabulary::kBos;
    for (std::size_t t = 0; t < dcfg.max_len; ++t) {
        auto step = decode_step(g, y_prev, hyp.state, ann, params, cfg, /*training=*/false);
        const int y = detail::argmax_lowest(step.probs.data());
        hyp.ids.push_back(y);
        hyp.log_prob += std::log(step.probs.at(static_cast<std::size_t>(y)));
        hyp.attn_trace.push_back(detail::tensor_to_vec(step.attn));
        hyp.state = step.state;
        y_prev = y;
        if (y == Vocabulary::kEos) {
            hyp.finished = true;
            break;
        }
    }
    return hyp;
}

// Standard beam search. Each live hypothesis expands over the full
// vocabulary; the top (beam_size - completed) candidates by cumulative
// log-probability survive, finished ones retire to the completed pool, and
// the search ends when the pool is full or max_len is reached. Final ranking
// divides by length when length_norm is on.
inline std::vector<Hypothesis> beam_decode_all(std::span<const int> src_ids,
                                               const ModelParams& params,
                                               const DecodeConfig& dcfg) {
    dcfg.validate();
    const ModelConfig& cfg = params.config;
    Graph g = Graph::inference();
    Annotations ann = encode(g, src_ids, params, cfg, /*training=*/false);

    Hypothesis seed;
    seed.state = initial_state(g, ann, params);
    std::vector<Hypothesis> live = {seed};
    std::vector<Hypothesis> completed;

    struct Cand {
        double lp;
        std::size_t parent;
        int token;
    };
    for (std::size_t t = 0; t < dcfg.max_len && !live.empty(); ++t) {
        std::vector<DecodeStepResult> steps;
        steps.reserve(live.size());
        std::vector<Cand> candidates;
        candidates.reserve(live.size() * cfg.tgt_vocab_size);
        for (std::size_t i = 0; i < live.size(); ++i) {
            const Hypothesis& h = live[i];
            const int y_prev = h.ids.empty() ? Vocabulary::kBos : h.ids.back();
            steps.push_back(decode_step(g, y_prev, h.state, ann, params, cfg, /*training=*/false));
            for (std::size_t v = 0; v < cfg.tgt_vocab_size; ++v)
                candidates.push_back(
                    {h.log_prob + std::log(steps.back().probs.at(v)), i, static_cast<int>(v)});
        }
        // All candidates at a step share the same length, so the lex rule
        // reduces to prefix-then-token comparison.
        auto cand_better = [&live](const Cand& a, const Cand& b) {
            if (a.lp != b.lp) return a.lp > b.lp;
            const auto& pa = live[a.parent].ids;
            const auto& pb = live[b.parent].ids;
            for (std::size_t k = 0; k < pa.size(); ++k)
                if (pa[k] != pb[k]) return pa[k] < pb[k];
            return a.token < b.token;
        };
        const std::size_t keep = dcfg.beam_size - completed.size();
        if (candidates.size() > keep) {
            std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                              candidates.end(), cand_better);
            candidates.resize(keep);
        } else {
            std::sort(candidates.begin(), candidates.end(), cand_better);
        }
        std::vector<Hypothesis> next;
        next.reserve(candidates.size());
        for (const Cand& c : candidates) {
            Hypothesis h = live[c.parent];
            h.ids.push_back(c.token);
            h.log_prob = c.lp;
            h.state = steps[c.parent].state;
            h.attn_trace.push_back(detail::tensor_to_vec(steps[c.parent].attn));
            if (c.token == Vocabulary::kEos) {
                h.finished = true;
                completed.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        live = std::move(next);
    }
    for (Hypothesis& h : live) completed.push_back(std::move(h));

    std::sort(completed.begin(), completed.end(), [&dcfg](const Hypothesis& a, const Hypothesis& b) {
        return detail::better(detail::ranking_score(a, dcfg.length_norm), a.ids,
                              detail::ranking_score(b, dcfg.length_norm), b.ids);
    });
    return completed;
}

inline Hypothesis beam_decode(std::span<const int> src_ids, const ModelParams& params,
                              const DecodeConfig& dcfg) {
    return beam_decode_all(src_ids, params, dcfg).front();
}

// UNK output tokens take the source token with the highest attention weight
// at that step; everything else maps through the target vocabulary.
inline Sentence replace_unk(const Hypothesis& hyp, const Sentence& src_tokens,
                            const Vocabulary& tgt_vocab) {
    if (hyp.attn_trace.size() != hyp.ids.size())
        throw InvalidArgument("replace_unk: attention trace does not cover the hypothesis");
    Sentence out;
    for (std::size_t t = 0; t < hyp.ids.size(); ++t) {
        const int id = hyp.ids[t];
        if (id == Vocabulary::kEos) break;
        if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
        if (id == Vocabulary::kUnk) {
            const auto& a = hyp.attn_trace[t];
            std::size_t best = 0;
            for (std::size_t j = 1; j < a.size() && j < src_tokens.size(); ++j)
                if (a[j] > a[best]) best = j;
            out.push_back(best < src_tokens.size() ? src_tokens[best] : "<unk>");
        } else {
            out.push_back(tgt_vocab.token_of(id));
        }
    }
    return out;
}

// Decodes a source corpus line by line. The checkpoint's vocabulary
// fingerprint must match the supplied vocabularies.
inline void decode_corpus(const std::string& src_path, const Checkpoint& ckpt,
                          const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                          const DecodeConfig& dcfg, const std::string& out_path) {
    check_vocab_fingerprint(ckpt, src_vocab, tgt_vocab);
    ModelParams params = params_from_checkpoint(ckpt);
    std::ifstream in(src_path, std::ios::binary);
    if (!in) throw IoError("cannot read source file: " + src_path);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write output file: " + out_path);
    std::string line;
    while (std::getline(in, line)) {
        const Sentence tokens = split_ws(line);
        if (tokens.empty()) {
            out << '\n';
            continue;
        }
        const std::vector<int> ids = numericalize(tokens, src_vocab, false);
        const Hypothesis hyp = beam_decode(ids, params, dcfg);
        out << join_sentence(replace_unk(hyp, tokens, tgt_vocab)) << '\n';
    }
}

}  // namespace nts
