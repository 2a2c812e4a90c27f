#pragma once

// Shared test machinery: the central-finite-difference gradient oracle,
// random tensor generators, the bijective toy simplification language used
// by the training/augmentation tests, and a temp-dir RAII helper.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "nts/seq2seq.hpp"
#include "nts/tensor.hpp"
#include "nts/textpipe.hpp"

namespace testutil {

// Denominator floor 1e-8 suits per-op checks where the loss is O(1) and
// gradients are mostly O(1). Whole-model checks pass a floor of 1e-6: the
// central-difference oracle itself only resolves ~1e-10 absolute at eps 1e-5,
// so near-zero gradients would otherwise drown in FD rounding noise.
inline double rel_err(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) /
           std::max(floor, std::abs(analytic) + std::abs(numeric));
}

inline nts::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                                 double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    nts::Tensor t(std::move(shape), requires_grad);
    std::mt19937_64 rng(nts::splitmix64(seed));
    for (double& v : t.data()) v = lo + (hi - lo) * nts::uniform01(rng);
    return t;
}

struct FdResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
};

// Analytic gradients from one backward pass vs central finite differences.
// `make_loss` must rebuild the full forward pass from the current parameter
// values; it receives a fresh Graph each call so dropout masks and the like
// replay deterministically.
template <class MakeLoss>
FdResult finite_difference_check(const std::vector<nts::Tensor>& params, MakeLoss make_loss,
                                 double eps = 1e-5, std::uint64_t graph_seed = 0,
                                 double floor = 1e-8) {
    std::vector<std::vector<double>> analytic;
    {
        nts::Graph g(graph_seed);
        nts::Tensor loss = make_loss(g);
        g.backward(loss);
        for (const nts::Tensor& p : params) {
            nts::Tensor& t = const_cast<nts::Tensor&>(p);
            analytic.emplace_back(t.grad().begin(), t.grad().end());
            t.zero_grad();
        }
    }
    FdResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        nts::Tensor& t = const_cast<nts::Tensor&>(params[pi]);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t.at(i);
            t.at(i) = saved + eps;
            nts::Graph gp(graph_seed);
            const double fp = make_loss(gp).at(0);
            t.at(i) = saved - eps;
            nts::Graph gm(graph_seed);
            const double fm = make_loss(gm).at(0);
            t.at(i) = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic[pi][i], numeric, floor));
            ++res.checked;
        }
    }
    return res;
}

// ----------------------------- toy language -----------------------------

// Bijective toy simplification: ordinary token o<i> maps to simplified token
// s<i>, sentence structure is preserved. Learnable exactly, invertible, and
// cheap to train on.
struct ToyLanguage {
    nts::Vocabulary ord_vocab;
    nts::Vocabulary simp_vocab;
    std::vector<nts::SentencePair> pairs;       // parallel data
    std::vector<nts::Sentence> ord_sentences;   // surface forms aligned with pairs
    std::vector<nts::Sentence> simp_sentences;
    nts::Corpus mono;                           // simplified-only corpus
};

inline nts::Sentence toy_ord_sentence(const std::vector<int>& shape_ids) {
    nts::Sentence s;
    for (int i : shape_ids) s.push_back("o" + std::to_string(i));
    return s;
}

inline nts::Sentence toy_simp_sentence(const std::vector<int>& shape_ids) {
    nts::Sentence s;
    for (int i : shape_ids) s.push_back("s" + std::to_string(i));
    return s;
}

inline ToyLanguage make_toy_language(std::size_t n_pairs, std::size_t n_mono,
                                     std::size_t n_tokens, std::size_t len_min,
                                     std::size_t len_max, std::uint64_t seed) {
    ToyLanguage toy;
    for (std::size_t i = 0; i < n_tokens; ++i) {
        toy.ord_vocab.add("o" + std::to_string(i));
        toy.simp_vocab.add("s" + std::to_string(i));
    }
    std::mt19937_64 rng(nts::splitmix64(seed));
    auto draw_shape = [&]() {
        const std::size_t len = len_min + static_cast<std::size_t>(
                                              nts::bounded_draw(rng, len_max - len_min + 1));
        std::vector<int> ids(len);
        for (auto& v : ids) v = static_cast<int>(nts::bounded_draw(rng, n_tokens));
        return ids;
    };
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const auto shape = draw_shape();
        toy.ord_sentences.push_back(toy_ord_sentence(shape));
        toy.simp_sentences.push_back(toy_simp_sentence(shape));
        nts::SentencePair p;
        p.src_ids = nts::numericalize(toy.ord_sentences.back(), toy.ord_vocab, false);
        p.tgt_ids = nts::numericalize(toy.simp_sentences.back(), toy.simp_vocab, true);
        toy.pairs.push_back(std::move(p));
    }
    toy.mono.side = nts::Side::simplified;
    for (std::size_t i = 0; i < n_mono; ++i)
        toy.mono.sentences.push_back(toy_simp_sentence(draw_shape()));
    return toy;
}

// ----------------------------- decode oracles -----------------------------

// Teacher-forced replay of an id sequence; the independent scorer used by
// the beam-search enumeration oracle.
inline double score_sequence(const nts::ModelParams& params, std::span<const int> src_ids,
                             std::span<const int> seq) {
    nts::Graph g = nts::Graph::inference();
    nts::Annotations ann = nts::encode(g, src_ids, params, params.config, false);
    nts::Tensor s = nts::initial_state(g, ann, params);
    int y_prev = nts::Vocabulary::kBos;
    double lp = 0.0;
    for (int id : seq) {
        auto step = nts::decode_step(g, y_prev, s, ann, params, params.config, false);
        lp += std::log(step.probs.at(static_cast<std::size_t>(id)));
        s = step.state;
        y_prev = id;
    }
    return lp;
}

// Every decodable sequence up to max_len: EOS may only appear as the final
// token, and sequences shorter than max_len must end with EOS.
inline void enumerate_sequences(std::size_t vocab, std::size_t max_len, std::vector<int>& prefix,
                                std::vector<std::vector<int>>& out) {
    if (!prefix.empty() && prefix.back() == nts::Vocabulary::kEos) {
        out.push_back(prefix);
        return;
    }
    if (prefix.size() == max_len) {
        out.push_back(prefix);
        return;
    }
    for (int v = 0; v < static_cast<int>(vocab); ++v) {
        prefix.push_back(v);
        enumerate_sequences(vocab, max_len, prefix, out);
        prefix.pop_back();
    }
}

inline std::vector<int> brute_force_best(const nts::ModelParams& params,
                                         std::span<const int> src_ids, std::size_t max_len,
                                         bool length_norm) {
    std::vector<std::vector<int>> all;
    std::vector<int> prefix;
    enumerate_sequences(params.config.tgt_vocab_size, max_len, prefix, all);
    std::vector<int> best;
    double best_score = 0.0;
    for (const auto& seq : all) {
        const double lp = score_sequence(params, src_ids, seq);
        const double score = length_norm ? lp / static_cast<double>(seq.size()) : lp;
        if (best.empty() || score > best_score || (score == best_score && seq < best)) {
            best = seq;
            best_score = score;
        }
    }
    return best;
}

// ----------------------------- golden metric fixture -----------------------------

// Frozen 5-sentence fixture. The expected scores were precomputed by an
// independent brute-force n-gram counting oracle (exact rational arithmetic
// for SARI) before the metrics module was written.
inline const std::vector<std::string> kGoldenSrc = {
    "the quick brown fox jumps over the lazy dog .",
    "a cat sat on the mat .",
    "international cooperation is extraordinarily complicated today .",
    "he wrote an extremely long letter to his friend .",
    "the committee deliberated for seven hours before reaching a decision .",
};
inline const std::vector<std::string> kGoldenHyp = {
    "the quick fox jumps over the dog .",
    "a cat sat on the mat .",
    "working together across countries is very hard today .",
    "he wrote a very long letter to his friend .",
    "the group talked for seven hours before deciding .",
};
inline const std::vector<std::string> kGoldenRef = {
    "the fast fox jumps over the dog .",
    "a cat is on the mat .",
    "working together across countries is very hard now .",
    "he wrote a very long letter to his friend .",
    "the group talked for seven hours before making a choice .",
};
inline constexpr double kGoldenBleu = 73.5964602863;
inline constexpr double kGoldenFkgl = 3.8318947368;
inline constexpr double kGoldenSari = 79.3587708588;

// ----------------------------- filesystem -----------------------------

struct TempDir {
    std::filesystem::path path;

    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::mt19937_64 rng(std::random_device{}());
        path = base / ("nts_test_" + nts::to_hex(rng()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace testutil
