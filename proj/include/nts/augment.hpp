#pragma once

// Back-translation augmentation: train a reverse (simplified -> ordinary)
// model on the parallel data, greedy-decode a sample of the simplified-only
// corpus into synthetic ordinary sentences, and mix the synthetic pairs with
// the original parallel data before training the forward model.
//
// Only the source side is ever synthesized; every synthetic pair keeps a
// genuine simplified sentence as its target.

#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nts/common.hpp"
#include "nts/decoder.hpp"
#include "nts/evalmetrics.hpp"
#include "nts/textpipe.hpp"
#include "nts/trainer.hpp"

namespace nts {

struct AugmentManifest {
    std::size_t sample_size = 0;
    std::uint64_t sample_seed = 0;
    std::uint64_t shuffle_seed = 0;
    std::string reverse_ckpt_hash = "none";
    std::size_t n_original = 0;
    std::size_t n_synthetic = 0;
    std::size_t n_dropped = 0;
    std::string created;  // in-memory provenance only, not serialized
};

inline std::string render_manifest(const AugmentManifest& m) {
    std::ostringstream os;
    os << "sample_size = " << m.sample_size << '\n';
    os << "sample_seed = " << m.sample_seed << '\n';
    os << "shuffle_seed = " << m.shuffle_seed << '\n';
    os << "reverse_ckpt_hash = " << m.reverse_ckpt_hash << '\n';
    os << "n_original = " << m.n_original << '\n';
    os << "n_synthetic = " << m.n_synthetic << '\n';
    os << "n_dropped = " << m.n_dropped << '\n';
    return os.str();
}

inline void write_manifest(const AugmentManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << render_manifest(m);
}

// ----------------------------- reverse training -----------------------------

// Swaps every pair into (simplified -> ordinary) orientation. The swapped
// source drops the BOS/EOS wrapping of the old target; the swapped target
// gains it.
inline std::vector<SentencePair> swap_sides(const std::vector<SentencePair>& pairs) {
    std::vector<SentencePair> out;
    out.reserve(pairs.size());
    for (const SentencePair& p : pairs) {
        if (p.tgt_ids.size() < 2) throw InvalidArgument("swap_sides: malformed target");
        SentencePair q;
        q.src_ids.assign(p.tgt_ids.begin() + 1, p.tgt_ids.end() - 1);
        q.tgt_ids.reserve(p.src_ids.size() + 2);
        q.tgt_ids.push_back(Vocabulary::kBos);
        q.tgt_ids.insert(q.tgt_ids.end(), p.src_ids.begin(), p.src_ids.end());
        q.tgt_ids.push_back(Vocabulary::kEos);
        q.origin = p.origin;
        out.push_back(std::move(q));
    }
    return out;
}

// Trains the auxiliary simplified->ordinary model with the trainer unchanged.
inline Checkpoint train_reverse(const std::vector<SentencePair>& pairs, const TrainConfig& tcfg,
                                const ModelConfig& forward_cfg,
                                const EpochCallback& on_epoch = nullptr,
                                std::map<std::string, std::string> extra_meta = {}) {
    ModelConfig reverse_cfg = forward_cfg;
    std::swap(reverse_cfg.src_vocab_size, reverse_cfg.tgt_vocab_size);
    return train(swap_sides(pairs), tcfg, reverse_cfg, on_epoch, std::move(extra_meta));
}

// ----------------------------- back-translation -----------------------------

struct BacktranslateResult {
    std::vector<SentencePair> pairs;  // origin == synthetic
    std::size_t dropped = 0;
    std::vector<Sentence> sampled;  // the simplified sentences that were drawn
};

// Samples n simplified sentences, greedy-decodes each through the reverse
// model, and emits (synthetic ordinary -> true simplified) pairs. Decodes
// that come back empty or all-UNK are dropped and counted.
inline BacktranslateResult backtranslate(const Corpus& simplified, const Checkpoint& reverse_ckpt,
                                         const Vocabulary& ord_vocab,
                                         const Vocabulary& simp_vocab, std::size_t n,
                                         std::uint64_t seed, std::size_t max_len = 50) {
    check_vocab_fingerprint(reverse_ckpt, simp_vocab, ord_vocab);
    const ModelParams params = params_from_checkpoint(reverse_ckpt);
    const Corpus drawn = sample(simplified, n, seed);
    DecodeConfig greedy_cfg;
    greedy_cfg.beam_size = 1;
    greedy_cfg.max_len = max_len;
    greedy_cfg.length_norm = false;

    BacktranslateResult result;
    result.sampled = drawn.sentences;
    for (const Sentence& simp : drawn.sentences) {
        const std::vector<int> simp_ids = numericalize(simp, simp_vocab, false);
        Hypothesis hyp = greedy_decode(simp_ids, params, greedy_cfg);
        std::vector<int> ord_ids = hyp.ids;
        if (!ord_ids.empty() && ord_ids.back() == Vocabulary::kEos) ord_ids.pop_back();
        const bool all_unk =
            std::all_of(ord_ids.begin(), ord_ids.end(), [](int id) { return id == Vocabulary::kUnk; });
        if (ord_ids.empty() || all_unk) {
            ++result.dropped;
            continue;
        }
        SentencePair p;
        p.src_ids = std::move(ord_ids);
        p.tgt_ids = numericalize(simp, simp_vocab, true);
        p.origin = Origin::synthetic;
        result.pairs.push_back(std::move(p));
    }
    return result;
}

// Concatenation followed by a seeded shuffle; counts and origin tags are
// preserved.
inline std::vector<SentencePair> mix(const std::vector<SentencePair>& original,
                                     const std::vector<SentencePair>& synthetic,
                                     std::uint64_t shuffle_seed) {
    std::vector<SentencePair> out;
    out.reserve(original.size() + synthetic.size());
    out.insert(out.end(), original.begin(), original.end());
    out.insert(out.end(), synthetic.begin(), synthetic.end());
    std::mt19937_64 rng(shuffle_seed);
    seeded_shuffle(out, rng);
    return out;
}

// ----------------------------- pipeline -----------------------------

struct PipelineConfig {
    std::size_t sample_n = 0;   // mandatory knob: how many simplified sentences to back-translate
    std::size_t vocab_size = 10000;
    std::uint64_t seed = 0;
    TrainConfig train;
    DecodeConfig decode;
    std::size_t backtranslate_max_len = 50;
    std::string system_name = "nts";
};

struct PipelineFiles {
    std::string train_ord;
    std::string train_simp;
    std::string mono_simp;  // simplified-only corpus
    std::string test_ord;
    std::string test_simp;
};

struct PipelineResult {
    Checkpoint forward;
    std::optional<Checkpoint> reverse;
    AugmentManifest manifest;
    EvalReport report;
    double heldout_loss = 0.0;  // mean per-token loss on the test pairs
    Vocabulary ord_vocab;
    Vocabulary simp_vocab;
    std::vector<SentencePair> dataset;
    std::vector<double> forward_epoch_losses;
};

namespace detail {

// Rethrows stage failures with the pipeline stage named, preserving the
// error type for the ones callers dispatch on.
template <class Fn>
auto pipeline_stage(const char* stage, Fn&& fn) {
    auto tag = [stage](const NtsError& e) { return std::string(stage) + ": " + e.what(); };
    try {
        return fn();
    } catch (const VocabMismatch& e) {
        throw VocabMismatch(tag(e));
    } catch (const TrainingDiverged& e) {
        throw TrainingDiverged(tag(e));
    } catch (const CorruptCheckpoint& e) {
        throw CorruptCheckpoint(tag(e));
    } catch (const UnsupportedVersion& e) {
        throw UnsupportedVersion(tag(e));
    } catch (const IoError& e) {
        throw IoError(tag(e));
    } catch (const ShapeError& e) {
        throw ShapeError(tag(e));
    } catch (const IndexError& e) {
        throw IndexError(tag(e));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(tag(e));
    } catch (const NtsError& e) {
        throw NtsError(tag(e));
    }
}

inline double mean_heldout_loss(const std::vector<SentencePair>& pairs, ModelParams& params,
                                const ModelConfig& cfg) {
    double total = 0.0;
    std::size_t tokens = 0;
    for (const SentencePair& p : pairs) {
        Graph g = Graph::inference();
        Tensor loss = forward_loss(g, p, params, cfg, /*training=*/false);
        const std::size_t steps = p.tgt_ids.size() - 1;
        total += loss.at(0) * static_cast<double>(steps);
        tokens += steps;
    }
    return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

}  // namespace detail

// End-to-end run: shared vocabularies, optional reverse training +
// back-translation + mixing, forward training, and held-out evaluation.
// With sample_n == 0 the augmentation stages are skipped outright so the
// result is bit-identical to a plain baseline training run under the same
// seeds.
inline PipelineResult run_pipeline(const PipelineFiles& files, const PipelineConfig& cfg,
                                   ModelConfig model_cfg,
                                   const EpochCallback& on_epoch = nullptr) {
    const Corpus train_ord = read_corpus_file(files.train_ord, Side::ordinary);
    const Corpus train_simp = read_corpus_file(files.train_simp, Side::simplified);
    const Corpus mono = read_corpus_file(files.mono_simp, Side::simplified);
    if (train_ord.size() != train_simp.size())
        throw InvalidArgument("pipeline: parallel training files disagree in length");

    // Shared vocabularies: ordinary side from the parallel data, simplified
    // side from the parallel data plus the simplified-only corpus. Built once
    // so baseline and augmented models are comparable.
    PipelineResult result;
    result.ord_vocab = build_vocab(train_ord, cfg.vocab_size);
    {
        Corpus simp_all = train_simp;
        simp_all.sentences.insert(simp_all.sentences.end(), mono.sentences.begin(),
                                  mono.sentences.end());
        result.simp_vocab = build_vocab(simp_all, cfg.vocab_size);
    }
    model_cfg.src_vocab_size = result.ord_vocab.size();
    model_cfg.tgt_vocab_size = result.simp_vocab.size();

    std::vector<SentencePair> original =
        load_parallel(files.train_ord, files.train_simp, result.ord_vocab, result.simp_vocab);

    AugmentManifest manifest;
    manifest.sample_size = cfg.sample_n;
    manifest.sample_seed = derive_seed(cfg.seed, "augment.sample");
    manifest.shuffle_seed = derive_seed(cfg.seed, "augment.shuffle");
    manifest.n_original = original.size();
    {
        const std::time_t now = std::time(nullptr);
        char buf[32];
        if (std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now)))
            manifest.created = buf;
    }

    if (cfg.sample_n > 0) {
        TrainConfig reverse_tcfg = cfg.train;
        reverse_tcfg.seed = derive_seed(cfg.seed, "train.reverse");
        Checkpoint reverse = detail::pipeline_stage("train_reverse", [&] {
            return train_reverse(original, reverse_tcfg, model_cfg, on_epoch,
                                 vocab_fingerprint(result.simp_vocab, result.ord_vocab));
        });
        manifest.reverse_ckpt_hash = to_hex(fnv1a64(serialize_checkpoint(reverse)));

        BacktranslateResult bt = detail::pipeline_stage("backtranslate", [&] {
            return backtranslate(mono, reverse, result.ord_vocab, result.simp_vocab,
                                 cfg.sample_n, manifest.sample_seed, cfg.backtranslate_max_len);
        });
        manifest.n_synthetic = bt.pairs.size();
        manifest.n_dropped = bt.dropped;
        result.dataset = mix(original, bt.pairs, manifest.shuffle_seed);
        result.reverse = std::move(reverse);
    } else {
        result.dataset = original;
    }

    TrainConfig forward_tcfg = cfg.train;
    forward_tcfg.seed = derive_seed(cfg.seed, "train");
    auto collect = [&result, &on_epoch](std::size_t epoch, double loss, double lr) {
        result.forward_epoch_losses.push_back(loss);
        if (on_epoch) on_epoch(epoch, loss, lr);
    };
    result.forward = detail::pipeline_stage("train", [&] {
        return train(result.dataset, forward_tcfg, model_cfg, collect,
                     vocab_fingerprint(result.ord_vocab, result.simp_vocab));
    });
    result.manifest = manifest;

    // Held-out evaluation: decode the test sources and score against the
    // test references; also record the mean per-token teacher-forced loss.
    detail::pipeline_stage("evaluate", [&] {
        ModelParams params = params_from_checkpoint(result.forward);
        const std::vector<SentencePair> test_pairs =
            load_parallel(files.test_ord, files.test_simp, result.ord_vocab, result.simp_vocab);
        if (test_pairs.empty()) throw InvalidArgument("empty test set");
        result.heldout_loss = detail::mean_heldout_loss(test_pairs, params, model_cfg);

        const Corpus test_ord = read_corpus_file(files.test_ord, Side::ordinary);
        const Corpus test_simp = read_corpus_file(files.test_simp, Side::simplified);
        std::vector<Sentence> outputs;
        outputs.reserve(test_ord.size());
        for (const Sentence& src : test_ord.sentences) {
            const Hypothesis hyp =
                beam_decode(numericalize(src, result.ord_vocab, false), params, cfg.decode);
            outputs.push_back(replace_unk(hyp, src, result.simp_vocab));
        }
        std::vector<std::vector<Sentence>> refs;
        refs.reserve(test_simp.size());
        for (const Sentence& r : test_simp.sentences) refs.push_back({r});
        result.report = evaluate_sentences(outputs, test_ord.sentences, refs, cfg.system_name);
        return 0;
    });
    return result;
}

// Emits the mixed dataset as aligned .ord/.simp files plus a parallel
// .origin tag file.
inline void write_dataset(const std::vector<SentencePair>& dataset, const Vocabulary& ord_vocab,
                          const Vocabulary& simp_vocab, const std::string& prefix) {
    std::ofstream ord(prefix + ".ord", std::ios::binary);
    std::ofstream simp(prefix + ".simp", std::ios::binary);
    std::ofstream origin(prefix + ".origin", std::ios::binary);
    if (!ord || !simp || !origin) throw IoError("cannot write dataset files at prefix " + prefix);
    for (const SentencePair& p : dataset) {
        ord << join_sentence(detokenize_ids(p.src_ids, ord_vocab)) << '\n';
        simp << join_sentence(detokenize_ids(p.tgt_ids, simp_vocab)) << '\n';
        origin << (p.origin == Origin::original ? "original" : "synthetic") << '\n';
    }
}

}  // namespace nts
