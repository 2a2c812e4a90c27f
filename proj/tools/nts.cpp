// Command-line front end: preprocess / train / translate / backtranslate /
// evaluate / pipeline. Every command resolves its configuration (config file
// plus flag overrides, flags win), derives its per-stage seeds from the
// single global seed, and echoes the materialized result to a run log.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nts/augment.hpp"
#include "nts/config.hpp"
#include "nts/decoder.hpp"
#include "nts/evalmetrics.hpp"
#include "nts/textpipe.hpp"
#include "nts/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

nts::RunConfig resolve_config(const GlobalOpts& g) {
    nts::RunConfig cfg;
    if (!g.config_path.empty()) cfg = nts::load_run_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

void write_run_log(const GlobalOpts& g, const std::string& command, const nts::RunConfig& cfg,
                   const std::vector<std::pair<std::string, std::string>>& extras) {
    fs::create_directories(g.out_dir);
    const std::string path = (fs::path(g.out_dir) / (command + ".run.log")).string();
    std::ofstream log(path, std::ios::binary);
    if (!log) throw nts::IoError("cannot write run log: " + path);
    log << "command = " << command << '\n';
    for (const auto& [k, v] : extras) log << k << " = " << v << '\n';
    log << "seed.train = " << nts::derive_seed(cfg.seed, "train") << '\n';
    log << "seed.train.reverse = " << nts::derive_seed(cfg.seed, "train.reverse") << '\n';
    log << "seed.augment.sample = " << nts::derive_seed(cfg.seed, "augment.sample") << '\n';
    log << "seed.augment.shuffle = " << nts::derive_seed(cfg.seed, "augment.shuffle") << '\n';
    log << '\n' << nts::render_run_config(cfg);
    std::cout << "run log: " << path << '\n';
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw nts::IoError("cannot read file: " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

nts::Vocabulary build_or_load_vocab(const std::string& vocab_path, const nts::Corpus& corpus,
                                    std::size_t vocab_size) {
    if (!vocab_path.empty()) return nts::Vocabulary::load(vocab_path);
    return nts::build_vocab(corpus, vocab_size);
}

void print_epoch(std::size_t epoch, double loss, double lr) {
    std::cout << "epoch " << epoch << ": mean loss " << loss << " (lr " << lr << ")\n";
}

// ----------------------------- preprocess -----------------------------

int cmd_preprocess(const GlobalOpts& g, const nts::RunConfig& cfg, const std::string& in_path,
                   const std::string& out_corpus, const std::string& out_vocab) {
    for (const auto& p : {out_corpus, out_vocab})
        if (fs::path(p).has_parent_path()) fs::create_directories(fs::path(p).parent_path());
    const std::string raw = read_file(in_path);
    nts::Corpus corpus;
    for (const std::string& sent : nts::split_sentences(raw)) {
        nts::Sentence tokens = nts::tokenize(sent);
        if (!tokens.empty()) corpus.sentences.push_back(std::move(tokens));
    }
    const std::size_t n_in = corpus.size();
    corpus = nts::filter_by_length(corpus, cfg.textpipe.min_len, cfg.textpipe.max_len);
    corpus = nts::dedup(corpus);
    const nts::Vocabulary vocab = nts::build_vocab(corpus, cfg.textpipe.vocab_size);
    nts::write_corpus_file(corpus, out_corpus);
    vocab.save(out_vocab);
    std::cout << "sentences in: " << n_in << '\n';
    std::cout << "sentences out: " << corpus.size() << '\n';
    std::cout << "vocab size: " << vocab.size() << '\n';
    write_run_log(g, "preprocess", cfg,
                  {{"in", in_path}, {"out_corpus", out_corpus}, {"out_vocab", out_vocab}});
    return 0;
}

// ----------------------------- train -----------------------------

int cmd_train(const GlobalOpts& g, const nts::RunConfig& cfg, const std::string& train_ord,
              const std::string& train_simp, const std::string& src_vocab_path,
              const std::string& tgt_vocab_path) {
    fs::create_directories(g.out_dir);
    const nts::Corpus ord = nts::read_corpus_file(train_ord, nts::Side::ordinary);
    const nts::Corpus simp = nts::read_corpus_file(train_simp, nts::Side::simplified);
    const nts::Vocabulary ord_vocab = build_or_load_vocab(src_vocab_path, ord, cfg.textpipe.vocab_size);
    const nts::Vocabulary simp_vocab = build_or_load_vocab(tgt_vocab_path, simp, cfg.textpipe.vocab_size);
    ord_vocab.save((fs::path(g.out_dir) / "vocab.ord").string());
    simp_vocab.save((fs::path(g.out_dir) / "vocab.simp").string());

    const auto pairs = nts::load_parallel(train_ord, train_simp, ord_vocab, simp_vocab);
    nts::ModelConfig mcfg = cfg.model;
    mcfg.src_vocab_size = ord_vocab.size();
    mcfg.tgt_vocab_size = simp_vocab.size();
    nts::TrainConfig tcfg = cfg.train;
    tcfg.seed = nts::derive_seed(cfg.seed, "train");

    const nts::Checkpoint ckpt =
        nts::train(pairs, tcfg, mcfg, print_epoch, nts::vocab_fingerprint(ord_vocab, simp_vocab));
    const std::string ckpt_path = (fs::path(g.out_dir) / "model.ckpt").string();
    nts::save_checkpoint(ckpt, ckpt_path);
    std::cout << "checkpoint: " << ckpt_path << '\n';
    write_run_log(g, "train", cfg,
                  {{"train_ord", train_ord}, {"train_simp", train_simp}, {"ckpt", ckpt_path}});
    return 0;
}

// ----------------------------- translate -----------------------------

int cmd_translate(const GlobalOpts& g, nts::RunConfig cfg, const std::string& ckpt_path,
                  const std::string& in_path, const std::string& out_path,
                  const std::string& src_vocab_path, const std::string& tgt_vocab_path,
                  bool greedy) {
    const nts::Checkpoint ckpt = nts::load_checkpoint(ckpt_path);
    const nts::Vocabulary src_vocab = nts::Vocabulary::load(src_vocab_path);
    const nts::Vocabulary tgt_vocab = nts::Vocabulary::load(tgt_vocab_path);
    if (greedy) cfg.decode.beam_size = 1;
    nts::decode_corpus(in_path, ckpt, src_vocab, tgt_vocab, cfg.decode, out_path);
    std::cout << "translations: " << out_path << '\n';
    write_run_log(g, "translate", cfg,
                  {{"ckpt", ckpt_path}, {"in", in_path}, {"out", out_path}});
    return 0;
}

// ----------------------------- backtranslate -----------------------------

int cmd_backtranslate(const GlobalOpts& g, const nts::RunConfig& cfg, const std::string& ckpt_path,
                      const std::string& in_path, const std::string& ord_vocab_path,
                      const std::string& simp_vocab_path, const std::string& out_prefix) {
    if (!cfg.augment.sample_n_set)
        throw nts::ConfigError("backtranslate requires augment.sample_n (--sample-n)");
    const nts::Checkpoint reverse = nts::load_checkpoint(ckpt_path);
    const nts::Vocabulary ord_vocab = nts::Vocabulary::load(ord_vocab_path);
    const nts::Vocabulary simp_vocab = nts::Vocabulary::load(simp_vocab_path);
    const nts::Corpus mono = nts::read_corpus_file(in_path, nts::Side::simplified);

    nts::AugmentManifest manifest;
    manifest.sample_size = cfg.augment.sample_n;
    manifest.sample_seed = nts::derive_seed(cfg.seed, "augment.sample");
    manifest.shuffle_seed = nts::derive_seed(cfg.seed, "augment.shuffle");
    manifest.reverse_ckpt_hash = nts::to_hex(nts::fnv1a64(nts::serialize_checkpoint(reverse)));

    const nts::BacktranslateResult bt =
        nts::backtranslate(mono, reverse, ord_vocab, simp_vocab, cfg.augment.sample_n,
                           manifest.sample_seed, cfg.augment.max_len);
    manifest.n_synthetic = bt.pairs.size();
    manifest.n_dropped = bt.dropped;
    nts::write_dataset(bt.pairs, ord_vocab, simp_vocab, out_prefix);
    nts::write_manifest(manifest, out_prefix + ".manifest");
    std::cout << "synthetic pairs: " << bt.pairs.size() << " (dropped " << bt.dropped << ")\n";
    write_run_log(g, "backtranslate", cfg,
                  {{"ckpt", ckpt_path}, {"in", in_path}, {"out_prefix", out_prefix}});
    return 0;
}

// ----------------------------- evaluate -----------------------------

int cmd_evaluate(const GlobalOpts& g, const nts::RunConfig& cfg, const std::string& outputs,
                 const std::string& sources, const std::vector<std::string>& refs,
                 const std::string& name) {
    fs::create_directories(g.out_dir);
    const nts::EvalReport rep = nts::evaluate(outputs, sources, refs, name);
    std::cout << nts::render_report(rep);
    nts::write_report_files(rep, (fs::path(g.out_dir) / "report.txt").string(),
                            (fs::path(g.out_dir) / "report.kv").string());
    write_run_log(g, "evaluate", cfg, {{"outputs", outputs}, {"sources", sources}});
    return 0;
}

// ----------------------------- pipeline -----------------------------

int cmd_pipeline(const GlobalOpts& g, const nts::RunConfig& cfg, const nts::PipelineFiles& files) {
    if (!cfg.augment.sample_n_set)
        throw nts::ConfigError("pipeline requires augment.sample_n (--sample-n)");
    fs::create_directories(g.out_dir);
    nts::PipelineConfig pcfg;
    pcfg.sample_n = cfg.augment.sample_n;
    pcfg.vocab_size = cfg.textpipe.vocab_size;
    pcfg.seed = cfg.seed;
    pcfg.train = cfg.train;
    pcfg.decode = cfg.decode;
    pcfg.backtranslate_max_len = cfg.augment.max_len;
    pcfg.system_name = cfg.eval_system;

    const nts::PipelineResult result = nts::run_pipeline(files, pcfg, cfg.model, print_epoch);

    const fs::path out(g.out_dir);
    result.ord_vocab.save((out / "vocab.ord").string());
    result.simp_vocab.save((out / "vocab.simp").string());
    if (result.reverse) nts::save_checkpoint(*result.reverse, (out / "reverse.ckpt").string());
    nts::save_checkpoint(result.forward, (out / "model.ckpt").string());
    nts::write_dataset(result.dataset, result.ord_vocab, result.simp_vocab,
                       (out / "dataset").string());
    nts::write_manifest(result.manifest, (out / "manifest.txt").string());
    nts::write_report_files(result.report, (out / "report.txt").string(),
                            (out / "report.kv").string());
    std::cout << nts::render_manifest(result.manifest);
    std::cout << nts::render_report(result.report);
    std::cout << "heldout per-token loss: " << result.heldout_loss << '\n';
    write_run_log(g, "pipeline", cfg,
                  {{"train_ord", files.train_ord},
                   {"train_simp", files.train_simp},
                   {"mono", files.mono_simp},
                   {"test_ord", files.test_ord},
                   {"test_simp", files.test_simp}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural text simplification with back-translation augmentation"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "config file (sectioned key = value)");
    std::uint64_t seed_flag = 0;
    auto* seed_opt = app.add_option("--seed", seed_flag, "global seed");
    app.add_option("--out", g.out_dir, "output directory");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "raw text -> filtered corpus + vocabulary");
    std::string pre_in, pre_corpus, pre_vocab;
    std::optional<std::uint64_t> flag_min_len, flag_max_len, flag_vocab_size;
    pre->add_option("--in", pre_in, "raw input document")->required();
    pre->add_option("--out-corpus", pre_corpus, "tokenized corpus output")->required();
    pre->add_option("--out-vocab", pre_vocab, "vocabulary output")->required();
    pre->add_option("--min-len", flag_min_len, "minimum sentence length (tokens)");
    pre->add_option("--max-len", flag_max_len, "maximum sentence length (tokens)");
    pre->add_option("--vocab-size", flag_vocab_size, "vocabulary size cap");

    // train
    auto* tr = app.add_subcommand("train", "train the ordinary -> simplified model");
    std::string tr_ord, tr_simp, tr_src_vocab, tr_tgt_vocab;
    std::optional<std::uint64_t> flag_epochs, flag_hidden, flag_embed, flag_attn, flag_decay_start;
    std::optional<double> flag_lr, flag_lr_decay, flag_clip, flag_dropout;
    std::optional<bool> flag_shuffle;
    tr->add_option("--train-ord", tr_ord, "ordinary-side training file")->required();
    tr->add_option("--train-simp", tr_simp, "simplified-side training file")->required();
    tr->add_option("--src-vocab", tr_src_vocab, "existing source vocabulary");
    tr->add_option("--tgt-vocab", tr_tgt_vocab, "existing target vocabulary");
    tr->add_option("--epochs", flag_epochs, "training epochs");
    tr->add_option("--learning-rate", flag_lr, "SGD learning rate");
    tr->add_option("--lr-decay", flag_lr_decay, "learning-rate decay factor");
    tr->add_option("--decay-start-epoch", flag_decay_start, "epoch after which decay applies");
    tr->add_option("--clip-norm", flag_clip, "global gradient-norm clip");
    tr->add_option("--dropout", flag_dropout, "dropout rate during training");
    tr->add_option("--shuffle", flag_shuffle, "shuffle pairs every epoch");
    tr->add_option("--embed-dim", flag_embed, "embedding size");
    tr->add_option("--hidden-dim", flag_hidden, "hidden size per direction");
    tr->add_option("--attention-dim", flag_attn, "attention size");
    tr->add_option("--vocab-size", flag_vocab_size, "vocabulary size cap");

    // translate
    auto* ts = app.add_subcommand("translate", "decode a source corpus with a checkpoint");
    std::string ts_ckpt, ts_in, ts_out, ts_src_vocab, ts_tgt_vocab;
    std::optional<std::uint64_t> flag_beam, flag_decode_max_len;
    std::optional<bool> flag_length_norm;
    bool flag_greedy = false;
    ts->add_option("--ckpt", ts_ckpt, "model checkpoint")->required();
    ts->add_option("--in", ts_in, "source corpus file")->required();
    ts->add_option("--out", ts_out, "output file")->required();
    ts->add_option("--src-vocab", ts_src_vocab, "source vocabulary")->required();
    ts->add_option("--tgt-vocab", ts_tgt_vocab, "target vocabulary")->required();
    ts->add_option("--beam", flag_beam, "beam size");
    ts->add_option("--max-len", flag_decode_max_len, "decode length cap");
    ts->add_option("--length-norm", flag_length_norm, "normalize final ranking by length");
    ts->add_flag("--greedy", flag_greedy, "greedy decoding (beam 1)");

    // backtranslate
    auto* bt = app.add_subcommand("backtranslate", "synthesize ordinary sides for a simplified corpus");
    std::string bt_ckpt, bt_in, bt_ord_vocab, bt_simp_vocab, bt_prefix;
    std::optional<std::uint64_t> flag_sample_n, flag_bt_max_len;
    bt->add_option("--ckpt", bt_ckpt, "reverse-model checkpoint")->required();
    bt->add_option("--in", bt_in, "simplified-only corpus")->required();
    bt->add_option("--ord-vocab", bt_ord_vocab, "ordinary-side vocabulary")->required();
    bt->add_option("--simp-vocab", bt_simp_vocab, "simplified-side vocabulary")->required();
    bt->add_option("--out-prefix", bt_prefix, "output prefix for .ord/.simp/.origin")->required();
    bt->add_option("--sample-n", flag_sample_n, "number of sentences to back-translate");
    bt->add_option("--max-len", flag_bt_max_len, "back-translation decode cap");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score outputs with BLEU, FKGL and SARI");
    std::string ev_outputs, ev_sources, ev_name = "nts";
    std::vector<std::string> ev_refs;
    ev->add_option("--outputs", ev_outputs, "system output file")->required();
    ev->add_option("--sources", ev_sources, "source file")->required();
    ev->add_option("--refs", ev_refs, "reference file(s)")->required();
    ev->add_option("--name", ev_name, "system name for the report");

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "reverse training + back-translation + forward training + eval");
    nts::PipelineFiles files;
    pl->add_option("--train-ord", files.train_ord, "ordinary-side training file")->required();
    pl->add_option("--train-simp", files.train_simp, "simplified-side training file")->required();
    pl->add_option("--mono", files.mono_simp, "simplified-only corpus")->required();
    pl->add_option("--test-ord", files.test_ord, "held-out ordinary side")->required();
    pl->add_option("--test-simp", files.test_simp, "held-out simplified side")->required();
    pl->add_option("--sample-n", flag_sample_n, "number of sentences to back-translate");
    pl->add_option("--epochs", flag_epochs, "training epochs");
    pl->add_option("--learning-rate", flag_lr, "SGD learning rate");
    pl->add_option("--lr-decay", flag_lr_decay, "learning-rate decay factor");
    pl->add_option("--decay-start-epoch", flag_decay_start, "epoch after which decay applies");
    pl->add_option("--clip-norm", flag_clip, "global gradient-norm clip");
    pl->add_option("--dropout", flag_dropout, "dropout rate during training");
    pl->add_option("--shuffle", flag_shuffle, "shuffle pairs every epoch");
    pl->add_option("--embed-dim", flag_embed, "embedding size");
    pl->add_option("--hidden-dim", flag_hidden, "hidden size per direction");
    pl->add_option("--attention-dim", flag_attn, "attention size");
    pl->add_option("--vocab-size", flag_vocab_size, "vocabulary size cap");
    pl->add_option("--beam", flag_beam, "beam size for held-out decoding");
    pl->add_option("--name", ev_name, "system name for the report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (seed_opt->count()) g.seed = seed_flag;
        nts::RunConfig cfg = resolve_config(g);
        // flags win over the config file
        if (flag_min_len) cfg.textpipe.min_len = static_cast<std::size_t>(*flag_min_len);
        if (flag_max_len) cfg.textpipe.max_len = static_cast<std::size_t>(*flag_max_len);
        if (flag_vocab_size) cfg.textpipe.vocab_size = static_cast<std::size_t>(*flag_vocab_size);
        if (flag_epochs) cfg.train.epochs = static_cast<std::size_t>(*flag_epochs);
        if (flag_lr) cfg.train.learning_rate = *flag_lr;
        if (flag_lr_decay) cfg.train.lr_decay = *flag_lr_decay;
        if (flag_decay_start) cfg.train.decay_start_epoch = static_cast<std::size_t>(*flag_decay_start);
        if (flag_clip) cfg.train.clip_norm = *flag_clip;
        if (flag_dropout) cfg.train.dropout = *flag_dropout;
        if (flag_shuffle) cfg.train.shuffle = *flag_shuffle;
        if (flag_embed) cfg.model.embed_dim = static_cast<std::size_t>(*flag_embed);
        if (flag_hidden) cfg.model.hidden_dim = static_cast<std::size_t>(*flag_hidden);
        if (flag_attn) cfg.model.attention_dim = static_cast<std::size_t>(*flag_attn);
        if (flag_beam) cfg.decode.beam_size = static_cast<std::size_t>(*flag_beam);
        if (flag_decode_max_len) cfg.decode.max_len = static_cast<std::size_t>(*flag_decode_max_len);
        if (flag_length_norm) cfg.decode.length_norm = *flag_length_norm;
        if (flag_sample_n) {
            cfg.augment.sample_n = static_cast<std::size_t>(*flag_sample_n);
            cfg.augment.sample_n_set = true;
        }
        if (flag_bt_max_len) cfg.augment.max_len = static_cast<std::size_t>(*flag_bt_max_len);

        if (pre->parsed()) return cmd_preprocess(g, cfg, pre_in, pre_corpus, pre_vocab);
        if (tr->parsed()) return cmd_train(g, cfg, tr_ord, tr_simp, tr_src_vocab, tr_tgt_vocab);
        if (ts->parsed())
            return cmd_translate(g, cfg, ts_ckpt, ts_in, ts_out, ts_src_vocab, ts_tgt_vocab,
                                 flag_greedy);
        if (bt->parsed())
            return cmd_backtranslate(g, cfg, bt_ckpt, bt_in, bt_ord_vocab, bt_simp_vocab,
                                     bt_prefix);
        if (ev->parsed()) return cmd_evaluate(g, cfg, ev_outputs, ev_sources, ev_refs, ev_name);
        if (pl->parsed()) return cmd_pipeline(g, cfg, files);
        return 1;
    } catch (const nts::NtsError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
