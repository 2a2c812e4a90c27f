#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "helpers.hpp"
#include "nts/textpipe.hpp"

using testutil::TempDir;

namespace {

int run_cli(const std::string& args, const std::string& log_path) {
    const std::string cmd = std::string(NTS_CLI_PATH) + " " + args + " > " + log_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

// Ten hand-traced sentences: four fall to the length filter (three short,
// one 43 tokens long) and one is an exact duplicate, leaving five.
const char* kRawFixture =
    "The quick brown fox jumps over the lazy sleeping dog. "
    "A cat sat. "
    "Many people like to read good books every single day indeed. "
    "The quick brown fox jumps over the lazy sleeping dog. "
    "Short one. "
    "Dr. Smith quietly examined the ancient manuscript during the long winter evening. "
    "It rains. "
    "Several children played happily in the large green park near the river. "
    "Extremely long sentences with very many repeated words go on and on and on and on and on "
    "and on and on and on and on and on and on and on and on and on and on and on and on. "
    "Every bird sings a gentle morning song above the quiet valley.";

void write_toy_corpus(const TempDir& tmp) {
    auto toy = testutil::make_toy_language(8, 10, 6, 3, 5, 42);
    std::vector<std::string> ord, simp, mono, test_ord, test_simp;
    for (const auto& s : toy.ord_sentences) ord.push_back(nts::join_sentence(s));
    for (const auto& s : toy.simp_sentences) simp.push_back(nts::join_sentence(s));
    for (const auto& s : toy.mono.sentences) mono.push_back(nts::join_sentence(s));
    auto test_toy = testutil::make_toy_language(3, 0, 6, 3, 5, 43);
    for (const auto& s : test_toy.ord_sentences) test_ord.push_back(nts::join_sentence(s));
    for (const auto& s : test_toy.simp_sentences) test_simp.push_back(nts::join_sentence(s));
    testutil::write_lines(tmp.file("train.ord"), ord);
    testutil::write_lines(tmp.file("train.simp"), simp);
    testutil::write_lines(tmp.file("mono.simp"), mono);
    testutil::write_lines(tmp.file("test.ord"), test_ord);
    testutil::write_lines(tmp.file("test.simp"), test_simp);
}

const std::string kTinyFlags =
    " --epochs 3 --learning-rate 0.5 --dropout 0 --embed-dim 8 --hidden-dim 8 "
    "--attention-dim 8 --vocab-size 100";

}  // namespace

TEST_CASE("preprocess matches the hand-traced pipeline") {
    TempDir tmp;
    testutil::write_lines(tmp.file("raw.txt"), {kRawFixture});
    const std::string args = "--out " + tmp.file("out") + " preprocess --in " +
                             tmp.file("raw.txt") + " --out-corpus " + tmp.file("corpus.txt") +
                             " --out-vocab " + tmp.file("vocab.tsv");
    REQUIRE(run_cli(args, tmp.file("log1.txt")) == 0);
    const std::string log = testutil::read_file(tmp.file("log1.txt"));
    CHECK(log.find("sentences in: 10") != std::string::npos);
    CHECK(log.find("sentences out: 5") != std::string::npos);

    // the emitted vocabulary covers exactly the corpus tokens plus specials
    nts::Corpus corpus = nts::read_corpus_file(tmp.file("corpus.txt"), nts::Side::simplified);
    CHECK(corpus.size() == 5);
    std::set<std::string> distinct;
    for (const auto& s : corpus.sentences)
        for (const auto& t : s) distinct.insert(t);
    nts::Vocabulary vocab = nts::Vocabulary::load(tmp.file("vocab.tsv"));
    CHECK(vocab.size() == distinct.size() + 4);

    // rerun is identical
    REQUIRE(run_cli("--out " + tmp.file("out2") + " preprocess --in " + tmp.file("raw.txt") +
                        " --out-corpus " + tmp.file("corpus2.txt") + " --out-vocab " +
                        tmp.file("vocab2.tsv"),
                    tmp.file("log2.txt")) == 0);
    CHECK(testutil::read_file(tmp.file("corpus.txt")) ==
          testutil::read_file(tmp.file("corpus2.txt")));
    CHECK(testutil::read_file(tmp.file("vocab.tsv")) ==
          testutil::read_file(tmp.file("vocab2.tsv")));

    // run log materializes the defaults
    const std::string run_log = testutil::read_file(tmp.file("out") + "/preprocess.run.log");
    CHECK(run_log.find("min_len = 10") != std::string::npos);
    CHECK(run_log.find("max_len = 40") != std::string::npos);
}

TEST_CASE("train then translate, greedy equals beam 1") {
    TempDir tmp;
    write_toy_corpus(tmp);
    const std::string train_dir = tmp.file("model");
    REQUIRE(run_cli("--seed 5 --out " + train_dir + " train --train-ord " +
                        tmp.file("train.ord") + " --train-simp " + tmp.file("train.simp") +
                        kTinyFlags,
                    tmp.file("train.log")) == 0);

    const std::string common = " translate --ckpt " + train_dir + "/model.ckpt --in " +
                               tmp.file("test.ord") + " --src-vocab " + train_dir +
                               "/vocab.ord --tgt-vocab " + train_dir + "/vocab.simp";
    REQUIRE(run_cli("--out " + tmp.file("t1") + common + " --out " + tmp.file("beam1.txt") +
                        " --beam 1",
                    tmp.file("t1.log")) == 0);
    REQUIRE(run_cli("--out " + tmp.file("t2") + common + " --out " + tmp.file("greedy.txt") +
                        " --greedy",
                    tmp.file("t2.log")) == 0);
    const std::string beam1 = testutil::read_file(tmp.file("beam1.txt"));
    CHECK_FALSE(beam1.empty());
    CHECK(beam1 == testutil::read_file(tmp.file("greedy.txt")));

    // line counts match the input
    nts::Corpus in = nts::read_corpus_file(tmp.file("test.ord"), nts::Side::ordinary);
    CHECK(static_cast<std::size_t>(std::count(beam1.begin(), beam1.end(), '\n')) == in.size());
}

TEST_CASE("pipeline with sample-n 0 reproduces train bit-for-bit") {
    TempDir tmp;
    write_toy_corpus(tmp);
    const std::string pipe_dir = tmp.file("pipe");
    const std::string data_flags = " --train-ord " + tmp.file("train.ord") + " --train-simp " +
                                   tmp.file("train.simp") + " --mono " + tmp.file("mono.simp") +
                                   " --test-ord " + tmp.file("test.ord") + " --test-simp " +
                                   tmp.file("test.simp");
    REQUIRE(run_cli("--seed 5 --out " + pipe_dir + " pipeline" + data_flags + " --sample-n 0" +
                        kTinyFlags,
                    tmp.file("pipe.log")) == 0);

    // the baseline shares the pipeline's vocabularies and seeds
    const std::string train_dir = tmp.file("base");
    REQUIRE(run_cli("--seed 5 --out " + train_dir + " train --train-ord " +
                        tmp.file("train.ord") + " --train-simp " + tmp.file("train.simp") +
                        " --src-vocab " + pipe_dir + "/vocab.ord --tgt-vocab " + pipe_dir +
                        "/vocab.simp" + kTinyFlags,
                    tmp.file("base.log")) == 0);

    const std::string a = testutil::read_file(pipe_dir + "/model.ckpt");
    const std::string b = testutil::read_file(train_dir + "/model.ckpt");
    REQUIRE_FALSE(a.empty());
    CHECK(a == b);

    // manifest records the degenerate run
    const std::string manifest = testutil::read_file(pipe_dir + "/manifest.txt");
    CHECK(manifest.find("sample_size = 0") != std::string::npos);
    CHECK(manifest.find("n_synthetic = 0") != std::string::npos);
}

TEST_CASE("pipeline with synthesis emits dataset, manifest and report") {
    TempDir tmp;
    write_toy_corpus(tmp);
    const std::string out = tmp.file("aug");
    REQUIRE(run_cli("--seed 7 --out " + out + " pipeline --train-ord " + tmp.file("train.ord") +
                        " --train-simp " + tmp.file("train.simp") + " --mono " +
                        tmp.file("mono.simp") + " --test-ord " + tmp.file("test.ord") +
                        " --test-simp " + tmp.file("test.simp") + " --sample-n 4 --beam 2" +
                        kTinyFlags,
                    tmp.file("aug.log")) == 0);
    for (const char* f : {"/model.ckpt", "/reverse.ckpt", "/dataset.ord", "/dataset.simp",
                          "/dataset.origin", "/manifest.txt", "/report.txt", "/report.kv",
                          "/vocab.ord", "/vocab.simp", "/pipeline.run.log"})
        CHECK(std::filesystem::exists(out + f));
    const std::string kv = testutil::read_file(out + "/report.kv");
    CHECK(kv.find("bleu=") != std::string::npos);
    CHECK(kv.find("fkgl=") != std::string::npos);
    CHECK(kv.find("sari=") != std::string::npos);
}

TEST_CASE("evaluate reports 100.00 when outputs equal references") {
    TempDir tmp;
    testutil::write_lines(tmp.file("src.txt"), {"a b c d", "e f g h"});
    testutil::write_lines(tmp.file("ref.txt"), {"a b d", "e f h"});
    REQUIRE(run_cli("--out " + tmp.file("ev") + " evaluate --outputs " + tmp.file("ref.txt") +
                        " --sources " + tmp.file("src.txt") + " --refs " + tmp.file("ref.txt") +
                        " --name self",
                    tmp.file("ev.log")) == 0);
    const std::string kv = testutil::read_file(tmp.file("ev") + "/report.kv");
    CHECK(kv.find("bleu=100.00") != std::string::npos);
    CHECK(kv.find("sari=100.00") != std::string::npos);
    CHECK(kv.find("system=self") != std::string::npos);
}

TEST_CASE("errors exit nonzero with a message") {
    TempDir tmp;
    CHECK(run_cli("--out " + tmp.file("x") + " translate --ckpt " + tmp.file("missing.ckpt") +
                      " --in a --out b --src-vocab c --tgt-vocab d",
                  tmp.file("err.log")) != 0);
    const std::string log = testutil::read_file(tmp.file("err.log"));
    CHECK(log.find("error:") != std::string::npos);

    // pipeline without a sample size is refused: no hidden default
    write_toy_corpus(tmp);
    CHECK(run_cli("--out " + tmp.file("y") + " pipeline --train-ord " + tmp.file("train.ord") +
                      " --train-simp " + tmp.file("train.simp") + " --mono " +
                      tmp.file("mono.simp") + " --test-ord " + tmp.file("test.ord") +
                      " --test-simp " + tmp.file("test.simp"),
                  tmp.file("err2.log")) != 0);
    CHECK(testutil::read_file(tmp.file("err2.log")).find("sample_n") != std::string::npos);
}
