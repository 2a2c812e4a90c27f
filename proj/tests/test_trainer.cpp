#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "nts/decoder.hpp"
#include "nts/trainer.hpp"

using namespace nts;
using testutil::make_toy_language;
using testutil::TempDir;

namespace {

ModelConfig toy_model_config(const testutil::ToyLanguage& toy, std::size_t hidden = 32) {
    ModelConfig cfg;
    cfg.src_vocab_size = toy.ord_vocab.size();
    cfg.tgt_vocab_size = toy.simp_vocab.size();
    cfg.embed_dim = 16;
    cfg.hidden_dim = hidden;
    cfg.attention_dim = 16;
    return cfg;
}

TrainConfig fast_train_config(std::size_t epochs, std::uint64_t seed = 0) {
    TrainConfig t;
    t.epochs = epochs;
    t.learning_rate = 0.5;
    t.lr_decay = 1.0;
    t.decay_start_epoch = 1000000;  // no decay in the toy runs
    t.clip_norm = 5.0;
    t.dropout = 0.0;
    t.seed = seed;
    t.shuffle = true;
    return t;
}

}  // namespace

TEST_CASE("clip_gradients") {
    ModelConfig cfg;
    cfg.src_vocab_size = 5;
    cfg.tgt_vocab_size = 5;
    cfg.embed_dim = 2;
    cfg.hidden_dim = 2;
    cfg.attention_dim = 2;
    ModelParams p = ModelParams::make(cfg);

    // single gradient [3,4] with clip 1 -> scaled to [0.6, 0.8]
    auto g = p.attn_v.grad();
    g[0] = 3.0;
    g[1] = 4.0;
    const double s = clip_gradients(p, 1.0);
    CHECK(s == Catch::Approx(0.2));
    CHECK(p.attn_v.grad()[0] == Catch::Approx(0.6));
    CHECK(p.attn_v.grad()[1] == Catch::Approx(0.8));

    // norm below the threshold: untouched, scale 1
    p.zero_grads();
    p.attn_v.grad()[0] = 0.3;
    CHECK(clip_gradients(p, 5.0) == 1.0);
    CHECK(p.attn_v.grad()[0] == 0.3);

    // post-condition over random gradients
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        for (auto& [name, t] : p.named())
            for (auto& v : t->grad()) v = 4.0 * uniform01(rng) - 2.0;
        clip_gradients(p, 2.5);
        double sq = 0.0;
        for (auto& [name, t] : p.named())
            for (double v : t->grad_view()) sq += v * v;
        CHECK(std::sqrt(sq) <= 2.5 + 1e-9);
    }
}

TEST_CASE("learning rate zero leaves parameters at their initialization") {
    auto toy = make_toy_language(4, 0, 6, 3, 5, 10);
    ModelConfig mcfg = toy_model_config(toy, 8);
    TrainConfig tcfg = fast_train_config(3, 5);
    tcfg.learning_rate = 0.0;
    Checkpoint ckpt = train(toy.pairs, tcfg, mcfg);

    ModelParams fresh = ModelParams::init(mcfg, derive_seed(tcfg.seed, "init"));
    ModelParams trained = params_from_checkpoint(ckpt);
    auto fn = fresh.named();
    auto tn = trained.named();
    for (std::size_t i = 0; i < fn.size(); ++i)
        for (std::size_t k = 0; k < fn[i].second->size(); ++k)
            CHECK(static_cast<float>(fn[i].second->at(k)) ==
                  static_cast<float>(tn[i].second->at(k)));
}

TEST_CASE("single pair memorization") {
    auto toy = make_toy_language(1, 0, 8, 5, 7, 20);
    ModelConfig mcfg = toy_model_config(toy, 32);
    TrainConfig tcfg = fast_train_config(150, 1);
    std::vector<double> losses;
    Checkpoint ckpt = train(toy.pairs, tcfg, mcfg,
                            [&](std::size_t, double loss, double) { losses.push_back(loss); });
    REQUIRE_FALSE(losses.empty());
    CHECK(losses.back() < 0.05);

    // loss trajectory mostly decreasing
    std::size_t drops = 0;
    for (std::size_t i = 1; i < losses.size(); ++i)
        if (losses[i] <= losses[i - 1]) ++drops;
    CHECK(static_cast<double>(drops) / static_cast<double>(losses.size() - 1) >= 0.9);

    // greedy decode reproduces the memorized target
    ModelParams params = params_from_checkpoint(ckpt);
    DecodeConfig dcfg;
    dcfg.beam_size = 1;
    Hypothesis hyp = greedy_decode(toy.pairs[0].src_ids, params, dcfg);
    std::vector<int> want(toy.pairs[0].tgt_ids.begin() + 1, toy.pairs[0].tgt_ids.end());
    CHECK(hyp.ids == want);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto toy = make_toy_language(6, 0, 6, 3, 5, 30);
    ModelConfig mcfg = toy_model_config(toy, 8);
    TrainConfig tcfg = fast_train_config(4, 77);
    tcfg.dropout = 0.2;  // exercise the seeded dropout path too
    Checkpoint a = train(toy.pairs, tcfg, mcfg);
    Checkpoint b = train(toy.pairs, tcfg, mcfg);
    CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
}

TEST_CASE("training does not mutate the input pairs") {
    auto toy = make_toy_language(5, 0, 6, 3, 5, 40);
    const auto snapshot = toy.pairs;
    ModelConfig mcfg = toy_model_config(toy, 8);
    train(toy.pairs, fast_train_config(2, 3), mcfg);
    REQUIRE(toy.pairs.size() == snapshot.size());
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
        CHECK(toy.pairs[i].src_ids == snapshot[i].src_ids);
        CHECK(toy.pairs[i].tgt_ids == snapshot[i].tgt_ids);
    }
}

TEST_CASE("dropout-free training loss trajectory is bit-reproducible") {
    auto toy = make_toy_language(5, 0, 6, 3, 5, 50);
    ModelConfig mcfg = toy_model_config(toy, 8);
    TrainConfig tcfg = fast_train_config(4, 9);
    std::vector<double> l1, l2;
    train(toy.pairs, tcfg, mcfg, [&](std::size_t, double loss, double) { l1.push_back(loss); });
    train(toy.pairs, tcfg, mcfg, [&](std::size_t, double loss, double) { l2.push_back(loss); });
    CHECK(l1 == l2);
}

TEST_CASE("label-shuffled data stays near ln V while real data separates") {
    auto toy = make_toy_language(60, 0, 8, 4, 6, 60);
    ModelConfig mcfg = toy_model_config(toy, 32);
    const double ln_v = std::log(static_cast<double>(mcfg.tgt_vocab_size));

    // mismatch the targets: pair i gets the target of pair i+7
    auto shuffled = toy.pairs;
    for (std::size_t i = 0; i < shuffled.size(); ++i)
        shuffled[i].tgt_ids = toy.pairs[(i + 7) % toy.pairs.size()].tgt_ids;

    TrainConfig tcfg = fast_train_config(40, 4);
    double real_loss = 0.0, shuffled_loss = 0.0;
    train(toy.pairs, tcfg, mcfg,
          [&](std::size_t, double loss, double) { real_loss = loss; });
    train(shuffled, tcfg, mcfg,
          [&](std::size_t, double loss, double) { shuffled_loss = loss; });
    CHECK(real_loss < 0.5 * shuffled_loss);
    CHECK(shuffled_loss > 0.6 * ln_v);
}

TEST_CASE("divergence aborts with the epoch and pair named") {
    auto toy = make_toy_language(1, 0, 6, 4, 5, 78);
    auto pairs = toy.pairs;
    pairs.push_back(pairs[0]);  // the poisoned parameters are revisited immediately
    ModelConfig mcfg = toy_model_config(toy, 8);
    // an absurd learning rate overflows the products on the next pass
    TrainConfig tcfg = fast_train_config(3, 8);
    tcfg.shuffle = false;
    tcfg.learning_rate = 1e160;
    tcfg.clip_norm = 1e300;
    try {
        train(pairs, tcfg, mcfg);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch") != std::string::npos);
        CHECK(msg.find("pair") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip") {
    auto toy = make_toy_language(2, 0, 6, 3, 5, 80);
    ModelConfig mcfg = toy_model_config(toy, 8);
    ModelParams p = ModelParams::init(mcfg, 123);
    Checkpoint ckpt = make_checkpoint(p, {{"note", "fixture"}, {"seed", "123"}});

    TempDir tmp;
    const std::string path = tmp.file("model.ckpt");
    save_checkpoint(ckpt, path);
    Checkpoint back = load_checkpoint(path);

    CHECK(back.format_version == kCheckpointVersion);
    CHECK(back.metadata.at("note") == "fixture");
    CHECK(back.metadata.at("seed") == "123");
    CHECK(back.model_config.hidden_dim == mcfg.hidden_dim);

    ModelParams restored = params_from_checkpoint(back);
    auto pn = p.named();
    auto rn = restored.named();
    REQUIRE(pn.size() == rn.size());
    for (std::size_t i = 0; i < pn.size(); ++i) {
        REQUIRE(pn[i].second->shape() == rn[i].second->shape());
        for (std::size_t k = 0; k < pn[i].second->size(); ++k) {
            const double orig = pn[i].second->at(k);
            const double got = rn[i].second->at(k);
            // within 32-bit quantization of the original value
            CHECK(got == static_cast<double>(static_cast<float>(orig)));
            CHECK(std::abs(orig - got) <= std::abs(orig) * 0x1.0p-20 + 0x1.0p-126);
        }
    }
}

TEST_CASE("checkpoint error paths") {
    TempDir tmp;
    auto toy = make_toy_language(2, 0, 6, 3, 5, 90);
    ModelConfig mcfg = toy_model_config(toy, 8);
    ModelParams p = ModelParams::init(mcfg, 5);
    Checkpoint ckpt = make_checkpoint(p, {});
    const std::string good = serialize_checkpoint(ckpt);

    // wrong magic
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    testutil::write_lines(tmp.file("bad_magic.ckpt"), {});
    {
        std::ofstream out(tmp.file("bad_magic.ckpt"), std::ios::binary);
        out.write(bad_magic.data(), static_cast<std::streamsize>(bad_magic.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("bad_magic.ckpt")), CorruptCheckpoint);

    // unsupported version
    std::string bad_version = good;
    bad_version[8] = 9;
    {
        std::ofstream out(tmp.file("bad_version.ckpt"), std::ios::binary);
        out.write(bad_version.data(), static_cast<std::streamsize>(bad_version.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("bad_version.ckpt")), UnsupportedVersion);

    // truncation
    {
        std::ofstream out(tmp.file("trunc.ckpt"), std::ios::binary);
        out.write(good.data(), static_cast<std::streamsize>(good.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(tmp.file("trunc.ckpt")), CorruptCheckpoint);

    CHECK_THROWS_AS(load_checkpoint(tmp.file("missing.ckpt")), IoError);
}

TEST_CASE("checkpoint round trip preserves greedy decodes") {
    auto toy = make_toy_language(6, 0, 6, 3, 5, 95);
    ModelConfig mcfg = toy_model_config(toy, 16);
    Checkpoint ckpt = train(toy.pairs, fast_train_config(25, 6), mcfg,
                            nullptr, vocab_fingerprint(toy.ord_vocab, toy.simp_vocab));

    TempDir tmp;
    save_checkpoint(ckpt, tmp.file("m.ckpt"));
    Checkpoint loaded = load_checkpoint(tmp.file("m.ckpt"));

    ModelParams before = params_from_checkpoint(ckpt);
    ModelParams after = params_from_checkpoint(loaded);
    DecodeConfig dcfg;
    dcfg.beam_size = 1;
    for (const auto& pair : toy.pairs) {
        Hypothesis h1 = greedy_decode(pair.src_ids, before, dcfg);
        Hypothesis h2 = greedy_decode(pair.src_ids, after, dcfg);
        CHECK(h1.ids == h2.ids);
    }
}

TEST_CASE("lr schedule constant then halving after decay_start_epoch") {
    auto toy = make_toy_language(2, 0, 6, 3, 5, 99);
    ModelConfig mcfg = toy_model_config(toy, 8);
    TrainConfig tcfg;
    tcfg.epochs = 5;
    tcfg.learning_rate = 1.0;
    tcfg.lr_decay = 0.5;
    tcfg.decay_start_epoch = 2;
    tcfg.dropout = 0.0;
    tcfg.seed = 1;
    std::vector<double> lrs;
    train(toy.pairs, tcfg, mcfg, [&](std::size_t, double, double lr) { lrs.push_back(lr); });
    REQUIRE(lrs.size() == 5);
    CHECK(lrs[0] == 1.0);
    CHECK(lrs[1] == 1.0);
    CHECK(lrs[2] == 0.5);
    CHECK(lrs[3] == 0.25);
    CHECK(lrs[4] == 0.125);
}

TEST_CASE("empty training set is rejected") {
    ModelConfig mcfg;
    mcfg.src_vocab_size = 6;
    mcfg.tgt_vocab_size = 6;
    mcfg.embed_dim = 4;
    mcfg.hidden_dim = 4;
    mcfg.attention_dim = 4;
    CHECK_THROWS_AS(train({}, TrainConfig{}, mcfg), InvalidArgument);
}
