#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ckd/distill/train.hpp"
#include "ckd/errors.hpp"
#include "ckd/model/encoder.hpp"
#include "ckd/model/vocab.hpp"
#include "support/gradcheck.hpp"
#include "support/test_util.hpp"

using namespace ckd;
using namespace ckd::model;
using testsupport::gradcheck_max_rel_error;

namespace {

EncoderConfig tiny_config(std::size_t vocab) {
    EncoderConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.max_seq_len = 4;
    c.vocab_size = vocab;
    c.num_labels = 25;
    return c;
}

TokenBatch fixed_batch(std::size_t batch, std::size_t seq, std::size_t vocab,
                       std::uint64_t seed) {
    Rng rng(seed);
    TokenBatch b;
    b.batch = batch;
    b.seq = seq;
    for (std::size_t i = 0; i < batch; ++i) {
        b.ids.push_back(Vocabulary::kClsId);
        b.mask.push_back(1);
        const std::size_t real = 1 + rng.below(seq - 1);
        for (std::size_t j = 1; j < seq; ++j) {
            if (j < real + 1 && j < seq) {
                b.ids.push_back(static_cast<int>(3 + rng.below(vocab - 3)));
                b.mask.push_back(1);
            } else {
                b.ids.push_back(Vocabulary::kPadId);
                b.mask.push_back(0);
            }
        }
    }
    return b;
}

} // namespace

TEST_CASE("vocabulary fitting is frequency-then-lexicographic and corpus-order independent") {
    const std::vector<std::string> texts = {"Alpha beta GAMMA", "beta; beta, delta."};
    const auto v1 = Vocabulary::fit(texts);
    const auto v2 = Vocabulary::fit({texts[1], texts[0]});
    REQUIRE(v1.size() == v2.size());
    for (std::size_t i = 0; i < v1.size(); ++i) {
        CHECK(v1.token(i) == v2.token(i));
    }
    CHECK(v1.token(0) == "<pad>");
    CHECK(v1.token(1) == "<unk>");
    CHECK(v1.token(2) == "<cls>");
    CHECK(v1.token(3) == "beta"); // frequency 3
    CHECK(v1.token(4) == "alpha");
    CHECK(v1.token(5) == "delta");
    CHECK(v1.token(6) == "gamma");
    CHECK(v1.id_of("beta") == 3);
    CHECK(v1.id_of("nonexistent") == Vocabulary::kUnkId);
}

TEST_CASE("split_words keeps alnum+underscore runs, lowercased") {
    const auto words = Vocabulary::split_words("Congestive heart failure; med_px_01 (acute)!");
    CHECK(words == std::vector<std::string>{"congestive", "heart", "failure", "med_px_01",
                                            "acute"});
}

TEST_CASE("tokenize: empty text, determinism, golden ids") {
    const auto vocab = Vocabulary::fit({"alpha beta", "beta gamma"});
    // frequency order: beta(2) -> id 3, then alpha, gamma.
    const auto empty = tokenize("", vocab, 4);
    CHECK(empty.ids == std::vector<int>{2, 0, 0, 0});
    CHECK(empty.mask == std::vector<int>{1, 0, 0, 0});

    const auto once = tokenize("beta alpha zeta", vocab, 6);
    const auto twice = tokenize("beta alpha zeta", vocab, 6);
    CHECK(once.ids == twice.ids);
    CHECK(once.ids == std::vector<int>{2, 3, 4, 1, 0, 0});
    CHECK(once.mask == std::vector<int>{1, 1, 1, 1, 0, 0});

    // Truncation to max_seq_len.
    const auto truncated = tokenize("alpha beta gamma alpha", vocab, 3);
    CHECK(truncated.ids.size() == 3);
    CHECK(truncated.ids[0] == 2);
}

TEST_CASE("vocabulary save/load round-trip and label token ids") {
    const auto registry = fusion::PhenotypeRegistry::builtin();
    std::vector<std::string> texts = {"some corpus text"};
    for (const auto& e : registry.entries()) {
        texts.push_back(e.name);
    }
    const auto vocab = Vocabulary::fit(texts);
    testsupport::TempDir dir("vocab");
    const auto path = dir.path() / "vocab.txt";
    vocab.save(path);
    const auto loaded = Vocabulary::load(path);
    REQUIRE(loaded.size() == vocab.size());
    CHECK(loaded.id_of("corpus") == vocab.id_of("corpus"));

    const auto label_ids = vocab.label_token_ids(registry);
    REQUIRE(label_ids.size() == 25);
    for (const auto& ids : label_ids) {
        CHECK(!ids.empty()); // every phenotype name has non-UNK tokens
        for (int id : ids) {
            CHECK(id > Vocabulary::kClsId);
        }
    }
}

TEST_CASE("encoder forward obeys the [batch, seq, d_model] shape contract") {
    EncoderConfig c;
    c.layers = 2;
    c.heads = 4;
    c.d_model = 32;
    c.d_ff = 64;
    c.max_seq_len = 8;
    c.vocab_size = 20;
    Rng rng(1);
    const auto enc = Encoder::init(c, rng);
    const auto batch = fixed_batch(1, 8, 20, 3);
    const Tensor h = enc.forward(nullptr, batch);
    CHECK(h.shape() == std::vector<std::size_t>{1, 8, 32});
    for (double x : h.data()) {
        CHECK(std::isfinite(x));
    }
    TokenBatch bad = batch;
    bad.ids[2] = 25; // >= vocab_size
    CHECK_THROWS_AS(enc.forward(nullptr, bad), contract_error);
}

TEST_CASE("PAD tail content does not affect unmasked positions") {
    EncoderConfig c = tiny_config(12);
    c.max_seq_len = 6;
    Rng rng(5);
    const auto enc = Encoder::init(c, rng);
    TokenBatch a;
    a.batch = 1;
    a.seq = 6;
    a.ids = {2, 4, 5, 0, 0, 0};
    a.mask = {1, 1, 1, 0, 0, 0};
    TokenBatch b = a;
    b.ids = {2, 4, 5, 7, 9, 11}; // different content under the mask tail
    const Tensor ha = enc.forward(nullptr, a);
    const Tensor hb = enc.forward(nullptr, b);
    const std::size_t d = c.d_model;
    for (std::size_t pos = 0; pos < 3; ++pos) {
        for (std::size_t k = 0; k < d; ++k) {
            CHECK(ha.data()[pos * d + k] == hb.data()[pos * d + k]);
        }
    }
}

TEST_CASE("causal option blocks information flow from later positions") {
    EncoderConfig c = tiny_config(12);
    c.max_seq_len = 4;
    c.causal = true;
    Rng rng(9);
    const auto enc = Encoder::init(c, rng);
    TokenBatch a;
    a.batch = 1;
    a.seq = 4;
    a.ids = {2, 4, 5, 6};
    a.mask = {1, 1, 1, 1};
    TokenBatch b = a;
    b.ids[3] = 9;
    const Tensor ha = enc.forward(nullptr, a);
    const Tensor hb = enc.forward(nullptr, b);
    for (std::size_t pos = 0; pos < 3; ++pos) {
        for (std::size_t k = 0; k < c.d_model; ++k) {
            CHECK(ha.data()[pos * c.d_model + k] == hb.data()[pos * c.d_model + k]);
        }
    }
}

TEST_CASE("gradient check through a one-layer encoder") {
    EncoderConfig c = tiny_config(10);
    Rng rng(7);
    auto enc = Encoder::init(c, rng);
    const auto batch = fixed_batch(2, 4, 10, 11);

    auto params = enc.parameters();
    // Check a representative parameter subset end to end.
    std::vector<Tensor> inputs = {params[0], params[2], params[10], params[12]};
    const double err = gradcheck_max_rel_error(
        [&](Tape* tape) { return mean_all(tape, enc.forward(tape, batch)); }, inputs);
    CHECK(err < 1e-4);
}

TEST_CASE("LoRA zero-init leaves every output bit-identical to the frozen base") {
    EncoderConfig c = tiny_config(14);
    c.layers = 2;
    Rng rng(21);
    auto base = Encoder::init(c, rng);
    auto adapted = base.clone();
    Rng lora_rng(99);
    adapted.attach_lora(3, lora_rng);
    CHECK(adapted.has_lora());
    CHECK(adapted.lora_rank() == 3);

    const auto batch = fixed_batch(2, 4, 14, 2);
    const Tensor hb = base.forward(nullptr, batch);
    const Tensor ha = adapted.forward(nullptr, batch);
    REQUIRE(hb.size() == ha.size());
    for (std::size_t i = 0; i < hb.size(); ++i) {
        CHECK(hb.data()[i] == ha.data()[i]); // bit-for-float
    }
}

TEST_CASE("apply_lora computes the adapted projection and routes gradients to A and B") {
    Rng rng(4);
    const Tensor w = Tensor::randn(rng, {4, 4}, 0.5);
    LoraAdapter adapter;
    adapter.rank = 2;
    adapter.a = Tensor::randn(rng, {2, 4}, 0.5, true);
    adapter.b = Tensor::randn(rng, {4, 2}, 0.5, true);
    Tensor x = Tensor::randn(rng, {3, 4}, 1.0, true);

    // Same result as materializing W' = W + B.A.
    const Tensor low = matmul(nullptr, adapter.b, adapter.a);
    const Tensor w_eff = add(nullptr, w, low);
    const Tensor via_eff = matmul(nullptr, x, transpose(nullptr, w_eff));
    const Tensor via_lora = apply_lora(nullptr, adapter, w, x);
    for (std::size_t i = 0; i < via_eff.size(); ++i) {
        CHECK(via_lora.data()[i] == doctest::Approx(via_eff.data()[i]).epsilon(1e-12));
    }
    CHECK(adapter.a.size() + adapter.b.size() == 16); // r x (d + k) with d = k = 4, r = 2

    const double err = gradcheck_max_rel_error(
        [&](Tape* tape) { return mean_all(tape, apply_lora(tape, adapter, w, x)); },
        {adapter.a, adapter.b});
    CHECK(err < 1e-4);
}

TEST_CASE("lora_trainable_count formula and exhaustive walk agree") {
    EncoderConfig c;
    c.layers = 2;
    c.heads = 4;
    c.d_model = 32;
    c.d_ff = 64;
    c.max_seq_len = 8;
    c.vocab_size = 11;
    CHECK(lora_trainable_count(c, 4) == 2 * 3 * 4 * 64);
    CHECK(lora_trainable_count(c, 4) == 1536);
    CHECK(lora_trainable_count(c, 0) == 0);

    for (std::size_t rank : {1, 2, 8}) {
        for (std::size_t layers : {1, 3}) {
            EncoderConfig cc = c;
            cc.layers = layers;
            Rng rng(layers * 10 + rank);
            auto enc = Encoder::init(cc, rng);
            enc.attach_lora(rank, rng);
            enc.freeze_base();
            CHECK(enc.trainable_parameter_count() == lora_trainable_count(cc, rank));
        }
    }
}

TEST_CASE("attach_lora rejects degenerate ranks") {
    EncoderConfig c = tiny_config(10);
    Rng rng(1);
    auto enc = Encoder::init(c, rng);
    CHECK_THROWS_AS(enc.attach_lora(8, rng), config_error);  // rank == d
    CHECK_THROWS_AS(enc.attach_lora(12, rng), config_error); // rank > d
    CHECK_THROWS_AS(enc.attach_lora(0, rng), config_error);
}

TEST_CASE("mlaph: zero weights, length independence, mean pooling, all-PAD error") {
    Rng rng(3);
    const std::size_t d = 6;
    Mlaph zero_head;
    zero_head.pooling = Mlaph::Pooling::last_token;
    zero_head.weight = Tensor::zeros({25, d});
    zero_head.bias = Tensor::zeros({25});

    const Tensor h5 = Tensor::randn(rng, {1, 5, d}, 1.0);
    const std::vector<int> mask5 = {1, 1, 1, 1, 1};
    const Tensor logits = mlaph_forward(nullptr, zero_head, h5, mask5);
    CHECK(logits.shape() == std::vector<std::size_t>{1, 25});
    for (double x : logits.data()) {
        CHECK(x == 0.0);
    }

    // Same final hidden vector under different sequence lengths -> same logits.
    Mlaph head = Mlaph::init(d, 25, Mlaph::Pooling::last_token, rng);
    std::vector<double> final_vec;
    for (std::size_t k = 0; k < d; ++k) {
        final_vec.push_back(0.1 * static_cast<double>(k) - 0.2);
    }
    auto build_hidden = [&](std::size_t seq) {
        Tensor h = Tensor::randn(rng, {1, seq, d}, 1.0);
        for (std::size_t k = 0; k < d; ++k) {
            h.data()[(seq - 1) * d + k] = final_vec[k];
        }
        return h;
    };
    const Tensor a = mlaph_forward(nullptr, head, build_hidden(5), std::vector<int>(5, 1));
    const Tensor b = mlaph_forward(nullptr, head, build_hidden(9), std::vector<int>(9, 1));
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(a.data()[i] == b.data()[i]);
    }

    // Mean pooling of two identical timesteps equals either timestep.
    Mlaph mean_head = head;
    mean_head.pooling = Mlaph::Pooling::mean;
    Tensor two = Tensor::zeros({1, 2, d});
    for (std::size_t k = 0; k < d; ++k) {
        two.data()[k] = final_vec[k];
        two.data()[d + k] = final_vec[k];
    }
    Tensor one = Tensor::zeros({1, 1, d});
    for (std::size_t k = 0; k < d; ++k) {
        one.data()[k] = final_vec[k];
    }
    const Tensor mean_two = mlaph_forward(nullptr, mean_head, two, {1, 1});
    const Tensor mean_one = mlaph_forward(nullptr, mean_head, one, {1});
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(mean_two.data()[i] == doctest::Approx(mean_one.data()[i]).epsilon(1e-15));
    }

    CHECK_THROWS_AS(mlaph_forward(nullptr, head, build_hidden(3), std::vector<int>(3, 0)),
                    contract_error);
}

TEST_CASE("mlaph output width is num_labels for every batch/seq shape") {
    Rng rng(8);
    const Mlaph head = Mlaph::init(6, 25, Mlaph::Pooling::mean, rng);
    for (std::size_t batch : {1, 3}) {
        for (std::size_t seq : {2, 7}) {
            const Tensor h = Tensor::randn(rng, {batch, seq, 6}, 1.0);
            const Tensor logits =
                mlaph_forward(nullptr, head, h, std::vector<int>(batch * seq, 1));
            CHECK(logits.shape() == std::vector<std::size_t>{batch, 25});
        }
    }
}

TEST_CASE("end-to-end gradient check: encoder + head + loss") {
    EncoderConfig c = tiny_config(10);
    Rng rng(13);
    auto enc = Encoder::init(c, rng);
    auto head = Mlaph::init(c.d_model, c.num_labels, Mlaph::Pooling::last_token, rng);
    const auto batch = fixed_batch(2, 4, 10, 17);
    Tensor targets = Tensor::rand_uniform(rng, {2, 25}, 0.0, 1.0);

    auto fn = [&](Tape* tape) {
        const Tensor hidden = enc.forward(tape, batch);
        const Tensor logits = mlaph_forward(tape, head, hidden, batch.mask);
        return bce_with_logits_mean(tape, logits, targets, Tensor::scalar(1.0));
    };
    auto params = enc.parameters();
    std::vector<Tensor> inputs = {params[0], params[2], head.weight, head.bias};
    CHECK(gradcheck_max_rel_error(fn, inputs) < 1e-4);
}

TEST_CASE("vocab_logits: shape, normalized softmax, determinism") {
    EncoderConfig c = tiny_config(10);
    Rng rng(29);
    const auto enc = Encoder::init(c, rng);
    const auto batch = fixed_batch(2, 4, 10, 5);
    const Tensor logits = vocab_logits(nullptr, enc, batch);
    CHECK(logits.shape() == std::vector<std::size_t>{2, 4, 10});
    const Tensor flat = reshape(nullptr, logits, {8, 10});
    const Tensor probs = softmax_rows(nullptr, flat);
    for (std::size_t r = 0; r < 8; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 10; ++j) {
            sum += probs.at(r, j);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    const Tensor again = vocab_logits(nullptr, enc, batch);
    CHECK(testsupport::bytes_equal(logits.data(), again.data()));
}

TEST_CASE("encoder checkpoints round-trip through from_named") {
    EncoderConfig c = tiny_config(10);
    c.layers = 2;
    Rng rng(31);
    auto enc = Encoder::init(c, rng);
    enc.attach_lora(2, rng);
    const auto named = enc.named_parameters();
    const auto rebuilt = Encoder::from_named(c, named);
    CHECK(rebuilt.has_lora());
    const auto batch = fixed_batch(1, 4, 10, 23);
    const Tensor a = enc.forward(nullptr, batch);
    const Tensor b = rebuilt.forward(nullptr, batch);
    CHECK(testsupport::bytes_equal(a.data(), b.data()));
    CHECK_THROWS_AS(Encoder::from_named(c, {}), io_error);
}

TEST_CASE("encoder config validation") {
    EncoderConfig c = tiny_config(10);
    c.d_model = 10;
    c.heads = 4; // not divisible
    CHECK_THROWS_AS(c.validate(), config_error);
    EncoderConfig v = tiny_config(2); // vocab too small for specials
    CHECK_THROWS_AS(v.validate(), config_error);
}
