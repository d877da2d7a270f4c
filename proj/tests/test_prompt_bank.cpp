#include <cmath>

#include "core/backbone.hpp"
#include "core/ops.hpp"
#include "core/prompt_bank.hpp"
#include "doctest.h"

using namespace hamlet;

namespace {
struct Fixture {
    BackboneConfig bcfg = BackboneConfig::desk();
    Backbone backbone = Backbone::init(bcfg, 1);
    ToyTokenizer tok{bcfg.vocab_size};
};
}  // namespace

TEST_CASE("default bank shapes (2,2,16)") {
    Fixture f;
    PromptConfig cfg;
    PromptBank bank = PromptBank::init(cfg, f.backbone, f.tok, 3);
    CHECK(bank.real_bank.shape() == std::vector<std::size_t>{2, f.bcfg.text_width});
    CHECK(bank.fake_bank.shape() == std::vector<std::size_t>{2, f.bcfg.text_width});
    CHECK(bank.context_bank.shape() == std::vector<std::size_t>{16, f.bcfg.text_width});
    CHECK(bank.real_bank.requires_grad());
    CHECK(bank.fake_bank.requires_grad());
    CHECK(bank.context_bank.requires_grad());
}

TEST_CASE("no_context composition omits the context bank") {
    Fixture f;
    PromptConfig cfg;
    cfg.composition = Composition::no_context;
    PromptBank bank = PromptBank::init(cfg, f.backbone, f.tok, 3);
    CHECK_FALSE(bank.context_bank.defined());
    Tensor cls = broadcast0(bank.real_bank, 2);
    Tensor seq = arrange_prompt(cls, Tensor(), cfg.arrangement);
    CHECK(seq.shape() == cls.shape());
    CHECK(seq.data() == cls.data());
}

TEST_CASE("seed determinism") {
    Fixture f;
    PromptConfig cfg;
    PromptBank a = PromptBank::init(cfg, f.backbone, f.tok, 42);
    PromptBank b = PromptBank::init(cfg, f.backbone, f.tok, 42);
    CHECK(a.real_bank.data() == b.real_bank.data());
    CHECK(a.fake_bank.data() == b.fake_bank.data());
    CHECK(a.context_bank.data() == b.context_bank.data());
}

TEST_CASE("fixed_rf banks are frozen word embeddings") {
    Fixture f;
    PromptConfig cfg;
    cfg.composition = Composition::fixed_rf;
    PromptBank bank = PromptBank::init(cfg, f.backbone, f.tok, 3);
    CHECK_FALSE(bank.real_bank.requires_grad());
    CHECK_FALSE(bank.fake_bank.requires_grad());
    CHECK(bank.context_bank.requires_grad());
    // K=2 rows are tiles of the single word-token embedding
    const std::size_t dt = f.bcfg.text_width;
    for (std::size_t i = 0; i < dt; ++i)
        CHECK(bank.real_bank.data()[i] == bank.real_bank.data()[dt + i]);
    Tensor real_word = f.backbone.word_embeddings(f.tok, "real");
    for (std::size_t i = 0; i < dt; ++i) CHECK(bank.real_bank.data()[i] == real_word.data()[i]);
    // trainables exclude the fixed banks
    auto tr = bank.trainable_params("prompts.");
    REQUIRE(tr.size() == 1);
    CHECK(tr[0].first == "prompts.context");
}

TEST_CASE("dropout eval identity and zero-rate identity") {
    Fixture f;
    PromptConfig cfg;
    PromptBank bank = PromptBank::init(cfg, f.backbone, f.tok, 3);
    Rng rng(5);
    Tensor ev = bank_dropout(bank.real_bank, 0.1, rng, false);
    CHECK(ev.same_impl(bank.real_bank));
    Tensor z = bank_dropout(bank.real_bank, 0.0, rng, true);
    CHECK(z.same_impl(bank.real_bank));
    CHECK_THROWS_AS(bank_dropout(bank.real_bank, 1.0, rng, true), ConfigError);
}

TEST_CASE("dropout statistics at rate 0.1") {
    Rng init(9);
    Tensor big = Tensor::full({400, 400}, 1.0);  // 1.6e5 elements
    Rng rng(17);
    Tensor dropped = bank_dropout(big, 0.1, rng, true);
    std::size_t zeros = 0;
    double mean = 0.0;
    for (double v : dropped.data()) {
        if (v == 0.0) ++zeros;
        mean += v;
    }
    mean /= static_cast<double>(dropped.numel());
    const double frac = static_cast<double>(zeros) / static_cast<double>(dropped.numel());
    CHECK(std::abs(frac - 0.1) < 0.02);
    CHECK(std::abs(mean - 1.0) < 0.03);
}

TEST_CASE("arrangements preserve token count and order class/context blocks") {
    Fixture f;
    PromptConfig cfg;
    PromptBank bank = PromptBank::init(cfg, f.backbone, f.tok, 3);
    const std::size_t B = 3, dt = f.bcfg.text_width;
    Tensor cls = broadcast0(bank.real_bank, B);      // [B,2,dt]
    Tensor ctx = broadcast0(bank.context_bank, B);   // [B,16,dt]

    Tensor rf = arrange_prompt(cls, ctx, Arrangement::rf_then_c);
    CHECK(rf.shape() == std::vector<std::size_t>{B, 18, dt});
    for (std::size_t i = 0; i < 2 * dt; ++i) CHECK(rf.data()[i] == cls.data()[i]);

    Tensor cr = arrange_prompt(cls, ctx, Arrangement::c_then_rf);
    CHECK(cr.shape() == std::vector<std::size_t>{B, 18, dt});
    for (std::size_t i = 0; i < 16 * dt; ++i) CHECK(cr.data()[i] == ctx.data()[i]);

    Tensor sp = arrange_prompt(cls, ctx, Arrangement::split);
    CHECK(sp.shape() == std::vector<std::size_t>{B, 18, dt});
    // 8 context, 2 class, 8 context
    for (std::size_t i = 0; i < 8 * dt; ++i) CHECK(sp.data()[i] == ctx.data()[i]);
    for (std::size_t i = 0; i < 2 * dt; ++i) CHECK(sp.data()[8 * dt + i] == cls.data()[i]);
}

TEST_CASE("split with odd context count puts the extra token first") {
    Fixture f;
    PromptConfig cfg;
    cfg.num_context = 5;
    PromptBank bank = PromptBank::init(cfg, f.backbone, f.tok, 3);
    Tensor cls = broadcast0(bank.real_bank, 1);
    Tensor ctx = broadcast0(bank.context_bank, 1);
    Tensor sp = arrange_prompt(cls, ctx, Arrangement::split);
    CHECK(sp.shape() == std::vector<std::size_t>{1, 7, f.bcfg.text_width});
    const std::size_t dt = f.bcfg.text_width;
    // first 3 tokens come from the context bank
    for (std::size_t i = 0; i < 3 * dt; ++i) CHECK(sp.data()[i] == ctx.data()[i]);
    // then the 2 class tokens
    for (std::size_t i = 0; i < 2 * dt; ++i) CHECK(sp.data()[3 * dt + i] == cls.data()[i]);
}

TEST_CASE("prompt config validation catches context overflow") {
    Fixture f;
    PromptConfig cfg;
    cfg.num_context = 64;  // 2 + 64 + 2 > 32
    CHECK_THROWS_WITH_AS(cfg.validate(f.bcfg), doctest::Contains("prompts.M"), ConfigError);
    PromptConfig zero;
    zero.num_real = 0;
    CHECK_THROWS_AS(zero.validate(f.bcfg), ConfigError);
}
