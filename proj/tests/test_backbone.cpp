#include <cmath>

#include "core/backbone.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace hamlet;

namespace {
Tensor random_images(std::size_t b, const BackboneConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor::uniform({b, 3, cfg.image_size, cfg.image_size}, rng, -1.0, 1.0);
}
}  // namespace

TEST_CASE("desk config tap shapes") {
    BackboneConfig cfg = BackboneConfig::desk();
    cfg.validate();
    CHECK(cfg.num_patches() == 64);
    Backbone bb = Backbone::init(cfg, 1);
    Tensor imgs = random_images(3, cfg, 2);
    auto [feat, levels] = bb.encode_image(imgs);
    CHECK(levels.levels.shape() == std::vector<std::size_t>{4, 3, 64, cfg.vision_width});
    CHECK(feat.v_cls.shape() == std::vector<std::size_t>{3, cfg.embed_dim});
    for (double v : levels.levels.data()) CHECK(std::isfinite(v));
}

TEST_CASE("paper profile geometry") {
    BackboneConfig cfg = BackboneConfig::paper();
    cfg.validate();
    CHECK(cfg.num_levels() == 6);
    CHECK(cfg.tap_blocks == std::vector<std::size_t>{4, 8, 12, 16, 20, 24});
    CHECK(cfg.num_patches() == 256);
    CHECK(cfg.context_length == 77);
}

TEST_CASE("tap config validation") {
    BackboneConfig cfg = BackboneConfig::desk();
    cfg.tap_blocks = {0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.tap_blocks = {9};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.tap_blocks = {2, 2};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.tap_blocks = {};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("identical images produce identical rows") {
    BackboneConfig cfg = BackboneConfig::desk();
    Backbone bb = Backbone::init(cfg, 5);
    Tensor one = random_images(1, cfg, 9);
    Tensor two = concat({one, one}, 0);
    auto [feat, levels] = bb.encode_image(two);
    const std::size_t de = cfg.embed_dim;
    for (std::size_t i = 0; i < de; ++i)
        CHECK(feat.v_cls.data()[i] == feat.v_cls.data()[de + i]);
    // levels [L,2,N,dv]: compare the two batch rows of each level
    const std::size_t n = cfg.num_patches() * cfg.vision_width;
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t i = 0; i < n; ++i)
            CHECK(levels.levels.data()[(l * 2 + 0) * n + i] ==
                  levels.levels.data()[(l * 2 + 1) * n + i]);
}

TEST_CASE("per-sample output independent of batch composition") {
    BackboneConfig cfg = BackboneConfig::desk();
    Backbone bb = Backbone::init(cfg, 5);
    Tensor a = random_images(1, cfg, 11);
    Tensor b = random_images(1, cfg, 12);
    auto [fa, la] = bb.encode_image(a);
    auto [fb, lb] = bb.encode_image(concat({a, b}, 0));
    for (std::size_t i = 0; i < cfg.embed_dim; ++i)
        CHECK(fa.v_cls.data()[i] == fb.v_cls.data()[i]);
}

TEST_CASE("backbone init deterministic, frozen, and shape-stable") {
    BackboneConfig cfg = BackboneConfig::desk();
    Backbone a = Backbone::init(cfg, 7);
    Backbone b = Backbone::init(cfg, 7);
    Backbone c = Backbone::init(cfg, 8);
    auto pa = a.named_params("backbone.");
    auto pb = b.named_params("backbone.");
    auto pc = c.named_params("backbone.");
    REQUIRE(pa.size() == pb.size());
    REQUIRE(pa.size() == pc.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].first == pb[i].first);
        CHECK(pa[i].second.shape() == pb[i].second.shape());
        CHECK(pa[i].second.data() == pb[i].second.data());
        CHECK(pa[i].second.shape() == pc[i].second.shape());
        if (pa[i].second.data() != pc[i].second.data()) any_diff = true;
        CHECK_FALSE(pa[i].second.requires_grad());
    }
    CHECK(any_diff);
}

TEST_CASE("encode_text_embeddings boundaries and determinism") {
    BackboneConfig cfg = BackboneConfig::desk();
    Backbone bb = Backbone::init(cfg, 3);
    Rng rng(1);

    Tensor empty = Tensor::zeros({2, 0, cfg.text_width});
    Tensor fe = bb.encode_text_embeddings(empty);
    CHECK(fe.shape() == std::vector<std::size_t>{2, cfg.embed_dim});

    Tensor embeds = Tensor::randn({2, 18, cfg.text_width}, rng, 0.1);
    Tensor f1 = bb.encode_text_embeddings(embeds);
    Tensor f2 = bb.encode_text_embeddings(embeds);
    CHECK(f1.data() == f2.data());

    Tensor too_long = Tensor::zeros({1, cfg.context_length - 1, cfg.text_width});
    CHECK_THROWS_AS(bb.encode_text_embeddings(too_long), ConfigError);
}

TEST_CASE("text feature flows gradients to the input embeddings only") {
    BackboneConfig cfg = BackboneConfig::desk();
    Backbone bb = Backbone::init(cfg, 3);
    Rng rng(2);
    Tensor embeds = Tensor::randn({1, 4, cfg.text_width}, rng, 0.1);
    embeds.set_requires_grad(true);
    Tensor feat = bb.encode_text_embeddings(embeds);
    sum_all(feat).backward();
    double mag = 0.0;
    for (double v : embeds.grad()) mag += std::abs(v);
    CHECK(mag > 0.0);
    for (auto& [name, t] : bb.named_params("backbone."))
        CHECK(t.grad_if_present() == nullptr);
}

TEST_CASE("prior prompt is cached and tokenizes to five words") {
    BackboneConfig cfg = BackboneConfig::desk();
    Backbone bb = Backbone::init(cfg, 3);
    ToyTokenizer tok{cfg.vocab_size};
    CHECK(tok.word_ids(Backbone::kPriorPromptText).size() == 5);
    Tensor p1 = bb.encode_prior_prompt(tok);
    Tensor p2 = bb.encode_prior_prompt(tok);
    CHECK(p1.shape() == std::vector<std::size_t>{1, cfg.embed_dim});
    CHECK(p1.data() == p2.data());
    CHECK(p1.same_impl(p2));
}

TEST_CASE("toy tokenizer determinism and bucket range") {
    ToyTokenizer tok{64};
    auto a = tok.word_ids("Hello World hello");
    CHECK(a.size() == 3);
    CHECK(a[0] == a[2]);  // case-insensitive
    for (int id : a) {
        CHECK(id >= 3);
        CHECK(id < 64);
    }
}

TEST_CASE("zero-shot probability examples") {
    Tensor v = Tensor::from_data({1, 2}, {1.0, 0.0});

    Tensor same = Tensor::from_data({2, 2}, {0.5, 0.5, 0.5, 0.5});
    Tensor p = zero_shot_probability(v, same, 1.0);
    CHECK(p.data()[0] == doctest::Approx(0.5));
    CHECK(p.data()[1] == doctest::Approx(0.5));

    Tensor ortho = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
    Tensor q = zero_shot_probability(v, ortho, 1.0);
    CHECK(q.data()[0] == doctest::Approx(0.7311).epsilon(1e-4));

    Tensor v2 = Tensor::from_data({1, 2}, {3.7, 0.0});  // scaled v
    Tensor q2 = zero_shot_probability(v2, ortho, 1.0);
    CHECK(q2.data()[0] == doctest::Approx(q.data()[0]).epsilon(1e-7));

    Rng rng(4);
    Tensor vb = Tensor::randn({5, 8}, rng);
    Tensor pb = Tensor::randn({3, 8}, rng);
    Tensor probs = zero_shot_probability(vb, pb, 0.07);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += probs.data()[r * 3 + c];
        CHECK(std::abs(s - 1.0) < 1e-6);
    }

    Tensor zero = Tensor::zeros({1, 2});
    CHECK_THROWS_AS(zero_shot_probability(zero, ortho, 1.0), DataError);
    CHECK_THROWS_AS(zero_shot_probability(v, ortho, 0.0), ConfigError);
}

TEST_CASE("rowwise cosine basics") {
    Tensor a = Tensor::from_data({2, 3}, {1, 0, 0, 0, 2, 0});
    Tensor b = Tensor::from_data({2, 3}, {2, 0, 0, 0, -1, 0});
    Tensor c = rowwise_cosine(a, b);
    CHECK(c.data()[0] == doctest::Approx(1.0));
    CHECK(c.data()[1] == doctest::Approx(-1.0));
    Tensor z = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(rowwise_cosine(a, z), DataError);
}
