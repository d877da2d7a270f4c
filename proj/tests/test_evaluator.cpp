#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/evaluator.hpp"
#include "core/util.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace hamlet;
using hamlet::testing::TempDir;
using hamlet::testing::tiny_model_config;

namespace {

// O(n^2) pair-enumeration oracle, ties half.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& l) {
    double wins = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!l[i]) continue;
        ++np;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[j]) continue;
            if (s[i] > s[j])
                wins += 1.0;
            else if (s[i] == s[j])
                wins += 0.5;
        }
    }
    for (int v : l) nn += (v == 0);
    return wins / (static_cast<double>(np) * static_cast<double>(nn));
}

// Naive threshold-sweep oracle with the same crossing interpolation rule.
double eer_oracle(const std::vector<double>& s, const std::vector<int>& l) {
    std::size_t np = 0, nn = 0;
    for (int v : l) (v ? np : nn) += 1;
    std::vector<double> ts(s);
    std::sort(ts.begin(), ts.end(), std::greater<double>());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
    double f0 = 0.0, n0 = 1.0;
    for (std::size_t k = 0; k <= ts.size(); ++k) {
        double fp = 0, fn = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool fake = k < ts.size() ? s[i] >= ts[k] : true;
            if (fake && !l[i]) fp += 1;
            if (!fake && l[i]) fn += 1;
        }
        const double f1 = fp / static_cast<double>(nn), n1 = fn / static_cast<double>(np);
        if (f1 >= n1) {
            const double denom = (f1 - f0) - (n1 - n0);
            if (std::abs(denom) < 1e-300) return 0.5 * (f1 + n1);
            const double lam = (n0 - f0) / denom;
            return f0 + lam * (f1 - f0);
        }
        f0 = f1;
        n0 = n1;
    }
    return 0.5 * (f0 + n0);
}

// Positional AP oracle: precision at each positive in stable-desc order,
// computed by O(n^2) counting.
double ap_oracle(const std::vector<double>& s, const std::vector<int>& l) {
    std::size_t np = 0;
    for (int v : l) np += static_cast<std::size_t>(v);
    double total = 0.0;
    for (std::size_t p = 0; p < s.size(); ++p) {
        if (!l[p]) continue;
        std::size_t ahead = 0, pos_ahead = 0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            const bool before = s[j] > s[p] || (s[j] == s[p] && j < p);
            if (before) {
                ++ahead;
                pos_ahead += static_cast<std::size_t>(l[j]);
            }
        }
        total += static_cast<double>(pos_ahead + 1) / static_cast<double>(ahead + 1);
    }
    return total / static_cast<double>(np);
}

std::vector<Prediction> make_preds(const std::vector<double>& scores,
                                   const std::vector<int>& labels,
                                   const std::vector<std::string>& videos = {}) {
    std::vector<Prediction> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i].fake_score = scores[i];
        out[i].decision = scores[i] >= 0 ? 1 : 0;
        out[i].label = labels[i];
        if (!videos.empty()) out[i].video_id = videos[i];
    }
    return out;
}

}  // namespace

TEST_CASE("auc worked examples") {
    CHECK(auc({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(auc({0.9, 0.2, 0.8, 0.4}, {1, 0, 0, 1}) == doctest::Approx(0.75));
    CHECK(auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(auc({1.0, 2.0}, {1, 1}), DataError);
}

TEST_CASE("metrics match brute-force oracles on random instances") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 2 + rng.below(198);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // quantized scores so ties actually occur
            scores[i] = std::floor(rng.uniform(-4.0, 4.0) * 4.0) / 4.0;
            labels[i] = rng.uniform() < 0.5 ? 1 : 0;
            (labels[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos) labels[0] = 1;
        if (!has_neg) labels[n - 1] = 0;
        CHECK(std::abs(auc(scores, labels) - auc_oracle(scores, labels)) < 1e-12);
        CHECK(std::abs(eer(scores, labels) - eer_oracle(scores, labels)) < 1e-12);
        CHECK(std::abs(ap(scores, labels) - ap_oracle(scores, labels)) < 1e-12);
        // pointwise AP floor: every positive ranked last
        const std::size_t n_pos =
            static_cast<std::size_t>(std::accumulate(labels.begin(), labels.end(), 0));
        const std::size_t n_neg = n - n_pos;
        double floor = 0.0;
        for (std::size_t k = 1; k <= n_pos; ++k)
            floor += static_cast<double>(k) / static_cast<double>(n_neg + k);
        floor /= static_cast<double>(n_pos);
        CHECK(ap(scores, labels) >= floor - 1e-12);
        CHECK(ap(scores, labels) <= 1.0 + 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly monotone score transforms") {
    Rng rng(33);
    std::vector<double> scores(60);
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < 60; ++i) {
        scores[i] = rng.uniform(-2.0, 2.0);
        labels[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = auc(scores, labels);
    std::vector<double> warped(scores);
    for (double& v : warped) v = std::tanh(v) * 3.0 + std::exp(v) * 0.01;
    CHECK(auc(warped, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("eer worked examples and symmetry") {
    CHECK(eer({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == doctest::Approx(0.0));
    CHECK(eer({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}) == doctest::Approx(0.5));
    Rng rng(35);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> s(40);
        std::vector<int> l(40);
        for (std::size_t i = 0; i < 40; ++i) {
            s[i] = rng.uniform(-1.0, 1.0);
            l[i] = rng.uniform() < 0.5;
        }
        l[0] = 1;
        l[1] = 0;
        std::vector<double> neg(s);
        for (double& v : neg) v = -v;
        std::vector<int> flip(l);
        for (int& v : flip) v = 1 - v;
        CHECK(eer(s, l) == doctest::Approx(eer(neg, flip)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(eer({1.0}, {1}), DataError);
}

TEST_CASE("ap worked examples") {
    CHECK(ap({0.9, 0.8, 0.3}, {1, 1, 0}) == doctest::Approx(1.0));
    CHECK(ap({0.9, 0.1}, {0, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(ap({1.0, 2.0}, {0, 0}), DataError);
}

TEST_CASE("video auc aggregation") {
    SUBCASE("one frame per video equals frame auc") {
        std::vector<double> s{0.9, 0.2, 0.8, 0.4};
        std::vector<int> l{1, 0, 0, 1};
        auto preds = make_preds(s, l, {"a", "b", "c", "d"});
        CHECK(video_auc(preds) == doctest::Approx(auc(s, l)));
    }
    SUBCASE("aggregation can fix noisy frames") {
        // fake video frames {0.9, -0.2} mean 0.35; real video {0.3, 0.1} mean 0.2;
        // frame auc < 1 (0.3 outranks -0.2) but video auc = 1
        auto preds = make_preds({0.9, -0.2, 0.3, 0.1}, {1, 1, 0, 0}, {"f", "f", "r", "r"});
        CHECK(auc({0.9, -0.2, 0.3, 0.1}, {1, 1, 0, 0}) < 1.0);
        CHECK(video_auc(preds) == doctest::Approx(1.0));
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(video_auc({}), DataError);
        auto mixed = make_preds({0.1, 0.2}, {0, 1}, {"v", "v"});
        CHECK_THROWS_AS(video_auc(mixed), DataError);
        auto missing = make_preds({0.1, 0.2}, {0, 1});
        CHECK_THROWS_AS(video_auc(missing), DataError);
    }
}

TEST_CASE("accuracy at the decision rule equals thresholding fake_score at zero") {
    auto preds = make_preds({0.5, -0.3, 0.0, -0.1}, {1, 0, 1, 1}, {"a", "b", "c", "d"});
    MetricReport rep = compute_metrics(preds);
    // decisions: 1,0,1(tie->fake),0 vs labels 1,0,1,1 -> 3/4
    CHECK(rep.acc == doctest::Approx(0.75));
    CHECK(rep.num_frames == 4);
    CHECK(rep.num_videos == 4);
    CHECK(rep.video_auc.has_value());
}

TEST_CASE("predict ties classify fake and ignore temperature") {
    ModelConfig mc = tiny_model_config();
    HamletModel model = HamletModel::create(mc, 3);
    // identical real/fake banks force s_r == s_f exactly
    model.bank().fake_bank.data() = model.bank().real_bank.data();

    TempDir dir;
    SynthSpec spec;
    spec.image_size = 16;
    spec.samples_per_class = 2;
    spec.frames_per_video = 2;
    spec.seed = 8;
    auto records = load_manifest(synthesize_dataset(spec, dir.path.string(), "t"));
    LoadedDataset data = LoadedDataset::load(records, mc.preprocess_config());
    auto preds = predict_dataset(model, data);
    for (const auto& p : preds) {
        CHECK(p.s_r == p.s_f);
        CHECK(p.decision == 1);
        CHECK(p.fake_score == 0.0);
    }

    // temperature only affects training-time similarity scaling
    ModelConfig mc_tau = mc;
    mc_tau.backbone.temperature = 0.5;
    HamletModel model_tau = HamletModel::create(mc_tau, 3);
    model_tau.bank().fake_bank.data() = model_tau.bank().real_bank.data();
    auto preds_tau = predict_dataset(model_tau, data);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds_tau[i].s_r == preds[i].s_r);
        CHECK(preds_tau[i].s_f == preds[i].s_f);
        CHECK(preds_tau[i].decision == preds[i].decision);
    }
}

TEST_CASE("eval scores are invariant to v_cls scaling") {
    ModelConfig mc = tiny_model_config();
    HamletModel model = HamletModel::create(mc, 5);
    Rng rng(6);
    Tensor img = Tensor::uniform({1, 3, 16, 16}, rng, -1.0, 1.0);
    auto [feat, levels] = model.encode_image(img);
    auto a = model.eval_scores(feat.v_cls, levels.levels);
    auto b = model.eval_scores(scale(feat.v_cls, 7.5), levels.levels);
    CHECK(a.s_r[0] == doctest::Approx(b.s_r[0]).epsilon(1e-6));
    CHECK(a.s_f[0] == doctest::Approx(b.s_f[0]).epsilon(1e-6));
}

TEST_CASE("attention export writes one map per token") {
    ModelConfig mc = tiny_model_config();
    HamletModel model = HamletModel::create(mc, 7);
    TempDir dir;
    Rng rng(8);
    Tensor img = Tensor::uniform({3, 16, 16}, rng, 0.0, 1.0);
    auto files = export_attention_maps(model, img, dir.path.string());
    CHECK(files.size() == mc.prompts.num_real + mc.prompts.num_fake + mc.prompts.num_context);
    for (const auto& f : files) {
        const std::string bytes = read_file(f);
        CHECK(bytes.rfind("P5\n4 4\n255\n", 0) == 0);  // sqrt(16) grid
        CHECK(bytes.size() == 11 + 16);  // header + 4x4 payload
    }
}

TEST_CASE("uniform attention renders the declared mid-gray fallback") {
    ModelConfig mc = tiny_model_config();
    HamletModel model = HamletModel::create(mc, 9);
    // zero query projection -> identical logits -> exactly uniform weights
    std::fill(model.fusion().cross_attn.wq.data().begin(),
              model.fusion().cross_attn.wq.data().end(), 0.0);
    TempDir dir;
    Rng rng(10);
    Tensor img = Tensor::uniform({3, 16, 16}, rng, 0.0, 1.0);
    auto files = export_attention_maps(model, img, dir.path.string());
    for (const auto& f : files) {
        const std::string bytes = read_file(f);
        for (std::size_t i = 11; i < bytes.size(); ++i)
            CHECK(static_cast<unsigned char>(bytes[i]) == 128);
    }
}

TEST_CASE("attention export requires the cross-attention pathway") {
    ModelConfig mc = tiny_model_config();
    mc.ablation.v2t = false;
    HamletModel model = HamletModel::create(mc, 7);
    TempDir dir;
    Rng rng(8);
    Tensor img = Tensor::uniform({3, 16, 16}, rng, 0.0, 1.0);
    CHECK_THROWS(export_attention_maps(model, img, dir.path.string()));
}

TEST_CASE("perturb grid severity zero equals the plain evaluation") {
    ModelConfig mc = tiny_model_config();
    HamletModel model = HamletModel::create(mc, 11);
    TempDir dir;
    SynthSpec spec;
    spec.image_size = 16;
    spec.samples_per_class = 4;
    spec.frames_per_video = 2;
    spec.seed = 12;
    auto records = load_manifest(synthesize_dataset(spec, dir.path.string(), "p"));

    MetricReport plain =
        compute_metrics(predict_dataset(model, LoadedDataset::load(records, mc.preprocess_config())));
    PerturbGrid grid = perturb_eval(model, records, /*seed=*/99);
    for (int k = 0; k < kPerturbationKinds; ++k) {
        CHECK(grid.frame[k][0] == plain.frame_auc);
        CHECK(grid.video[k][0] == plain.video_auc.value());
    }
}

TEST_CASE("ablation runner marks failing cells and continues") {
    TempDir dir;
    SynthSpec spec;
    spec.image_size = 16;
    spec.samples_per_class = 4;
    spec.frames_per_video = 2;
    spec.seed = 13;
    auto records = load_manifest(synthesize_dataset(spec, dir.path.string(), "a"));

    ModelConfig good = tiny_model_config();
    ModelConfig bad = good;
    bad.fusion.heads = 7;  // 24 % 7 != 0

    TrainConfig tcfg;
    tcfg.epochs = 1;
    tcfg.batch_size = 4;
    tcfg.seed = 2;
    auto results = run_ablation({{"good", good}, {"bad", bad}}, records, records, nullptr, tcfg);
    REQUIRE(results.size() == 2);
    CHECK_FALSE(results[0].failed);
    CHECK(results[0].within.num_frames == 8);
    CHECK(results[1].failed);
    CHECK(results[1].error.find("heads") != std::string::npos);
}
