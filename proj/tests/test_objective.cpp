#include <cmath>

#include "core/gradcheck.hpp"
#include "core/objective.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace hamlet;

namespace {
struct PrecisionGuard {
    Precision prev;
    explicit PrecisionGuard(Precision p) : prev(default_precision()) { set_default_precision(p); }
    ~PrecisionGuard() { set_default_precision(prev); }
};

// Independent extended-precision reference for Eq. 9.
long double progressive_ce_oracle(const std::vector<long double>& s,
                                  const std::vector<long double>& w) {
    long double total = 0.0L;
    for (std::size_t i = 0; i < w.size(); ++i) {
        long double denom = 0.0L;
        for (std::size_t j = i; j < s.size(); ++j) denom += expl(s[j] - s[i]);
        total += w[i] * logl(denom);  // -log softmax(S[i:])[0] = log sum exp(S[j]-S[i])
    }
    return total;
}
}  // namespace

TEST_CASE("weight schedules match the published formulas") {
    auto geo = weight_schedule(WeightScheme::geometric, 3);
    CHECK(geo[0] == doctest::Approx(1.0));
    CHECK(geo[1] == doctest::Approx(0.5));
    CHECK(geo[2] == doctest::Approx(0.25));

    auto uni = weight_schedule(WeightScheme::uniform, 3);
    for (double w : uni) CHECK(w == doctest::Approx(1.0));

    auto lin = weight_schedule(WeightScheme::linear, 3);
    CHECK(lin[0] == doctest::Approx(1.0));
    CHECK(lin[1] == doctest::Approx(2.0 / 3.0));
    CHECK(lin[2] == doctest::Approx(1.0 / 3.0));

    auto har = weight_schedule(WeightScheme::harmonic, 3);
    CHECK(har[0] == doctest::Approx(1.0));
    CHECK(har[1] == doctest::Approx(0.5));
    CHECK(har[2] == doctest::Approx(0.333333).epsilon(1e-5));

    auto cosd = weight_schedule(WeightScheme::cosine, 3);
    CHECK(cosd[0] == doctest::Approx(1.0));
    CHECK(cosd[1] == doctest::Approx(0.866025).epsilon(1e-5));
    CHECK(cosd[2] == doctest::Approx(0.5));

    CHECK_THROWS_AS(weight_schedule(WeightScheme::geometric, 0), ConfigError);
    CHECK_THROWS_AS(weight_scheme_from_string("exponential"), ConfigError);
}

TEST_CASE("similarity ordering follows the label") {
    LossConfig cfg;
    Tensor v = Tensor::from_data({2, 4}, {1, 0, 0, 0, 1, 0, 0, 0});
    Tensor t_r = Tensor::from_data({2, 4}, {1, 0, 0, 0, 1, 0, 0, 0});  // aligned
    Tensor t_f = Tensor::from_data({2, 4}, {0, 1, 0, 0, 0, 1, 0, 0});  // orthogonal
    Tensor t_c = Tensor::from_data({2, 4}, {0, 0, 1, 0, 0, 0, 1, 0});
    Tensor t_pr = Tensor::from_data({1, 4}, {0, 0, 0, 1});

    Tensor s = similarity_matrix(v, t_r, t_f, t_c, t_pr, 1.0, {0, 1}, cfg);
    REQUIRE(s.shape() == std::vector<std::size_t>{2, 4});
    // real row: [s_r, s_c, s_f, s_pr] = [1,0,0,0]
    CHECK(s.data()[0] == doctest::Approx(1.0));
    CHECK(s.data()[1] == doctest::Approx(0.0));
    CHECK(s.data()[2] == doctest::Approx(0.0));
    CHECK(s.data()[3] == doctest::Approx(0.0));
    // fake row leads with s_f = 0 and carries s_r = 1 third
    CHECK(s.data()[4] == doctest::Approx(0.0));
    CHECK(s.data()[6] == doctest::Approx(1.0));

    // halving tau doubles every entry
    Tensor s2 = similarity_matrix(v, t_r, t_f, t_c, t_pr, 0.5, {0, 1}, cfg);
    for (std::size_t i = 0; i < s.numel(); ++i)
        CHECK(s2.data()[i] == doctest::Approx(2.0 * s.data()[i]));
}

TEST_CASE("prior-off similarity has three entries and never touches t_pr") {
    LossConfig cfg;
    cfg.prior_prompt = false;
    Tensor v = Tensor::from_data({1, 2}, {1, 0});
    Tensor t = Tensor::from_data({1, 2}, {0, 1});
    Tensor s = similarity_matrix(v, t, t, t, Tensor(), 1.0, {0}, cfg);
    CHECK(s.shape() == std::vector<std::size_t>{1, 3});
    CHECK(cfg.effective_depth() == 2);
    CHECK(cfg.similarity_length() == 3);
}

TEST_CASE("progressive loss closed form at the all-zero point") {
    Tensor s = Tensor::from_data({1, 4}, {0, 0, 0, 0});
    Tensor loss = progressive_ce(s, weight_schedule(WeightScheme::geometric, 3));
    CHECK(loss.item() == doctest::Approx(2.108887).epsilon(1e-5));
}

TEST_CASE("progressive loss vanishes in the ordered large-margin limit") {
    const double m = 60.0;
    Tensor s = Tensor::from_data({1, 4}, {m, 0.0, -m, -2 * m});
    Tensor loss = progressive_ce(s, weight_schedule(WeightScheme::geometric, 3));
    CHECK(loss.item() < 1e-10);
}

TEST_CASE("progressive loss matches the extended-precision oracle") {
    PrecisionGuard g(Precision::f64);
    const auto w = weight_schedule(WeightScheme::geometric, 3);
    const std::vector<long double> wl(w.begin(), w.end());

    {
        Tensor s = Tensor::from_data({1, 4}, {4, 2, 0, -2});
        const long double ref = progressive_ce_oracle({4.0L, 2.0L, 0.0L, -2.0L}, wl);
        CHECK(progressive_ce(s, w).item() ==
              doctest::Approx(static_cast<double>(ref)).epsilon(1e-9));
    }
    Rng rng(77);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> vals(4);
        for (double& v : vals) v = rng.uniform(-8.0, 8.0);
        Tensor s = Tensor::from_data({1, 4}, std::vector<double>(vals));
        const long double ref =
            progressive_ce_oracle({vals[0], vals[1], vals[2], vals[3]}, wl);
        CHECK(std::abs(progressive_ce(s, w).item() - static_cast<double>(ref)) < 1e-6);
    }
}

TEST_CASE("standard cross-entropy examples") {
    Tensor s_r = Tensor::from_data({1}, {1.3});
    Tensor s_f = Tensor::from_data({1}, {1.3});
    CHECK(standard_ce(s_r, s_f, {0}).item() == doctest::Approx(std::log(2.0)));

    Tensor a = Tensor::from_data({1}, {2.0});
    Tensor b = Tensor::from_data({1}, {0.0});
    CHECK(standard_ce(a, b, {0}).item() == doctest::Approx(0.126928).epsilon(1e-5));
    CHECK(standard_ce(a, b, {1}).item() == doctest::Approx(2.126928).epsilon(1e-5));

    Tensor big = Tensor::from_data({1}, {80.0});
    CHECK(standard_ce(big, b, {0}).item() < 1e-12);
}

TEST_CASE("loss gradient pulls the top similarity up") {
    // Universally: dL/dS0 < 0, dL/dS_last > 0, and the row gradient sums to
    // zero (each suffix CE is shift-invariant). Signs of middle entries are
    // data-dependent.
    PrecisionGuard g(Precision::f64);
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor s = Tensor::randn({3, 4}, rng, 2.0);
        s.set_requires_grad(true);
        progressive_ce(s, weight_schedule(WeightScheme::geometric, 3)).backward();
        const auto& grad = s.grad();
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(grad[b * 4 + 0] < 0.0);
            CHECK(grad[b * 4 + 3] > 0.0);
            double row_sum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) row_sum += grad[b * 4 + j];
            CHECK(std::abs(row_sum) < 1e-9);
        }
    }
}

TEST_CASE("progressive loss gradient matches finite differences") {
    PrecisionGuard g(Precision::f64);
    Rng rng(6);
    Tensor s = Tensor::randn({4, 4}, rng, 2.0);
    s.set_requires_grad(true);
    const auto w = weight_schedule(WeightScheme::geometric, 3);
    auto fn = [&] { return progressive_ce(s, w); };
    auto report = check_gradients(fn, {{"S", s}}, 1e-6);
    CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("hierarchy rate counts strictly ordered rows") {
    Tensor s = Tensor::from_data({3, 3}, {3, 2, 1, 1, 2, 3, 5, 5, 1});
    CHECK(hierarchy_rate(s) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("loss config validation") {
    LossConfig cfg;
    cfg.depth = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.depth = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.depth = 3;
    cfg.validate();
    cfg.prior_prompt = false;
    CHECK(cfg.effective_depth() == 2);
}
