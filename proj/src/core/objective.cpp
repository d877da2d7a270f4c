#include "objective.hpp"

#include <cmath>

#include "backbone.hpp"

namespace hamlet {

WeightScheme weight_scheme_from_string(const std::string& s) {
    if (s == "geometric") return WeightScheme::geometric;
    if (s == "uniform") return WeightScheme::uniform;
    if (s == "linear") return WeightScheme::linear;
    if (s == "harmonic") return WeightScheme::harmonic;
    if (s == "cosine") return WeightScheme::cosine;
    throw ConfigError("loss.scheme: unknown value '" + s + "'");
}

std::string to_string(WeightScheme s) {
    switch (s) {
        case WeightScheme::geometric: return "geometric";
        case WeightScheme::uniform: return "uniform";
        case WeightScheme::linear: return "linear";
        case WeightScheme::harmonic: return "harmonic";
        case WeightScheme::cosine: return "cosine";
    }
    return "?";
}

ObjectiveVariant objective_variant_from_string(const std::string& s) {
    if (s == "hierarchy") return ObjectiveVariant::hierarchy;
    if (s == "standard_ce") return ObjectiveVariant::standard_ce;
    throw ConfigError("loss.objective: unknown value '" + s + "'");
}

std::string to_string(ObjectiveVariant v) {
    return v == ObjectiveVariant::hierarchy ? "hierarchy" : "standard_ce";
}

void LossConfig::validate() const {
    if (depth < 1) throw ConfigError("loss.depth: must be >= 1");
    if (depth > 3) throw ConfigError("loss.depth: must be <= 3");
    // prior off shortens |S| to 3; effective_depth() clamps accordingly
}

std::vector<double> weight_schedule(WeightScheme scheme, int depth) {
    if (depth < 1) throw ConfigError("weight_schedule: depth must be >= 1");
    std::vector<double> w(static_cast<std::size_t>(depth));
    for (int i = 0; i < depth; ++i) {
        switch (scheme) {
            case WeightScheme::geometric: w[i] = std::pow(0.5, i); break;
            case WeightScheme::uniform: w[i] = 1.0; break;
            case WeightScheme::linear: w[i] = 1.0 - static_cast<double>(i) / 3.0; break;
            case WeightScheme::harmonic: w[i] = 1.0 / (i + 1.0); break;
            case WeightScheme::cosine: w[i] = std::cos(i * 3.14159265358979323846 / 6.0); break;
        }
    }
    return w;
}

Tensor similarity_matrix(const Tensor& v_cls, const Tensor& t_r, const Tensor& t_f,
                         const Tensor& t_c, const Tensor& t_pr, double tau,
                         const std::vector<int>& labels, const LossConfig& cfg) {
    if (!(tau > 0.0)) throw ConfigError("similarity: tau must be > 0");
    const std::size_t B = v_cls.size(0);
    if (labels.size() != B) throw ConfigError("similarity: labels length mismatch");

    Tensor s_r = scale(rowwise_cosine(v_cls, t_r), 1.0 / tau);
    Tensor s_f = scale(rowwise_cosine(v_cls, t_f), 1.0 / tau);
    Tensor s_c = scale(rowwise_cosine(v_cls, t_c), 1.0 / tau);

    // Per-row label selection: first = correct class, third = the other one.
    std::vector<double> fake_mask(B), real_mask(B);
    for (std::size_t b = 0; b < B; ++b) {
        fake_mask[b] = labels[b] ? 1.0 : 0.0;
        real_mask[b] = labels[b] ? 0.0 : 1.0;
    }
    Tensor mf = Tensor::from_data({B}, std::move(fake_mask));
    Tensor mr = Tensor::from_data({B}, std::move(real_mask));
    Tensor first = add(mul(mf, s_f), mul(mr, s_r));
    Tensor third = add(mul(mf, s_r), mul(mr, s_f));

    std::vector<Tensor> cols{reshape(first, {B, 1}), reshape(s_c, {B, 1}), reshape(third, {B, 1})};
    if (cfg.prior_prompt) {
        if (!t_pr.defined()) throw ConfigError("similarity: prior feature required but missing");
        Tensor s_pr = scale(rowwise_cosine(v_cls, broadcast0(reshape(t_pr, {t_pr.numel()}), B)),
                            1.0 / tau);
        cols.push_back(reshape(s_pr, {B, 1}));
    }
    return concat(cols, 1);  // [B, 3 or 4]
}

Tensor progressive_ce(const Tensor& similarities, const std::vector<double>& weights) {
    const std::size_t k = similarities.shape().back();
    if (weights.empty() || weights.size() > k - 1)
        throw ConfigError("progressive_ce: need 1 <= depth <= |S|-1");
    Tensor total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        Tensor term = scale(cross_entropy_first(slice(similarities, 1, i, k - i)), weights[i]);
        total = total.defined() ? add(total, term) : term;
    }
    return mean_all(total);
}

Tensor standard_ce(const Tensor& s_r, const Tensor& s_f, const std::vector<int>& labels) {
    const std::size_t B = s_r.size(0);
    if (labels.size() != B) throw ConfigError("standard_ce: labels length mismatch");
    std::vector<double> fake_mask(B), real_mask(B);
    for (std::size_t b = 0; b < B; ++b) {
        fake_mask[b] = labels[b] ? 1.0 : 0.0;
        real_mask[b] = labels[b] ? 0.0 : 1.0;
    }
    Tensor mf = Tensor::from_data({B}, std::move(fake_mask));
    Tensor mr = Tensor::from_data({B}, std::move(real_mask));
    Tensor correct = add(mul(mf, s_f), mul(mr, s_r));
    Tensor wrong = add(mul(mf, s_r), mul(mr, s_f));
    Tensor pair = concat({reshape(correct, {B, 1}), reshape(wrong, {B, 1})}, 1);
    return mean_all(cross_entropy_first(pair));
}

double hierarchy_rate(const Tensor& similarities) {
    const std::size_t k = similarities.shape().back();
    const std::size_t B = similarities.numel() / k;
    if (B == 0) return 0.0;
    std::size_t ok = 0;
    const auto& s = similarities.data();
    for (std::size_t b = 0; b < B; ++b) {
        bool ordered = true;
        for (std::size_t i = 0; i + 1 < k; ++i)
            if (!(s[b * k + i] > s[b * k + i + 1])) ordered = false;
        if (ordered) ++ok;
    }
    return static_cast<double>(ok) / static_cast<double>(B);
}

}  // namespace hamlet
