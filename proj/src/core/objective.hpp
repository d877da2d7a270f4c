#pragma once

#include <string>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace hamlet {

enum class WeightScheme { geometric, uniform, linear, harmonic, cosine };
enum class ObjectiveVariant { hierarchy, standard_ce };

WeightScheme weight_scheme_from_string(const std::string& s);
std::string to_string(WeightScheme s);
ObjectiveVariant objective_variant_from_string(const std::string& s);
std::string to_string(ObjectiveVariant v);

struct LossConfig {
    WeightScheme scheme = WeightScheme::geometric;
    int depth = 3;  // number of suffixes; forced to |S|-1 when the prior is off
    bool prior_prompt = true;
    ObjectiveVariant variant = ObjectiveVariant::hierarchy;

    int effective_depth() const { return prior_prompt ? depth : std::min(depth, 2); }
    std::size_t similarity_length() const { return prior_prompt ? 4 : 3; }
    void validate() const;
};

/// Per-position loss weights: geometric (0.5)^i, uniform 1, linear 1-i/3,
/// harmonic 1/(i+1), cosine cos(i*pi/6).
std::vector<double> weight_schedule(WeightScheme scheme, int depth = 3);

/// Per-sample similarity rows ordered by label (Eq. 8):
///   real: [s_r, s_c, s_f, (s_pr)]   fake: [s_f, s_c, s_r, (s_pr)]
/// t_pr is ignored (and must be left undefined) when the prior is disabled.
/// Shapes: v_cls [B,d_e]; t_r/t_f/t_c [B,d_e]; t_pr [1,d_e]; labels[b] in {0,1}.
Tensor similarity_matrix(const Tensor& v_cls, const Tensor& t_r, const Tensor& t_f,
                         const Tensor& t_c, const Tensor& t_pr, double tau,
                         const std::vector<int>& labels, const LossConfig& cfg);

/// Eq. 9 over a batch of similarity rows: mean_b sum_i w_i * CE(S[b,i:], 0).
Tensor progressive_ce(const Tensor& similarities, const std::vector<double>& weights);

/// Ablation baseline: binary cross-entropy over softmax([s_correct, s_wrong]).
Tensor standard_ce(const Tensor& s_r, const Tensor& s_f, const std::vector<int>& labels);

/// Fraction of rows whose similarities are strictly decreasing.
double hierarchy_rate(const Tensor& similarities);

}  // namespace hamlet
