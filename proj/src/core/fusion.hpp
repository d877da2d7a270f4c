#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace hamlet {

struct FusionConfig {
    int heads = 4;
    // Zero attention output projections for identity-start training. Off by
    // default: a zeroed projection blocks gradient flow to everything behind
    // it on the first step.
    bool zero_init_out = false;
};

/// Table-3 style component switches. All three off is the prompt-tuning-only
/// path (banks feed the text encoder directly).
struct FusionAblation {
    bool t2v = true;
    bool self_attn = true;
    bool v2t = true;
    bool all_off() const { return !t2v && !self_attn && !v2t; }
};

struct FusionParams {
    Tensor mlp_w, mlp_b;        // SiLU -> linear, d_t -> 2*d_v
    LayerNormParams ln_self;    // over d_v
    AttentionParams self_attn;  // embed d_v
    LayerNormParams ln_q;       // over d_t
    LayerNormParams ln_k;       // over d_v
    AttentionParams cross_attn;  // query d_t, key/value source d_v
    Tensor pool_w, pool_b;  // d_v -> d_t; allocated only for the v2t-off ablation

    static FusionParams init(std::size_t d_t, std::size_t d_v, const FusionConfig& cfg,
                             const FusionAblation& abl, std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
};

struct ModulationParams {
    Tensor gamma;  // [B, d_v]
    Tensor beta;   // [B, d_v]
};

struct FusedVisual {
    Tensor z_avg;  // [B, N, d_v]
};

/// Eqs. 2-4: pool the bank over tokens, map through SiLU+linear to per-image
/// scale/shift, and modulate every patch embedding at every level.
/// Returns the modulated stack as [B,N,L,d_v].
Tensor text_to_visual(const Tensor& bank, const Tensor& levels, const FusionParams& p);

ModulationParams modulation_params(const Tensor& bank, const FusionParams& p);

/// Eq. 5 with the residual taken from the raw (unmodulated) level embeddings:
/// layer norm -> self-attention over the level axis (no positional encoding)
/// -> add raw levels -> mean over levels.
FusedVisual integrate_levels(const Tensor& modulated, const Tensor& residual_levels,
                             const FusionParams& p);

/// Eq. 6: E' = E + CrossAttention(ln_q(E), ln_k(Z_avg), ln_k(Z_avg)).
Tensor visual_to_text(const Tensor& bank, const Tensor& z_avg, const FusionParams& p,
                      Tensor* attn_weights_out = nullptr);

/// [L,B,N,D] -> [B,N,L,D] view of the raw levels (taps carry no graph).
Tensor levels_to_bnl(const Tensor& levels);

/// Full bidirectional pass for one bank, honoring the ablation switches:
///   t2v off      -> raw levels instead of FiLM-modulated ones
///   self_attn off-> plain mean over levels
///   v2t off      -> E + broadcast(linear(mean over patches of Z_avg))
/// All three off -> identity on the bank.
Tensor fuse(const Tensor& bank, const Tensor& levels, const FusionParams& p,
            const FusionAblation& abl, Tensor* attn_weights_out = nullptr);

}  // namespace hamlet
