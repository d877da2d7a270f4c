#include "fusion.hpp"

#include <cmath>

namespace hamlet {

FusionParams FusionParams::init(std::size_t d_t, std::size_t d_v, const FusionConfig& cfg,
                                const FusionAblation& abl, std::uint64_t seed) {
    if (cfg.heads < 1 || d_v % static_cast<std::size_t>(cfg.heads) != 0 ||
        d_t % static_cast<std::size_t>(cfg.heads) != 0)
        throw ConfigError("fusion.heads: d_v and d_t must both be divisible by the head count");
    Rng rng = Rng(seed).derive("fusion");
    FusionParams p;
    p.mlp_w = Tensor::randn({d_t, 2 * d_v}, rng, 1.0 / std::sqrt(static_cast<double>(d_t)));
    p.mlp_b = Tensor::zeros({2 * d_v});
    p.ln_self = LayerNormParams::init(d_v);
    p.self_attn = AttentionParams::init(d_v, d_v, cfg.heads, rng, cfg.zero_init_out);
    p.ln_q = LayerNormParams::init(d_t);
    p.ln_k = LayerNormParams::init(d_v);
    p.cross_attn = AttentionParams::init(d_t, d_v, cfg.heads, rng, cfg.zero_init_out);
    if (!abl.v2t) {
        p.pool_w = Tensor::randn({d_v, d_t}, rng, 1.0 / std::sqrt(static_cast<double>(d_v)));
        p.pool_b = Tensor::zeros({d_t});
    }
    for (auto& [name, t] : p.named_params("")) {
        Tensor copy = t;
        copy.set_requires_grad(true);
    }
    return p;
}

std::vector<std::pair<std::string, Tensor>> FusionParams::named_params(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto attn = [&](const std::string& name, const AttentionParams& a) {
        out.emplace_back(prefix + name + ".wq", a.wq);
        out.emplace_back(prefix + name + ".bq", a.bq);
        out.emplace_back(prefix + name + ".wk", a.wk);
        out.emplace_back(prefix + name + ".wv", a.wv);
        out.emplace_back(prefix + name + ".bv", a.bv);
        out.emplace_back(prefix + name + ".wo", a.wo);
        out.emplace_back(prefix + name + ".bo", a.bo);
    };
    out.emplace_back(prefix + "mlp.w", mlp_w);
    out.emplace_back(prefix + "mlp.b", mlp_b);
    out.emplace_back(prefix + "ln_self.gain", ln_self.gain);
    out.emplace_back(prefix + "ln_self.bias", ln_self.bias);
    attn("self_attn", self_attn);
    out.emplace_back(prefix + "ln_q.gain", ln_q.gain);
    out.emplace_back(prefix + "ln_q.bias", ln_q.bias);
    out.emplace_back(prefix + "ln_k.gain", ln_k.gain);
    out.emplace_back(prefix + "ln_k.bias", ln_k.bias);
    attn("cross_attn", cross_attn);
    if (pool_w.defined()) {
        out.emplace_back(prefix + "pool.w", pool_w);
        out.emplace_back(prefix + "pool.b", pool_b);
    }
    return out;
}

ModulationParams modulation_params(const Tensor& bank, const FusionParams& p) {
    Tensor mu = mean_axis(bank, 1);                       // [B, d_t]
    Tensor gb = linear(silu(mu), p.mlp_w, p.mlp_b);       // [B, 2*d_v]
    const std::size_t dv = gb.size(1) / 2;
    return ModulationParams{slice(gb, 1, 0, dv), slice(gb, 1, dv, dv)};
}

Tensor text_to_visual(const Tensor& bank, const Tensor& levels, const FusionParams& p) {
    ModulationParams mod = modulation_params(bank, p);
    return film(levels, mod.gamma, mod.beta);  // [B,N,L,d_v]
}

Tensor levels_to_bnl(const Tensor& levels) { return permute(levels, {1, 2, 0, 3}); }

FusedVisual integrate_levels(const Tensor& modulated, const Tensor& residual_levels,
                             const FusionParams& p) {
    if (modulated.ndim() != 4 || modulated.shape() != residual_levels.shape())
        throw ConfigError("integrate_levels: expected matching [B,N,L,D] stacks");
    const std::size_t B = modulated.size(0), N = modulated.size(1), L = modulated.size(2),
                      D = modulated.size(3);
    Tensor x = reshape(modulated, {B * N, L, D});
    Tensor h = layer_norm(x, p.ln_self);
    Tensor a = multihead_attention(h, h, h, p.self_attn);
    Tensor fused = add(reshape(residual_levels, {B * N, L, D}), a);
    return FusedVisual{reshape(mean_axis(fused, 1), {B, N, D})};
}

Tensor visual_to_text(const Tensor& bank, const Tensor& z_avg, const FusionParams& p,
                      Tensor* attn_weights_out) {
    Tensor q = layer_norm(bank, p.ln_q);
    Tensor kv = layer_norm(z_avg, p.ln_k);  // value = key tensor
    Tensor att = multihead_attention(q, kv, kv, p.cross_attn, nullptr, attn_weights_out);
    return add(bank, att);
}

Tensor fuse(const Tensor& bank, const Tensor& levels, const FusionParams& p,
            const FusionAblation& abl, Tensor* attn_weights_out) {
    if (abl.all_off()) return bank;
    Tensor raw = levels_to_bnl(levels);  // [B,N,L,D]
    Tensor modulated = abl.t2v ? text_to_visual(bank, levels, p) : raw;
    Tensor z_avg = abl.self_attn ? integrate_levels(modulated, raw, p).z_avg
                                 : mean_axis(modulated, 2);
    if (abl.v2t) return visual_to_text(bank, z_avg, p, attn_weights_out);
    if (!p.pool_w.defined())
        throw ConfigError("fusion: v2t-off ablation requires the pooling projection");
    Tensor pooled = linear(mean_axis(z_avg, 1), p.pool_w, p.pool_b);  // [B, d_t]
    return add_rowvec(bank, pooled);
}

}  // namespace hamlet
