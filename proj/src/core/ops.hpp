#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace hamlet {

// Elementwise (same shape)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor sqrt_t(const Tensor& x);

// Shape
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose_last(const Tensor& x);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor stack0(const std::vector<Tensor>& parts);

/// Prepends a batch axis by tiling: [s...] -> [copies, s...]. Gradient sums
/// over the new axis.
Tensor broadcast0(const Tensor& x, std::size_t copies);

/// x[b,t,:] + v[b,:] for x [B,T,D], v [B,D].
Tensor add_rowvec(const Tensor& x, const Tensor& v);

// Reductions
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

/// x [..., in] @ W [in, out] (+ b [out] when defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());

/// Batched matmul: [..., M, K] x [..., K, N] with identical leading dims.
Tensor bmm(const Tensor& a, const Tensor& b);

Tensor softmax_lastdim(const Tensor& x);

/// -log softmax(x)[..., 0]; the stable logsumexp form.
Tensor cross_entropy_first(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

struct LayerNormParams {
    Tensor gain, bias;
    static LayerNormParams init(std::size_t dim);
};
Tensor layer_norm(const Tensor& x, const LayerNormParams& p, double eps = 1e-5);

/// Train mode: zero each element with probability rate, scale survivors by
/// 1/(1-rate). Eval mode or rate 0: returns x itself (bit-exact identity).
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training);

/// FiLM: out[b,n,l,:] = levels[l,b,n,:] * (gamma[b,:] + 1) + beta[b,:].
Tensor film(const Tensor& levels, const Tensor& gamma, const Tensor& beta);

/// scores [B,H,Lq,Lk] + mask [Lq,Lk] (mask is a non-trainable constant).
Tensor add_mask(const Tensor& scores, const Tensor& mask);

struct AttentionParams {
    int heads = 1;
    Tensor wq, bq;  // [dq, dq], [dq]
    Tensor wk;      // [dk, dq]; key bias omitted: softmax cancels it exactly
    Tensor wv, bv;  // [dk, dq], [dq]
    Tensor wo, bo;  // [dq, dq], [dq]

    static AttentionParams init(std::size_t dq, std::size_t dk, int heads, Rng& rng,
                                bool zero_init_out = false);
    std::size_t query_dim() const { return wq.size(0); }
    std::size_t key_dim() const { return wk.size(0); }
};

/// Scaled dot-product attention with per-head split, asymmetric key/value
/// source dims, optional additive mask, optional capture of the post-softmax
/// weights [B,H,Lq,Lk].
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const AttentionParams& p, const Tensor* mask = nullptr,
                           Tensor* attn_weights_out = nullptr);

}  // namespace hamlet
