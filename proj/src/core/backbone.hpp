#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ops.hpp"
#include "tensor.hpp"

namespace hamlet {

struct BackboneConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 4;
    std::size_t vision_width = 64;   // d_v
    std::size_t vision_blocks = 8;
    int vision_heads = 4;
    std::vector<std::size_t> tap_blocks = {2, 4, 6, 8};  // 1-based, sorted
    std::size_t text_width = 48;     // d_t
    std::size_t text_blocks = 4;
    int text_heads = 4;
    std::size_t context_length = 32;
    std::size_t vocab_size = 256;
    std::size_t embed_dim = 32;      // d_e, shared projection space
    double temperature = 0.01;       // tau, frozen

    static BackboneConfig desk();
    static BackboneConfig paper();  // CLIP ViT-L/14 geometry

    std::size_t num_patches() const {
        const std::size_t g = image_size / patch_size;
        return g * g;
    }
    std::size_t num_levels() const { return tap_blocks.size(); }
    void validate() const;
};

/// Patch tokens from the tapped blocks, CLS excluded: [L, B, N, d_v].
struct MultiLevelFeatures {
    Tensor levels;
};

/// Projected class-token feature, not pre-normalized: [B, d_e].
struct ImageFeatures {
    Tensor v_cls;
};

/// Whitespace word tokenizer hashing into vocab buckets. Ids 0/1/2 are
/// start/end/pad; words land in [3, vocab).
struct ToyTokenizer {
    std::size_t vocab_size;
    static constexpr int kStart = 0;
    static constexpr int kEnd = 1;
    static constexpr int kPad = 2;
    std::vector<int> word_ids(const std::string& text) const;
};

struct TransformerBlockParams {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct VisionParams {
    Tensor patch_proj;   // [3*p*p, d_v]
    Tensor class_token;  // [1, d_v]
    Tensor pos_embed;    // [N+1, d_v]
    LayerNormParams ln_pre, ln_post;
    std::vector<TransformerBlockParams> blocks;
    Tensor proj;  // [d_v, d_e]
};

struct TextParams {
    Tensor token_embedding;  // [vocab, d_t]
    Tensor pos_embed;        // [context_length, d_t]
    std::vector<TransformerBlockParams> blocks;
    LayerNormParams ln_final;
    Tensor proj;  // [d_t, d_e]
};

/// Frozen CLIP-like dual encoder. All parameters are created non-trainable and
/// never touched by the optimizer; image encoding additionally runs under a
/// no-grad guard.
class Backbone {
public:
    static Backbone init(const BackboneConfig& cfg, std::uint64_t seed);

    const BackboneConfig& config() const { return cfg_; }

    std::pair<ImageFeatures, MultiLevelFeatures> encode_image(const Tensor& images) const;

    /// Raw word-embedding sequences in, pooled text features out. Start/end
    /// tokens are added around the sequence; the feature is read at the end
    /// position (T+1) after the final norm and projection. Differentiable
    /// w.r.t. embeds.
    Tensor encode_text_embeddings(const Tensor& embeds) const;

    /// Frozen encoding of the fixed prior prompt; computed once and cached.
    Tensor encode_prior_prompt(const ToyTokenizer& tok) const;

    bool prior_prompt_cached() const { return prior_cache_.defined(); }

    /// Rows of the frozen token-embedding table for a tokenized string.
    Tensor word_embeddings(const ToyTokenizer& tok, const std::string& text) const;

    std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;

    static const std::string kPriorPromptText;

private:
    BackboneConfig cfg_;
    VisionParams visual_;
    TextParams text_;
    mutable Tensor prior_cache_;

    Tensor run_blocks(Tensor x, const std::vector<TransformerBlockParams>& blocks,
                      const Tensor* mask, const std::vector<std::size_t>* taps,
                      std::vector<Tensor>* tap_out) const;
};

/// Eq.-1 style zero-shot rule: softmax over cos(v_cls, prompt_c)/tau.
Tensor zero_shot_probability(const Tensor& v_cls, const Tensor& prompt_feats, double tau);

/// Rowwise cosine of a [B,D] against b [B,D] -> [B]; rejects zero-norm rows.
Tensor rowwise_cosine(const Tensor& a, const Tensor& b);

}  // namespace hamlet
