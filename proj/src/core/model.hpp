#pragma once

#include <string>
#include <utility>
#include <vector>

#include "backbone.hpp"
#include "data.hpp"
#include "fusion.hpp"
#include "objective.hpp"
#include "prompt_bank.hpp"

namespace hamlet {

struct ModelConfig {
    BackboneConfig backbone;
    PromptConfig prompts;
    FusionConfig fusion;
    FusionAblation ablation;
    LossConfig loss;

    void validate() const {
        backbone.validate();
        prompts.validate(backbone);
        loss.validate();
    }
    PreprocessConfig preprocess_config() const {
        PreprocessConfig p;
        p.image_size = backbone.image_size;
        return p;
    }
};

/// Conditioned prompt features in the shared embedding space. t_pr stays
/// undefined when prior regularization is off (that code path never computes
/// it).
struct PromptFeatures {
    Tensor t_r, t_f, t_c;  // [B, d_e]
    Tensor t_pr;           // [1, d_e] frozen, or undefined
};

/// Cross-attention weights over patches, one per bank: [B,H,K,N].
struct AttentionCapture {
    Tensor real, fake, context;
};

/// Frozen backbone + prompt banks + fusion plugin, wired per the ablation and
/// loss configuration.
class HamletModel {
public:
    static HamletModel create(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const Backbone& backbone() const { return backbone_; }
    PromptBank& bank() { return bank_; }
    FusionParams& fusion() { return fusion_; }
    const ToyTokenizer& tokenizer() const { return tokenizer_; }

    /// Image -> (v_cls, taps); thin forwarding kept here so callers hold one
    /// object.
    std::pair<ImageFeatures, MultiLevelFeatures> encode_image(const Tensor& images) const {
        return backbone_.encode_image(images);
    }

    /// Banks -> dropout (train only) -> fuse -> arrange -> text encoder.
    PromptFeatures encode_prompts(const Tensor& levels, bool training, Rng* dropout_rng,
                                  AttentionCapture* capture = nullptr) const;

    /// Batch loss per the configured objective; hierarchy satisfaction rate of
    /// the batch is written to hier_rate_out when given.
    Tensor training_loss(const Tensor& v_cls, const Tensor& levels,
                         const std::vector<int>& labels, Rng& dropout_rng,
                         double* hier_rate_out = nullptr) const;

    /// Inference similarities (Eq. 10): plain cosines, no temperature.
    struct EvalScores {
        std::vector<double> s_r, s_f;
    };
    EvalScores eval_scores(const Tensor& v_cls, const Tensor& levels) const;

    bool prior_prompt_cached() const;

    std::vector<std::pair<std::string, Tensor>> trainable_params() const;
    std::vector<std::pair<std::string, Tensor>> all_params() const;

    /// Overwrites parameter values in place from a checkpoint (by name).
    void load_parameters(const std::vector<std::pair<std::string, Tensor>>& tensors);

private:
    ModelConfig cfg_;
    Backbone backbone_;
    PromptBank bank_;
    FusionParams fusion_;
    ToyTokenizer tokenizer_;
};

}  // namespace hamlet
