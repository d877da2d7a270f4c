#include "model.hpp"

#include <map>

namespace hamlet {

HamletModel HamletModel::create(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    HamletModel m;
    m.cfg_ = cfg;
    m.tokenizer_ = ToyTokenizer{cfg.backbone.vocab_size};
    m.backbone_ = Backbone::init(cfg.backbone, seed);
    m.bank_ = PromptBank::init(cfg.prompts, m.backbone_, m.tokenizer_, seed);
    m.fusion_ = FusionParams::init(cfg.backbone.text_width, cfg.backbone.vision_width, cfg.fusion,
                                   cfg.ablation, seed);
    return m;
}

PromptFeatures HamletModel::encode_prompts(const Tensor& levels, bool training, Rng* dropout_rng,
                                           AttentionCapture* capture) const {
    if (levels.ndim() != 4) throw ConfigError("encode_prompts: levels must be [L,B,N,d_v]");
    const std::size_t B = levels.size(1);
    const double rate = cfg_.prompts.dropout_rate;

    // Batched bank copies; dropout masks are drawn per sample in train mode.
    auto prep = [&](const Tensor& bank) {
        Tensor batched = broadcast0(bank, B);
        if (training && dropout_rng) return dropout(batched, rate, *dropout_rng, true);
        return batched;
    };
    Tensor e_r = prep(bank_.real_bank);
    Tensor e_f = prep(bank_.fake_bank);
    Tensor e_c = bank_.context_bank.defined() ? prep(bank_.context_bank) : Tensor();

    // The three banks share one fusion parameter set but fuse independently.
    Tensor fused_c;
    if (e_c.defined())
        fused_c = fuse(e_c, levels, fusion_, cfg_.ablation,
                       capture ? &capture->context : nullptr);
    Tensor fused_r = fuse(e_r, levels, fusion_, cfg_.ablation, capture ? &capture->real : nullptr);
    Tensor fused_f = fuse(e_f, levels, fusion_, cfg_.ablation, capture ? &capture->fake : nullptr);

    PromptFeatures out;
    out.t_r = backbone_.encode_text_embeddings(
        arrange_prompt(fused_r, fused_c, cfg_.prompts.arrangement));
    out.t_f = backbone_.encode_text_embeddings(
        arrange_prompt(fused_f, fused_c, cfg_.prompts.arrangement));
    // Context-only prompt; under no_context this is the empty sequence.
    out.t_c = backbone_.encode_text_embeddings(
        fused_c.defined() ? fused_c : Tensor::zeros({B, 0, cfg_.backbone.text_width}));
    if (cfg_.loss.prior_prompt) out.t_pr = backbone_.encode_prior_prompt(tokenizer_);
    return out;
}

Tensor HamletModel::training_loss(const Tensor& v_cls, const Tensor& levels,
                                  const std::vector<int>& labels, Rng& dropout_rng,
                                  double* hier_rate_out) const {
    PromptFeatures pf = encode_prompts(levels, true, &dropout_rng);
    Tensor sims = similarity_matrix(v_cls, pf.t_r, pf.t_f, pf.t_c, pf.t_pr,
                                    cfg_.backbone.temperature, labels, cfg_.loss);
    if (hier_rate_out) *hier_rate_out = hierarchy_rate(sims);
    if (cfg_.loss.variant == ObjectiveVariant::standard_ce) {
        const double inv_tau = 1.0 / cfg_.backbone.temperature;
        Tensor s_r = scale(rowwise_cosine(v_cls, pf.t_r), inv_tau);
        Tensor s_f = scale(rowwise_cosine(v_cls, pf.t_f), inv_tau);
        return standard_ce(s_r, s_f, labels);
    }
    return progressive_ce(sims, weight_schedule(cfg_.loss.scheme, cfg_.loss.effective_depth()));
}

HamletModel::EvalScores HamletModel::eval_scores(const Tensor& v_cls, const Tensor& levels) const {
    NoGradGuard ng;
    PromptFeatures pf = encode_prompts(levels, false, nullptr);
    Tensor s_r = rowwise_cosine(v_cls, pf.t_r);
    Tensor s_f = rowwise_cosine(v_cls, pf.t_f);
    return EvalScores{s_r.data(), s_f.data()};
}

bool HamletModel::prior_prompt_cached() const { return backbone_.prior_prompt_cached(); }

std::vector<std::pair<std::string, Tensor>> HamletModel::trainable_params() const {
    std::vector<std::pair<std::string, Tensor>> out = bank_.trainable_params("prompts.");
    if (!cfg_.ablation.all_off())
        for (auto& [name, t] : fusion_.named_params("fusion."))
            if (t.requires_grad()) out.emplace_back(name, t);
    return out;
}

std::vector<std::pair<std::string, Tensor>> HamletModel::all_params() const {
    std::vector<std::pair<std::string, Tensor>> out = backbone_.named_params("backbone.");
    for (auto& p : bank_.named_params("prompts.")) out.push_back(p);
    for (auto& p : fusion_.named_params("fusion.")) out.push_back(p);
    return out;
}

void HamletModel::load_parameters(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::map<std::string, Tensor> by_name;
    for (const auto& [name, t] : tensors) by_name.emplace(name, t);
    for (auto& [name, t] : all_params()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw DataError("checkpoint: missing tensor " + name);
        if (it->second.shape() != t.shape())
            throw DataError("checkpoint: shape mismatch for " + name + ": expected " +
                            shape_str(t.shape()) + ", got " + shape_str(it->second.shape()));
        Tensor dst = t;
        dst.data() = it->second.data();
    }
}

}  // namespace hamlet
