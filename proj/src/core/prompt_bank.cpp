#include "prompt_bank.hpp"

#include <cmath>

namespace hamlet {

Arrangement arrangement_from_string(const std::string& s) {
    if (s == "rf_then_c") return Arrangement::rf_then_c;
    if (s == "c_then_rf") return Arrangement::c_then_rf;
    if (s == "split") return Arrangement::split;
    throw ConfigError("prompts.arrangement: unknown value '" + s + "'");
}

Composition composition_from_string(const std::string& s) {
    if (s == "all_learnable") return Composition::all_learnable;
    if (s == "no_context") return Composition::no_context;
    if (s == "fixed_rf") return Composition::fixed_rf;
    throw ConfigError("prompts.composition: unknown value '" + s + "'");
}

std::string to_string(Arrangement a) {
    switch (a) {
        case Arrangement::rf_then_c: return "rf_then_c";
        case Arrangement::c_then_rf: return "c_then_rf";
        case Arrangement::split: return "split";
    }
    return "?";
}

std::string to_string(Composition c) {
    switch (c) {
        case Composition::all_learnable: return "all_learnable";
        case Composition::no_context: return "no_context";
        case Composition::fixed_rf: return "fixed_rf";
    }
    return "?";
}

void PromptConfig::validate(const BackboneConfig& backbone) const {
    if (num_real < 1 || num_fake < 1)
        throw ConfigError("prompts: K_r and K_f must be >= 1");
    if (composition != Composition::no_context && num_context < 1)
        throw ConfigError("prompts.M: context tokens must be >= 1 unless composition is no_context");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigError("prompts.dropout: must be in [0,1)");
    const std::size_t k_max = std::max(num_real, num_fake);
    if (k_max + context_tokens() + 2 > backbone.context_length)
        throw ConfigError("prompts.M: K + M + 2 = " +
                          std::to_string(k_max + context_tokens() + 2) +
                          " exceeds context_length " + std::to_string(backbone.context_length));
}

namespace {
// fixed_rf: tokenizer embedding of the class word, tiled to fill K rows.
Tensor fixed_word_bank(const Backbone& bb, const ToyTokenizer& tok, const std::string& word,
                       std::size_t k) {
    Tensor rows = bb.word_embeddings(tok, word);  // [n, d_t]
    std::vector<Tensor> tiles;
    for (std::size_t i = 0; i < k; ++i)
        tiles.push_back(slice(rows, 0, i % rows.size(0), 1));
    return concat(tiles, 0).detach();
}
}  // namespace

PromptBank PromptBank::init(const PromptConfig& cfg, const Backbone& backbone,
                            const ToyTokenizer& tok, std::uint64_t seed) {
    cfg.validate(backbone.config());
    const std::size_t dt = backbone.config().text_width;
    const double s = 1.0 / std::sqrt(static_cast<double>(dt));
    Rng rng = Rng(seed).derive("prompts");
    PromptBank bank;
    if (cfg.composition == Composition::fixed_rf) {
        bank.real_bank = fixed_word_bank(backbone, tok, "real", cfg.num_real);
        bank.fake_bank = fixed_word_bank(backbone, tok, "fake", cfg.num_fake);
    } else {
        bank.real_bank = Tensor::randn({cfg.num_real, dt}, rng, s).set_requires_grad(true);
        bank.fake_bank = Tensor::randn({cfg.num_fake, dt}, rng, s).set_requires_grad(true);
    }
    if (cfg.composition != Composition::no_context)
        bank.context_bank = Tensor::randn({cfg.num_context, dt}, rng, s).set_requires_grad(true);
    return bank;
}

std::vector<std::pair<std::string, Tensor>> PromptBank::named_params(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back(prefix + "real", real_bank);
    out.emplace_back(prefix + "fake", fake_bank);
    if (context_bank.defined()) out.emplace_back(prefix + "context", context_bank);
    return out;
}

std::vector<std::pair<std::string, Tensor>> PromptBank::trainable_params(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (auto& [name, t] : named_params(prefix))
        if (t.requires_grad()) out.emplace_back(name, t);
    return out;
}

Tensor bank_dropout(const Tensor& bank, double rate, Rng& rng, bool training) {
    return dropout(bank, rate, rng, training);
}

Tensor arrange_prompt(const Tensor& class_bank, const Tensor& context_bank,
                      Arrangement arrangement) {
    if (!context_bank.defined()) return class_bank;
    if (class_bank.size(2) != context_bank.size(2) || class_bank.size(0) != context_bank.size(0))
        throw ConfigError("arrange_prompt: class/context banks disagree on batch or width");
    switch (arrangement) {
        case Arrangement::rf_then_c:
            return concat({class_bank, context_bank}, 1);
        case Arrangement::c_then_rf:
            return concat({context_bank, class_bank}, 1);
        case Arrangement::split: {
            const std::size_t m = context_bank.size(1);
            const std::size_t head = (m + 1) / 2;  // odd M: extra token leads
            return concat({slice(context_bank, 1, 0, head), class_bank,
                           slice(context_bank, 1, head, m - head)},
                          1);
        }
    }
    throw ConfigError("arrange_prompt: unknown arrangement");
}

}  // namespace hamlet
