#pragma once

#include <string>
#include <utility>
#include <vector>

#include "backbone.hpp"
#include "ops.hpp"
#include "tensor.hpp"

namespace hamlet {

enum class Arrangement { rf_then_c, c_then_rf, split };
enum class Composition { all_learnable, no_context, fixed_rf };

Arrangement arrangement_from_string(const std::string& s);
Composition composition_from_string(const std::string& s);
std::string to_string(Arrangement a);
std::string to_string(Composition c);

struct PromptConfig {
    std::size_t num_real = 2;     // K_r
    std::size_t num_fake = 2;     // K_f
    std::size_t num_context = 16; // M
    Arrangement arrangement = Arrangement::rf_then_c;
    Composition composition = Composition::all_learnable;
    double dropout_rate = 0.1;

    void validate(const BackboneConfig& backbone) const;
    std::size_t context_tokens() const {
        return composition == Composition::no_context ? 0 : num_context;
    }
};

/// The three learnable embedding banks. Under fixed_rf the real/fake banks are
/// frozen copies of the tokenizer embeddings for "real"/"fake"; under
/// no_context the context bank is absent (undefined tensor).
struct PromptBank {
    Tensor real_bank;     // [K_r, d_t]
    Tensor fake_bank;     // [K_f, d_t]
    Tensor context_bank;  // [M, d_t] or undefined

    static PromptBank init(const PromptConfig& cfg, const Backbone& backbone,
                           const ToyTokenizer& tok, std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
    std::vector<std::pair<std::string, Tensor>> trainable_params(const std::string& prefix) const;
};

/// Bank dropout for one training step: train mode zeroes elements with the
/// configured probability and rescales survivors; eval mode is the identity.
Tensor bank_dropout(const Tensor& bank, double rate, Rng& rng, bool training);

/// Concatenates the conditioned class bank with the conditioned context bank
/// per the arrangement policy. Inputs are batched [B,K,d_t] / [B,M,d_t];
/// context may be undefined (no_context), in which case the class bank passes
/// through. split places ceil(M/2) context tokens before the class tokens.
Tensor arrange_prompt(const Tensor& class_bank, const Tensor& context_bank, Arrangement arrangement);

}  // namespace hamlet
