#pragma once

#include <string>
#include <vector>

#include "model.hpp"
#include "trainer.hpp"

namespace hamlet {

struct DataConfig {
    std::vector<std::string> families = {"patch_swap", "hf_noise_blob"};
    std::size_t train_frames_per_class = 200;
    std::size_t test_frames_per_class = 100;
    std::size_t frames_per_video = 8;
    std::size_t image_size = 0;  // 0: follow backbone.image_size
    double norm_mean[3] = {0.5, 0.5, 0.5};
    double norm_std[3] = {0.5, 0.5, 0.5};
};

struct EvalConfig {
    std::size_t batch_size = 32;
};

/// The fully-resolved run configuration: sections backbone / prompts / fusion
/// / loss / train / data / eval plus the master seed and thread budget.
/// Unknown keys anywhere are rejected by name.
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    EvalConfig eval;

    static RunConfig desk_profile();
    static RunConfig paper_profile();
    static RunConfig from_profile(const std::string& name);

    /// Deep-merge of a JSON document over profile defaults, then validation.
    /// json_text may be empty (defaults only).
    static RunConfig resolve(const std::string& json_text, const std::string& profile);

    void validate() const;
    std::string to_json() const;

    PreprocessConfig preprocess_config() const;
};

}  // namespace hamlet
