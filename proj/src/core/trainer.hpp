#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "data.hpp"
#include "model.hpp"

namespace hamlet {

struct TrainConfig {
    int epochs = 20;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double grad_clip = 0.0;  // 0 disables clipping
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
        if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
    }
};

struct TrainLog {
    std::vector<double> step_loss;
    std::vector<double> epoch_mean_loss;
    std::vector<double> epoch_hierarchy_rate;
};

/// Decoupled-weight-decay Adam over the registered (trainable) tensors.
/// Frozen tensors are never registered, so they cannot be touched.
class AdamW {
public:
    explicit AdamW(std::vector<std::pair<std::string, Tensor>> params);

    /// One update from the accumulated gradients. Rejects non-finite
    /// gradients with a diagnostic naming the parameter.
    void step(const TrainConfig& cfg);
    void zero_grad();

    long step_count() const { return step_count_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

    /// Moment buffers for checkpointing, named optimizer.m.* / optimizer.v.*
    /// plus optimizer.step.
    std::vector<std::pair<std::string, Tensor>> state_tensors() const;
    void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors);

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<Tensor> m_, v_;
    long step_count_ = 0;
};

/// Decoded and preprocessed samples held in memory, plus the frozen-backbone
/// feature cache (v_cls and taps are constants of a frozen encoder).
struct LoadedDataset {
    std::vector<SampleRecord> records;
    std::vector<Tensor> images;  // preprocessed [3,S,S]

    static LoadedDataset load(const std::vector<SampleRecord>& records,
                              const PreprocessConfig& cfg);
};

struct FeatureCache {
    std::vector<Tensor> v_cls;   // per sample [1, d_e]
    std::vector<Tensor> levels;  // per sample [L, 1, N, d_v]

    static FeatureCache build(const HamletModel& model, const std::vector<Tensor>& images);
    /// Assembles batch tensors for the given sample indices.
    std::pair<Tensor, Tensor> gather(const std::vector<std::size_t>& idx) const;
};

/// Full training loop: shuffled epochs from the epoch-indexed seed, bank
/// dropout, fusion per ablation flags, progressive (or standard) CE, backward,
/// optional clipping, AdamW. Deterministic under cfg.seed. Throws on
/// non-finite loss naming the step.
TrainLog train(HamletModel& model, const LoadedDataset& data, const TrainConfig& cfg,
               AdamW& optimizer);

void save_model_checkpoint(const std::string& path, const HamletModel& model,
                           const AdamW* optimizer);
void load_model_checkpoint(const std::string& path, HamletModel& model);

}  // namespace hamlet
