#pragma once

#include <optional>
#include <string>
#include <vector>

#include "model.hpp"
#include "trainer.hpp"

namespace hamlet {

struct Prediction {
    double s_r = 0.0;
    double s_f = 0.0;
    double fake_score = 0.0;  // s_f - s_r; monotone in the decision rule
    int decision = 0;         // 1 = fake; ties classify fake
    int label = 0;
    std::string video_id;
};

/// Batched inference over a loaded dataset (dropout off, no gradients).
std::vector<Prediction> predict_dataset(const HamletModel& model, const LoadedDataset& data,
                                        std::size_t batch_size = 32);

/// Rank probability that a positive outranks a negative; ties count 1/2.
/// Requires both classes.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// AUC over per-video mean fake scores. Every prediction must carry a
/// video_id and videos must be single-label.
double video_auc(const std::vector<Prediction>& preds);

/// Rate at the FPR/FNR crossing, linearly interpolated between adjacent
/// thresholds of the score set.
double eer(const std::vector<double>& scores, const std::vector<int>& labels);

/// Step-wise average precision (mean precision at each positive, ranked by
/// descending score; ties broken by original index).
double ap(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricReport {
    double frame_auc = 0.0;
    std::optional<double> video_auc;
    double acc = 0.0;
    double ap = 0.0;
    double eer = 0.0;
    std::size_t num_frames = 0;
    std::size_t num_videos = 0;
    std::size_t num_real = 0;
    std::size_t num_fake = 0;

    std::string to_json() const;
};

MetricReport compute_metrics(const std::vector<Prediction>& preds);

/// kind x severity AUC grids (Fig. 3 protocol). Severity 0 is bit-identical
/// to the unperturbed pipeline.
struct PerturbGrid {
    double frame[kPerturbationKinds][6] = {};
    double video[kPerturbationKinds][6] = {};
};

PerturbGrid perturb_eval(const HamletModel& model, const std::vector<SampleRecord>& records,
                         std::uint64_t seed);

/// One grid cell: a named model configuration trained and evaluated with
/// shared seeds.
struct AblationCell {
    std::string name;
    ModelConfig config;
};

struct AblationResult {
    std::string name;
    bool failed = false;
    std::string error;
    MetricReport within;
    std::optional<MetricReport> cross;
};

std::vector<AblationResult> run_ablation(const std::vector<AblationCell>& cells,
                                         const std::vector<SampleRecord>& train_records,
                                         const std::vector<SampleRecord>& within_records,
                                         const std::vector<SampleRecord>* cross_records,
                                         const TrainConfig& tcfg);

/// One PGM per bank token: mean-over-heads cross-attention over the patch
/// grid, min-max normalized (flat maps render mid-gray). Returns the files
/// written.
std::vector<std::string> export_attention_maps(const HamletModel& model, const Tensor& image,
                                               const std::string& out_dir);

}  // namespace hamlet
