#pragma once

#include <string>
#include <vector>

#include "config.hpp"
#include "evaluator.hpp"

namespace hamlet {

/// Corpus generation per the data section: for every family, a train and a
/// test manifest (<family>_train.jsonl / <family>_test.jsonl) of paired
/// real/fake frames. Returns a JSON summary of the written manifests.
std::string run_synth(const RunConfig& cfg, const std::string& out_dir);

struct TrainOutcome {
    std::string checkpoint;       // <out>/model.hmlt
    std::string init_checkpoint;  // <out>/model_init.hmlt (pre-training state)
    TrainLog log;
};

TrainOutcome run_train(const RunConfig& cfg, const std::string& train_manifest,
                       const std::string& out_dir);

/// Rebuilds the model from the checkpoint sidecar and evaluates the manifest.
/// Returns the MetricReport as JSON.
std::string run_eval(const std::string& checkpoint, const std::string& manifest, int threads);

/// 6x6 kind x severity sweep; writes perturb_frame_auc.csv,
/// perturb_video_auc.csv and perturb_long.csv under out_dir.
std::string run_perturb_eval(const std::string& checkpoint, const std::string& manifest,
                             const std::string& out_dir, int threads);

/// Named ablation axes over Table 3-7 style grids. values_csv optionally
/// overrides the default cell list (comma separated). Writes a CSV with the
/// fixed column order (config fields, then within metrics, then cross).
std::string run_ablate(const RunConfig& cfg, const std::string& axis,
                       const std::string& values_csv, const std::string& train_manifest,
                       const std::string& within_manifest, const std::string& cross_manifest,
                       const std::string& out_csv);

struct GradCheckSummary {
    double max_rel_err = 0.0;
    int configs = 0;
    double seconds = 0.0;
    std::string worst;
};

/// The acceptance gradient suite: n random small configurations varying
/// levels, token counts, and heads. f64 mode checks analytic vs central
/// differences; f32 mode checks f32-mode analytic gradients against the f64
/// finite-difference reference at identical parameters.
GradCheckSummary run_grad_check(Precision precision, std::uint64_t seed, int n_configs = 10);

bool run_verify_frozen(const std::string& before, const std::string& after);

/// Loads the checkpoint, encodes the image and writes one PGM attention map
/// per prompt token. Returns the number of files written.
int run_attn_export(const std::string& checkpoint, const std::string& image_path,
                    const std::string& out_dir, int threads);

/// Checkpoint sidecar helpers (<ckpt>.json holds the resolved config and the
/// training-log summary).
void write_sidecar(const std::string& checkpoint, const RunConfig& cfg, const TrainLog& log);
RunConfig read_sidecar_config(const std::string& checkpoint);

/// run.json: resolved config + seed + FNV-1a digests of the produced files.
void write_run_record(const std::string& out_dir, const RunConfig& cfg,
                      const std::vector<std::string>& artifacts);

}  // namespace hamlet
