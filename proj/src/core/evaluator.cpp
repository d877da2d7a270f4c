#include "evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace hamlet {

std::vector<Prediction> predict_dataset(const HamletModel& model, const LoadedDataset& data,
                                        std::size_t batch_size) {
    std::vector<Prediction> preds(data.records.size());
    const std::size_t n_batches = (data.records.size() + batch_size - 1) / batch_size;
    parallel_for(n_batches, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            const std::size_t begin = b * batch_size;
            const std::size_t end = std::min(data.records.size(), begin + batch_size);
            std::vector<Tensor> imgs;
            imgs.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                const auto& img = data.images[i];
                imgs.push_back(reshape(img, {1, img.size(0), img.size(1), img.size(2)}));
            }
            auto [feat, levels] = model.encode_image(concat(imgs, 0));
            auto scores = model.eval_scores(feat.v_cls, levels.levels);
            for (std::size_t i = begin; i < end; ++i) {
                Prediction& p = preds[i];
                p.s_r = scores.s_r[i - begin];
                p.s_f = scores.s_f[i - begin];
                p.fake_score = p.s_f - p.s_r;
                p.decision = p.s_f >= p.s_r ? 1 : 0;  // tie -> fake
                p.label = data.records[i].label;
                p.video_id = data.records[i].video_id;
            }
        }
    });
    return preds;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("auc: scores/labels size mismatch or empty");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc: needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // average ranks over tie groups (1-based)
    std::vector<double> rank(scores.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k]) pos_rank_sum += rank[k];
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double video_auc(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw DataError("video_auc: empty prediction set");
    std::map<std::string, std::pair<double, std::size_t>> sums;  // id -> (sum, count)
    std::map<std::string, int> vlabel;
    for (const auto& p : preds) {
        if (p.video_id.empty()) throw DataError("video_auc: prediction without video_id");
        auto [it, inserted] = vlabel.emplace(p.video_id, p.label);
        if (!inserted && it->second != p.label)
            throw DataError("video_auc: mixed labels within video " + p.video_id);
        auto& s = sums[p.video_id];
        s.first += p.fake_score;
        s.second += 1;
    }
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& [id, s] : sums) {
        scores.push_back(s.first / static_cast<double>(s.second));
        labels.push_back(vlabel[id]);
    }
    return auc(scores, labels);
}

double eer(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("eer: scores/labels size mismatch or empty");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l);
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("eer: needs both classes");

    std::vector<double> thresholds(scores);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    // operating point for "predict fake iff score >= t", starting at t = +inf
    auto rates = [&](double t, bool inf) {
        std::size_t fp = 0, fn = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const bool fake = !inf && scores[i] >= t;
            if (fake && labels[i] == 0) ++fp;
            if (!fake && labels[i] == 1) ++fn;
        }
        return std::pair<double, double>{static_cast<double>(fp) / static_cast<double>(n_neg),
                                         static_cast<double>(fn) / static_cast<double>(n_pos)};
    };

    auto [f0, n0] = rates(0.0, true);  // FPR 0, FNR 1
    for (std::size_t k = 0; k <= thresholds.size(); ++k) {
        std::pair<double, double> pt =
            (k < thresholds.size()) ? rates(thresholds[k], false)
                                    : std::pair<double, double>{1.0, 0.0};
        const auto [f1, n1] = pt;
        if (f1 >= n1) {
            const double denom = (f1 - f0) - (n1 - n0);
            if (std::abs(denom) < 1e-300) return 0.5 * (f1 + n1);
            const double lam = (n0 - f0) / denom;
            return f0 + lam * (f1 - f0);
        }
        f0 = f1;
        n0 = n1;
    }
    return 0.5 * (f0 + n0);
}

double ap(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("ap: scores/labels size mismatch or empty");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += static_cast<std::size_t>(l);
    if (n_pos == 0) throw DataError("ap: needs at least one positive");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double hits = 0.0, total = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (labels[order[rank]] == 1) {
            hits += 1.0;
            total += hits / static_cast<double>(rank + 1);
        }
    }
    return total / static_cast<double>(n_pos);
}

MetricReport compute_metrics(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw DataError("metrics: empty prediction set");
    MetricReport rep;
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(preds.size());
    bool have_video_ids = true;
    std::map<std::string, int> videos;
    std::size_t correct = 0;
    for (const auto& p : preds) {
        scores.push_back(p.fake_score);
        labels.push_back(p.label);
        if (p.decision == p.label) ++correct;
        if (p.video_id.empty())
            have_video_ids = false;
        else
            videos.emplace(p.video_id, p.label);
        rep.num_real += (p.label == 0);
        rep.num_fake += (p.label == 1);
    }
    rep.num_frames = preds.size();
    rep.frame_auc = auc(scores, labels);
    rep.acc = static_cast<double>(correct) / static_cast<double>(preds.size());
    rep.ap = ap(scores, labels);
    rep.eer = eer(scores, labels);
    if (have_video_ids) {
        rep.video_auc = video_auc(preds);
        rep.num_videos = videos.size();
    }
    return rep;
}

std::string MetricReport::to_json() const {
    nlohmann::json j{{"frame_auc", frame_auc}, {"acc", acc},         {"ap", ap},
                     {"eer", eer},             {"num_frames", num_frames},
                     {"num_videos", num_videos}, {"num_real", num_real},
                     {"num_fake", num_fake}};
    if (video_auc)
        j["video_auc"] = *video_auc;
    else
        j["video_auc"] = nullptr;
    return j.dump(2);
}

PerturbGrid perturb_eval(const HamletModel& model, const std::vector<SampleRecord>& records,
                         std::uint64_t seed) {
    if (records.empty()) throw DataError("perturb_eval: empty manifest");
    std::vector<Tensor> raw(records.size());
    parallel_for(records.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) raw[i] = decode_image(records[i].path);
    });
    const PreprocessConfig pp = model.config().preprocess_config();
    const Rng root(seed);

    PerturbGrid grid;
    for (int k = 0; k < kPerturbationKinds; ++k) {
        for (int sev = 0; sev <= 5; ++sev) {
            LoadedDataset ds;
            ds.records = records;
            ds.images.resize(records.size());
            parallel_for(records.size(), [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    Rng prng = root.derive("perturb", (static_cast<std::uint64_t>(k) << 40) ^
                                                          (static_cast<std::uint64_t>(sev) << 32) ^ i);
                    Tensor img =
                        perturb(raw[i], {static_cast<PerturbationKind>(k), sev}, prng);
                    ds.images[i] = preprocess(img, pp);
                }
            });
            MetricReport rep = compute_metrics(predict_dataset(model, ds));
            grid.frame[k][sev] = rep.frame_auc;
            grid.video[k][sev] = rep.video_auc.value_or(rep.frame_auc);
        }
    }
    return grid;
}

std::vector<AblationResult> run_ablation(const std::vector<AblationCell>& cells,
                                         const std::vector<SampleRecord>& train_records,
                                         const std::vector<SampleRecord>& within_records,
                                         const std::vector<SampleRecord>* cross_records,
                                         const TrainConfig& tcfg) {
    std::vector<AblationResult> results;
    for (const auto& cell : cells) {
        AblationResult res;
        res.name = cell.name;
        try {
            HamletModel model = HamletModel::create(cell.config, tcfg.seed);
            const PreprocessConfig pp = cell.config.preprocess_config();
            LoadedDataset train_data = LoadedDataset::load(train_records, pp);
            AdamW opt(model.trainable_params());
            train(model, train_data, tcfg, opt);
            res.within = compute_metrics(
                predict_dataset(model, LoadedDataset::load(within_records, pp)));
            if (cross_records)
                res.cross = compute_metrics(
                    predict_dataset(model, LoadedDataset::load(*cross_records, pp)));
        } catch (const std::exception& e) {
            res.failed = true;
            res.error = e.what();
        }
        results.push_back(std::move(res));
    }
    return results;
}

namespace {
void write_token_maps(const Tensor& weights, const std::string& bank_name,
                      const std::string& out_dir, std::size_t grid,
                      std::vector<std::string>& files) {
    // weights [1,H,K,N] -> mean over heads -> per-token [N] map
    const std::size_t H = weights.size(1), K = weights.size(2), N = weights.size(3);
    for (std::size_t t = 0; t < K; ++t) {
        std::vector<double> mean(N, 0.0);
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t n = 0; n < N; ++n)
                mean[n] += weights.data()[(h * K + t) * N + n];
        double row_sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            mean[n] /= static_cast<double>(H);
            row_sum += mean[n];
        }
        if (std::abs(row_sum - 1.0) > 1e-5)
            throw std::runtime_error("attention export: weight row does not sum to 1");
        const double lo = *std::min_element(mean.begin(), mean.end());
        const double hi = *std::max_element(mean.begin(), mean.end());
        std::vector<std::uint8_t> pixels(N);
        if (hi - lo < 1e-12) {
            std::fill(pixels.begin(), pixels.end(), static_cast<std::uint8_t>(128));
        } else {
            for (std::size_t n = 0; n < N; ++n)
                pixels[n] = static_cast<std::uint8_t>(
                    std::lround((mean[n] - lo) / (hi - lo) * 255.0));
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s_%02zu.pgm", bank_name.c_str(), t);
        const std::string path = (fs::path(out_dir) / buf).string();
        write_pgm(path, pixels, grid, grid);
        files.push_back(path);
    }
}
}  // namespace

std::vector<std::string> export_attention_maps(const HamletModel& model, const Tensor& image,
                                               const std::string& out_dir) {
    if (!model.config().ablation.v2t)
        throw std::runtime_error("attention export requires the cross-attention pathway (v2t)");
    fs::create_directories(out_dir);
    NoGradGuard ng;
    Tensor batch = reshape(image, {1, image.size(0), image.size(1), image.size(2)});
    auto [feat, levels] = model.encode_image(batch);
    AttentionCapture capture;
    model.encode_prompts(levels.levels, false, nullptr, &capture);
    const std::size_t n = model.config().backbone.num_patches();
    const std::size_t grid = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    std::vector<std::string> files;
    write_token_maps(capture.real, "real", out_dir, grid, files);
    write_token_maps(capture.fake, "fake", out_dir, grid, files);
    if (capture.context.defined()) write_token_maps(capture.context, "context", out_dir, grid, files);
    return files;
}

}  // namespace hamlet
