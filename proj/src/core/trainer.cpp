#include "trainer.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint.hpp"

namespace hamlet {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params) : params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, t] : params_) {
        if (!t.requires_grad())
            throw ConfigError("optimizer: refusing to register frozen tensor " + name);
        m_.push_back(Tensor::zeros(t.shape()));
        v_.push_back(Tensor::zeros(t.shape()));
    }
}

void AdamW::step(const TrainConfig& cfg) {
    for (auto& [name, t] : params_) {
        const auto* g = t.grad_if_present();
        if (!g) continue;
        for (double x : *g)
            if (!std::isfinite(x))
                throw std::runtime_error("optimizer: step rejected, non-finite gradient in " + name);
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& t = params_[i].second;
        const auto* g = t.grad_if_present();
        auto& theta = t.data();
        auto& m = m_[i].data();
        auto& v = v_[i].data();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double gj = g ? (*g)[j] : 0.0;
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            theta[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + 1e-8)) +
                        cfg.lr * cfg.weight_decay * theta[j];
        }
        round_to_precision(theta);
        round_to_precision(m);
        round_to_precision(v);
    }
}

void AdamW::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> AdamW::state_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("optimizer.step", Tensor::scalar(static_cast<double>(step_count_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back("optimizer.m." + params_[i].first, m_[i]);
        out.emplace_back("optimizer.v." + params_[i].first, v_[i]);
    }
    return out;
}

void AdamW::load_state(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    for (const auto& [name, t] : tensors) {
        if (name == "optimizer.step") {
            step_count_ = static_cast<long>(t.item());
            continue;
        }
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (name == "optimizer.m." + params_[i].first) m_[i].data() = t.data();
            if (name == "optimizer.v." + params_[i].first) v_[i].data() = t.data();
        }
    }
}

LoadedDataset LoadedDataset::load(const std::vector<SampleRecord>& records,
                                  const PreprocessConfig& cfg) {
    LoadedDataset ds;
    ds.records = records;
    ds.images.resize(records.size());
    parallel_for(records.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            ds.images[i] = preprocess(decode_image(records[i].path), cfg);
    });
    return ds;
}

FeatureCache FeatureCache::build(const HamletModel& model, const std::vector<Tensor>& images) {
    FeatureCache cache;
    cache.v_cls.resize(images.size());
    cache.levels.resize(images.size());
    parallel_for(images.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& img = images[i];
            auto [feat, lv] = model.encode_image(
                reshape(img, {1, img.size(0), img.size(1), img.size(2)}));
            cache.v_cls[i] = feat.v_cls;
            cache.levels[i] = lv.levels;
        }
    });
    return cache;
}

std::pair<Tensor, Tensor> FeatureCache::gather(const std::vector<std::size_t>& idx) const {
    std::vector<Tensor> vs, ls;
    vs.reserve(idx.size());
    ls.reserve(idx.size());
    for (std::size_t i : idx) {
        vs.push_back(v_cls[i]);
        ls.push_back(levels[i]);
    }
    return {concat(vs, 0), concat(ls, 1)};  // [B,d_e], [L,B,N,d_v]
}

namespace {
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

void clip_gradients(const std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : params) {
        const auto* g = t.grad_if_present();
        if (!g) continue;
        for (double x : *g) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (const auto& [name, t] : params) {
        Tensor copy = t;
        if (auto* g = const_cast<std::vector<double>*>(copy.grad_if_present()))
            for (double& x : *g) x *= s;
    }
}
}  // namespace

TrainLog train(HamletModel& model, const LoadedDataset& data, const TrainConfig& cfg,
               AdamW& optimizer) {
    cfg.validate();
    if (data.records.empty()) throw DataError("train: empty dataset");
    TrainLog log;
    Rng root(cfg.seed);

    const FeatureCache cache = FeatureCache::build(model, data.images);
    std::vector<int> labels_all(data.records.size());
    for (std::size_t i = 0; i < labels_all.size(); ++i) labels_all[i] = data.records[i].label;

    std::size_t global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order =
            shuffled_indices(data.records.size(), root.derive("shuffle", static_cast<std::uint64_t>(epoch)));
        double epoch_loss = 0.0, epoch_hier = 0.0;
        std::size_t batches = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), at + cfg.batch_size);
            const std::vector<std::size_t> idx(order.begin() + at, order.begin() + end);
            auto [v_cls, levels] = cache.gather(idx);
            std::vector<int> labels;
            labels.reserve(idx.size());
            for (std::size_t i : idx) labels.push_back(labels_all[i]);

            Rng drop_rng = root.derive("dropout", global_step);
            double hier = 0.0;
            Tensor loss = model.training_loss(v_cls, levels, labels, drop_rng, &hier);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw std::runtime_error("train: non-finite loss at step " +
                                         std::to_string(global_step));
            loss.backward();
            if (cfg.grad_clip > 0.0) clip_gradients(optimizer.params(), cfg.grad_clip);
            optimizer.step(cfg);
            optimizer.zero_grad();

            log.step_loss.push_back(loss_val);
            epoch_loss += loss_val;
            epoch_hier += hier;
            ++batches;
            ++global_step;
        }
        log.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches));
        log.epoch_hierarchy_rate.push_back(epoch_hier / static_cast<double>(batches));
    }
    return log;
}

void save_model_checkpoint(const std::string& path, const HamletModel& model,
                           const AdamW* optimizer) {
    auto tensors = model.all_params();
    if (optimizer)
        for (auto& p : optimizer->state_tensors()) tensors.push_back(p);
    save_checkpoint(path, tensors);
}

void load_model_checkpoint(const std::string& path, HamletModel& model) {
    model.load_parameters(load_checkpoint(path));
}

}  // namespace hamlet
