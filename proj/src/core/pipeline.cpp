#include "pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "checkpoint.hpp"
#include "gradcheck.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hamlet {

void write_run_record(const std::string& out_dir, const RunConfig& cfg,
                      const std::vector<std::string>& artifacts) {
    json rec;
    rec["config"] = json::parse(cfg.to_json());
    rec["seed"] = cfg.seed;
    json digests = json::object();
    for (const auto& path : artifacts)
        digests[fs::path(path).filename().string()] = hex64(file_digest(path));
    rec["artifacts"] = digests;
    write_file((fs::path(out_dir) / "run.json").string(), rec.dump(2));
}

void write_sidecar(const std::string& checkpoint, const RunConfig& cfg, const TrainLog& log) {
    json side;
    side["config"] = json::parse(cfg.to_json());
    json tl;
    tl["steps"] = log.step_loss.size();
    tl["epoch_mean_loss"] = log.epoch_mean_loss;
    tl["epoch_hierarchy_rate"] = log.epoch_hierarchy_rate;
    tl["final_loss"] = log.step_loss.empty() ? nullptr : json(log.step_loss.back());
    side["train_log"] = tl;
    write_file(checkpoint + ".json", side.dump(2));
}

RunConfig read_sidecar_config(const std::string& checkpoint) {
    const std::string path = checkpoint + ".json";
    json side;
    try {
        side = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw DataError("cannot parse checkpoint sidecar " + path + ": " + e.what());
    }
    if (!side.contains("config")) throw DataError("checkpoint sidecar missing config: " + path);
    return RunConfig::resolve(side["config"].dump(), "desk");
}

std::string run_synth(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    set_num_threads(cfg.threads);
    const std::size_t image_size =
        cfg.data.image_size ? cfg.data.image_size : cfg.model.backbone.image_size;
    json manifests = json::object();
    std::vector<std::string> artifacts;
    for (const auto& family : cfg.data.families) {
        for (const char* split : {"train", "test"}) {
            SynthSpec spec;
            spec.family = synth_family_from_string(family);
            spec.image_size = image_size;
            spec.samples_per_class = std::string(split) == "train"
                                         ? cfg.data.train_frames_per_class
                                         : cfg.data.test_frames_per_class;
            spec.frames_per_video = cfg.data.frames_per_video;
            spec.seed = cfg.seed;
            const std::string manifest =
                synthesize_dataset(spec, out_dir, family + "_" + split);
            manifests[family + "_" + split] = manifest;
            artifacts.push_back(manifest);
        }
    }
    write_run_record(out_dir, cfg, artifacts);
    json summary{{"manifests", manifests}, {"out_dir", out_dir}};
    return summary.dump(2);
}

TrainOutcome run_train(const RunConfig& cfg, const std::string& train_manifest,
                       const std::string& out_dir) {
    fs::create_directories(out_dir);
    set_num_threads(cfg.threads);
    TrainOutcome out;
    out.init_checkpoint = (fs::path(out_dir) / "model_init.hmlt").string();
    out.checkpoint = (fs::path(out_dir) / "model.hmlt").string();

    HamletModel model = HamletModel::create(cfg.model, cfg.seed);
    LoadedDataset data = LoadedDataset::load(load_manifest(train_manifest), cfg.preprocess_config());
    AdamW opt(model.trainable_params());

    save_model_checkpoint(out.init_checkpoint, model, &opt);
    write_sidecar(out.init_checkpoint, cfg, TrainLog{});

    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    out.log = train(model, data, tcfg, opt);

    save_model_checkpoint(out.checkpoint, model, &opt);
    write_sidecar(out.checkpoint, cfg, out.log);
    write_run_record(out_dir, cfg,
                     {out.init_checkpoint, out.init_checkpoint + ".json", out.checkpoint,
                      out.checkpoint + ".json"});
    return out;
}

namespace {
HamletModel model_from_checkpoint(const std::string& checkpoint, RunConfig& cfg_out) {
    cfg_out = read_sidecar_config(checkpoint);
    HamletModel model = HamletModel::create(cfg_out.model, cfg_out.seed);
    load_model_checkpoint(checkpoint, model);
    return model;
}
}  // namespace

std::string run_eval(const std::string& checkpoint, const std::string& manifest, int threads) {
    RunConfig cfg;
    HamletModel model = model_from_checkpoint(checkpoint, cfg);
    if (threads > 0) set_num_threads(threads);
    LoadedDataset data = LoadedDataset::load(load_manifest(manifest), cfg.preprocess_config());
    MetricReport rep = compute_metrics(predict_dataset(model, data, cfg.eval.batch_size));
    return rep.to_json();
}

std::string run_perturb_eval(const std::string& checkpoint, const std::string& manifest,
                             const std::string& out_dir, int threads) {
    RunConfig cfg;
    HamletModel model = model_from_checkpoint(checkpoint, cfg);
    if (threads > 0) set_num_threads(threads);
    fs::create_directories(out_dir);
    const auto records = load_manifest(manifest);
    PerturbGrid grid = perturb_eval(model, records, cfg.seed);

    auto write_wide = [&](const std::string& name, const double (&table)[kPerturbationKinds][6]) {
        std::ostringstream csv;
        csv << "kind,severity0,severity1,severity2,severity3,severity4,severity5\n";
        for (int k = 0; k < kPerturbationKinds; ++k) {
            csv << to_string(static_cast<PerturbationKind>(k));
            for (int s = 0; s <= 5; ++s) csv << "," << table[k][s];
            csv << "\n";
        }
        const std::string path = (fs::path(out_dir) / name).string();
        write_file(path, csv.str());
        return path;
    };
    const std::string frame_csv = write_wide("perturb_frame_auc.csv", grid.frame);
    const std::string video_csv = write_wide("perturb_video_auc.csv", grid.video);

    std::ostringstream longcsv;
    longcsv << "kind,severity,frame_auc,video_auc\n";
    for (int k = 0; k < kPerturbationKinds; ++k)
        for (int s = 0; s <= 5; ++s)
            longcsv << to_string(static_cast<PerturbationKind>(k)) << "," << s << ","
                    << grid.frame[k][s] << "," << grid.video[k][s] << "\n";
    const std::string long_csv = (fs::path(out_dir) / "perturb_long.csv").string();
    write_file(long_csv, longcsv.str());

    write_run_record(out_dir, cfg, {frame_csv, video_csv, long_csv});
    json summary{{"frame_csv", frame_csv}, {"video_csv", video_csv}, {"long_csv", long_csv}};
    return summary.dump(2);
}

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<std::size_t> parse_tap_cell(const std::string& name, std::size_t blocks) {
    std::vector<std::size_t> taps;
    if (name == "all") {
        for (std::size_t i = 1; i <= blocks; ++i) taps.push_back(i);
    } else if (name == "final") {
        taps = {blocks};
    } else if (name.rfind("every", 0) == 0) {
        const std::size_t k = static_cast<std::size_t>(std::stoul(name.substr(5)));
        if (k == 0) throw ConfigError("taps: bad stride in '" + name + "'");
        for (std::size_t i = k; i <= blocks; i += k) taps.push_back(i);
    } else if (name.rfind("block", 0) == 0) {
        taps = {static_cast<std::size_t>(std::stoul(name.substr(5)))};
    } else {
        throw ConfigError("taps: unknown cell '" + name + "'");
    }
    return taps;
}

std::vector<AblationCell> build_cells(const RunConfig& cfg, const std::string& axis,
                                      const std::string& values_csv) {
    std::vector<std::string> values = split_csv(values_csv);
    std::vector<AblationCell> cells;
    auto base = cfg.model;
    auto add = [&](const std::string& name, ModelConfig mc) { cells.push_back({name, mc}); };

    if (axis == "fusion") {
        if (values.empty())
            values = {"full", "no_t2v", "no_sa", "no_v2t", "no_t2v_sa", "prompt_only"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            if (v == "full") mc.ablation = {true, true, true};
            else if (v == "no_t2v") mc.ablation = {false, true, true};
            else if (v == "no_sa") mc.ablation = {true, false, true};
            else if (v == "no_v2t") mc.ablation = {true, true, false};
            else if (v == "no_t2v_sa") mc.ablation = {false, false, true};
            else if (v == "prompt_only") mc.ablation = {false, false, false};
            else throw ConfigError("ablate fusion: unknown cell '" + v + "'");
            add(v, mc);
        }
    } else if (axis == "arrangement") {
        if (values.empty()) values = {"rf_then_c", "c_then_rf", "split"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            mc.prompts.arrangement = arrangement_from_string(v);
            add(v, mc);
        }
    } else if (axis == "composition") {
        if (values.empty()) values = {"all_learnable", "no_context", "fixed_rf"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            mc.prompts.composition = composition_from_string(v);
            add(v, mc);
        }
    } else if (axis == "objective") {
        if (values.empty()) values = {"hierarchy", "no_prior", "standard_ce"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            if (v == "hierarchy") {
                mc.loss.variant = ObjectiveVariant::hierarchy;
                mc.loss.prior_prompt = true;
            } else if (v == "no_prior") {
                mc.loss.variant = ObjectiveVariant::hierarchy;
                mc.loss.prior_prompt = false;
            } else if (v == "standard_ce") {
                mc.loss.variant = ObjectiveVariant::standard_ce;
            } else {
                throw ConfigError("ablate objective: unknown cell '" + v + "'");
            }
            add(v, mc);
        }
    } else if (axis == "weights") {
        if (values.empty()) values = {"geometric", "uniform", "linear", "harmonic", "cosine"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            mc.loss.scheme = weight_scheme_from_string(v);
            add(v, mc);
        }
    } else if (axis == "heads") {
        if (values.empty()) values = {"4", "8", "16", "32"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            mc.fusion.heads = std::stoi(v);
            add("heads" + v, mc);
        }
    } else if (axis == "taps") {
        if (values.empty()) values = {"all", "every2", "every4", "final"};
        for (const auto& v : values) {
            ModelConfig mc = base;
            mc.backbone.tap_blocks = parse_tap_cell(v, base.backbone.vision_blocks);
            add(v, mc);
        }
    } else {
        throw ConfigError(
            "ablate: unknown axis '" + axis +
            "' (expected fusion|arrangement|composition|objective|weights|heads|taps)");
    }
    return cells;
}

std::string taps_str(const std::vector<std::size_t>& taps) {
    std::string s;
    for (std::size_t t : taps) s += (s.empty() ? "" : ";") + std::to_string(t);
    return s;
}

void metric_cols(std::ostringstream& csv, const MetricReport* rep) {
    if (!rep) {
        csv << ",,,,,";
        return;
    }
    csv << "," << rep->frame_auc;
    if (rep->video_auc)
        csv << "," << *rep->video_auc;
    else
        csv << ",";
    csv << "," << rep->acc << "," << rep->ap << "," << rep->eer;
}

}  // namespace

std::string run_ablate(const RunConfig& cfg, const std::string& axis,
                       const std::string& values_csv, const std::string& train_manifest,
                       const std::string& within_manifest, const std::string& cross_manifest,
                       const std::string& out_csv) {
    set_num_threads(cfg.threads);
    const auto cells = build_cells(cfg, axis, values_csv);
    const auto train_records = load_manifest(train_manifest);
    const auto within_records = load_manifest(within_manifest);
    std::vector<SampleRecord> cross_records;
    const bool have_cross = !cross_manifest.empty();
    if (have_cross) cross_records = load_manifest(cross_manifest);

    TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;
    const auto results = run_ablation(cells, train_records, within_records,
                                      have_cross ? &cross_records : nullptr, tcfg);

    std::ostringstream csv;
    csv << "cell,t2v,self_attn,v2t,arrangement,composition,K_r,K_f,M,scheme,prior_prompt,"
           "objective,heads,taps,within_frame_auc,within_video_auc,within_acc,within_ap,"
           "within_eer,cross_frame_auc,cross_video_auc,cross_acc,cross_ap,cross_eer,status,"
           "error\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& cell = cells[i];
        const auto& res = results[i];
        const auto& mc = cell.config;
        csv << cell.name << "," << mc.ablation.t2v << "," << mc.ablation.self_attn << ","
            << mc.ablation.v2t << "," << to_string(mc.prompts.arrangement) << ","
            << to_string(mc.prompts.composition) << "," << mc.prompts.num_real << ","
            << mc.prompts.num_fake << "," << mc.prompts.num_context << ","
            << to_string(mc.loss.scheme) << "," << mc.loss.prior_prompt << ","
            << to_string(mc.loss.variant) << "," << mc.fusion.heads << ","
            << taps_str(mc.backbone.tap_blocks);
        metric_cols(csv, res.failed ? nullptr : &res.within);
        metric_cols(csv, (!res.failed && res.cross) ? &*res.cross : nullptr);
        csv << "," << (res.failed ? "failed" : "ok") << ",";
        std::string err = res.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        csv << err << "\n";
    }
    write_file(out_csv, csv.str());

    json summary{{"csv", out_csv}, {"cells", results.size()}};
    int failed = 0;
    for (const auto& r : results) failed += r.failed ? 1 : 0;
    summary["failed_cells"] = failed;
    return summary.dump(2);
}

namespace {

struct GradCheckSetup {
    HamletModel model;
    Tensor v_cls;
    Tensor levels;
    std::vector<int> labels;
};

ModelConfig random_tiny_config(Rng& rng) {
    ModelConfig mc;
    mc.backbone.image_size = 8;
    mc.backbone.patch_size = 4;  // N = 4
    mc.backbone.vision_width = 16;
    mc.backbone.vision_blocks = 4;
    mc.backbone.vision_heads = 2;
    const std::size_t L = 1 + rng.below(4);
    std::vector<std::size_t> taps;
    for (std::size_t b = 1; b <= 4 && taps.size() < L; ++b)
        if (rng.uniform() < 0.5 || 4 - b < L - taps.size()) taps.push_back(b);
    mc.backbone.tap_blocks = taps;
    mc.backbone.text_width = 12;
    mc.backbone.text_blocks = 2;
    mc.backbone.text_heads = 2;
    mc.backbone.context_length = 16;
    mc.backbone.vocab_size = 32;
    mc.backbone.embed_dim = 8;
    mc.backbone.temperature = rng.uniform(0.2, 1.0);
    mc.prompts.num_real = 1 + rng.below(2);
    mc.prompts.num_fake = 1 + rng.below(2);
    mc.prompts.num_context = 2 + rng.below(5);
    mc.prompts.dropout_rate = 0.0;  // f must be deterministic
    const int heads[] = {1, 2, 4};
    mc.fusion.heads = heads[rng.below(3)];
    return mc;
}

GradCheckSetup make_setup(std::uint64_t seed, int index) {
    Rng rng = Rng(seed).derive("gradcheck", static_cast<std::uint64_t>(index));
    const ModelConfig mc = random_tiny_config(rng);
    GradCheckSetup setup{HamletModel::create(mc, rng.next_u64()), Tensor(), Tensor(), {0, 1}};
    Tensor images = Tensor::uniform({2, 3, 8, 8}, rng, -1.0, 1.0);
    auto [feat, lv] = setup.model.encode_image(images);
    setup.v_cls = feat.v_cls;
    setup.levels = lv.levels;
    return setup;
}

}  // namespace

GradCheckSummary run_grad_check(Precision precision, std::uint64_t seed, int n_configs) {
    const auto start = std::chrono::steady_clock::now();
    GradCheckSummary summary;
    summary.configs = n_configs;
    const Precision saved = default_precision();

    for (int i = 0; i < n_configs; ++i) {
        // Build in f32 mode so every parameter is float-representable; the f64
        // arm then evaluates the same points exactly.
        set_default_precision(Precision::f32);
        GradCheckSetup setup = make_setup(seed, i);
        auto params = setup.model.trainable_params();
        Rng unused(0);
        auto loss_fn = [&] {
            Rng no_dropout(0);
            return setup.model.training_loss(setup.v_cls, setup.levels, setup.labels, no_dropout);
        };

        set_default_precision(Precision::f64);
        if (precision == Precision::f64) {
            GradCheckReport rep = check_gradients(loss_fn, params, 1e-5);
            if (rep.max_rel_err > summary.max_rel_err) {
                summary.max_rel_err = rep.max_rel_err;
                summary.worst = "config " + std::to_string(i) + " " + rep.worst_param;
            }
        } else {
            // f64 finite differences as the reference
            std::vector<std::vector<double>> fd(params.size());
            for (std::size_t p = 0; p < params.size(); ++p) {
                Tensor t = params[p].second;
                fd[p].resize(t.numel());
                for (std::size_t j = 0; j < t.numel(); ++j) {
                    const double savedv = t.data()[j];
                    const double eps = 1e-5;
                    t.data()[j] = savedv + eps;
                    const double fp = loss_fn().item();
                    t.data()[j] = savedv - eps;
                    const double fm = loss_fn().item();
                    t.data()[j] = savedv;
                    fd[p][j] = (fp - fm) / (2.0 * eps);
                }
            }
            // f32-mode analytic gradients at the same parameters
            set_default_precision(Precision::f32);
            for (auto& [name, t] : params) t.zero_grad();
            loss_fn().backward();
            for (std::size_t p = 0; p < params.size(); ++p) {
                const auto* g = params[p].second.grad_if_present();
                for (std::size_t j = 0; j < fd[p].size(); ++j) {
                    const double an = g ? (*g)[j] : 0.0;
                    const double rel =
                        std::abs(an - fd[p][j]) / (std::abs(an) + std::abs(fd[p][j]) + 1e-12);
                    if (rel > summary.max_rel_err) {
                        summary.max_rel_err = rel;
                        summary.worst = "config " + std::to_string(i) + " " + params[p].first;
                    }
                }
            }
            for (auto& [name, t] : params) t.zero_grad();
        }
    }
    set_default_precision(saved);
    summary.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return summary;
}

bool run_verify_frozen(const std::string& before, const std::string& after) {
    return verify_frozen(before, after);
}

int run_attn_export(const std::string& checkpoint, const std::string& image_path,
                    const std::string& out_dir, int threads) {
    RunConfig cfg;
    HamletModel model = model_from_checkpoint(checkpoint, cfg);
    if (threads > 0) set_num_threads(threads);
    Tensor image = preprocess(decode_image(image_path), cfg.preprocess_config());
    const auto files = export_attention_maps(model, image, out_dir);
    write_run_record(out_dir, cfg, files);
    return static_cast<int>(files.size());
}

}  // namespace hamlet
