#include "config.hpp"

#include "json.hpp"

using nlohmann::json;

namespace hamlet {

RunConfig RunConfig::desk_profile() { return RunConfig{}; }

RunConfig RunConfig::paper_profile() {
    RunConfig cfg;
    cfg.model.backbone = BackboneConfig::paper();
    cfg.model.fusion.heads = 32;
    // prompts stay (2,2,16) with dropout 0.1; train stays 20 epochs at lr 1e-3
    return cfg;
}

RunConfig RunConfig::from_profile(const std::string& name) {
    if (name.empty() || name == "desk") return desk_profile();
    if (name == "paper") return paper_profile();
    throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

[[noreturn]] void bad_type(const std::string& path, const char* want) {
    throw ConfigError("config key " + path + ": expected " + want);
}

double num_at(const json& v, const std::string& path) {
    if (!v.is_number()) bad_type(path, "a number");
    return v.get<double>();
}

std::size_t size_at(const json& v, const std::string& path) {
    if (!v.is_number_integer() || v.get<long long>() < 0) bad_type(path, "a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

int int_at(const json& v, const std::string& path) {
    if (!v.is_number_integer()) bad_type(path, "an integer");
    return v.get<int>();
}

bool bool_at(const json& v, const std::string& path) {
    if (!v.is_boolean()) bad_type(path, "a boolean");
    return v.get<bool>();
}

std::string str_at(const json& v, const std::string& path) {
    if (!v.is_string()) bad_type(path, "a string");
    return v.get<std::string>();
}

void triple_at(const json& v, const std::string& path, double out[3]) {
    if (!v.is_array() || v.size() != 3) bad_type(path, "an array of 3 numbers");
    for (int i = 0; i < 3; ++i) out[i] = num_at(v[i], path);
}

template <class Fn>
void walk_object(const json& obj, const std::string& section, Fn&& handle) {
    if (!obj.is_object()) throw ConfigError("config section " + section + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string path = section.empty() ? it.key() : section + "." + it.key();
        if (!handle(it.key(), it.value(), path))
            throw ConfigError("unknown config key " + path);
    }
}

void apply_backbone(const json& obj, BackboneConfig& b) {
    walk_object(obj, "backbone", [&](const std::string& k, const json& v, const std::string& p) {
        if (k == "image_size") b.image_size = size_at(v, p);
        else if (k == "patch_size") b.patch_size = size_at(v, p);
        else if (k == "vision_width") b.vision_width = size_at(v, p);
        else if (k == "vision_blocks") b.vision_blocks = size_at(v, p);
        else if (k == "vision_heads") b.vision_heads = int_at(v, p);
        else if (k == "tap_blocks") {
            if (!v.is_array()) bad_type(p, "an array of block indices");
            b.tap_blocks.clear();
            for (const auto& e : v) b.tap_blocks.push_back(size_at(e, p));
        } else if (k == "text_width") b.text_width = size_at(v, p);
        else if (k == "text_blocks") b.text_blocks = size_at(v, p);
        else if (k == "text_heads") b.text_heads = int_at(v, p);
        else if (k == "context_length") b.context_length = size_at(v, p);
        else if (k == "vocab_size") b.vocab_size = size_at(v, p);
        else if (k == "embed_dim") b.embed_dim = size_at(v, p);
        else if (k == "temperature") b.temperature = num_at(v, p);
        else return false;
        return true;
    });
}

void apply_prompts(const json& obj, PromptConfig& p) {
    walk_object(obj, "prompts", [&](const std::string& k, const json& v, const std::string& path) {
        if (k == "K_r") p.num_real = size_at(v, path);
        else if (k == "K_f") p.num_fake = size_at(v, path);
        else if (k == "M") p.num_context = size_at(v, path);
        else if (k == "arrangement") p.arrangement = arrangement_from_string(str_at(v, path));
        else if (k == "composition") p.composition = composition_from_string(str_at(v, path));
        else if (k == "dropout") p.dropout_rate = num_at(v, path);
        else return false;
        return true;
    });
}

void apply_fusion(const json& obj, FusionConfig& f) {
    walk_object(obj, "fusion", [&](const std::string& k, const json& v, const std::string& path) {
        if (k == "heads") f.heads = int_at(v, path);
        else if (k == "zero_init_out") f.zero_init_out = bool_at(v, path);
        else return false;
        return true;
    });
}

void apply_loss(const json& obj, LossConfig& l) {
    walk_object(obj, "loss", [&](const std::string& k, const json& v, const std::string& path) {
        if (k == "scheme") l.scheme = weight_scheme_from_string(str_at(v, path));
        else if (k == "depth") l.depth = int_at(v, path);
        else if (k == "prior_prompt") l.prior_prompt = bool_at(v, path);
        else if (k == "objective") l.variant = objective_variant_from_string(str_at(v, path));
        else return false;
        return true;
    });
}

void apply_ablation(const json& obj, FusionAblation& a) {
    walk_object(obj, "train.ablation",
                [&](const std::string& k, const json& v, const std::string& path) {
                    if (k == "t2v") a.t2v = bool_at(v, path);
                    else if (k == "self_attn") a.self_attn = bool_at(v, path);
                    else if (k == "v2t") a.v2t = bool_at(v, path);
                    else return false;
                    return true;
                });
}

void apply_train(const json& obj, TrainConfig& t, FusionAblation& a) {
    walk_object(obj, "train", [&](const std::string& k, const json& v, const std::string& path) {
        if (k == "epochs") t.epochs = int_at(v, path);
        else if (k == "batch_size") t.batch_size = size_at(v, path);
        else if (k == "lr") t.lr = num_at(v, path);
        else if (k == "beta1") t.beta1 = num_at(v, path);
        else if (k == "beta2") t.beta2 = num_at(v, path);
        else if (k == "weight_decay") t.weight_decay = num_at(v, path);
        else if (k == "grad_clip") t.grad_clip = num_at(v, path);
        else if (k == "ablation") apply_ablation(v, a);
        else return false;
        return true;
    });
}

void apply_data(const json& obj, DataConfig& d) {
    walk_object(obj, "data", [&](const std::string& k, const json& v, const std::string& path) {
        if (k == "families") {
            if (!v.is_array() || v.empty()) bad_type(path, "a non-empty array of family names");
            d.families.clear();
            for (const auto& e : v) d.families.push_back(str_at(e, path));
        } else if (k == "train_frames_per_class") d.train_frames_per_class = size_at(v, path);
        else if (k == "test_frames_per_class") d.test_frames_per_class = size_at(v, path);
        else if (k == "frames_per_video") d.frames_per_video = size_at(v, path);
        else if (k == "image_size") d.image_size = size_at(v, path);
        else if (k == "norm_mean") triple_at(v, path, d.norm_mean);
        else if (k == "norm_std") triple_at(v, path, d.norm_std);
        else return false;
        return true;
    });
}

void apply_eval(const json& obj, EvalConfig& e) {
    walk_object(obj, "eval", [&](const std::string& k, const json& v, const std::string& path) {
        if (k == "batch_size") e.batch_size = size_at(v, path);
        else return false;
        return true;
    });
}

}  // namespace

RunConfig RunConfig::resolve(const std::string& json_text, const std::string& profile) {
    RunConfig cfg = from_profile(profile);
    if (!json_text.empty()) {
        json doc;
        try {
            doc = json::parse(json_text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: invalid JSON: ") + e.what());
        }
        if (doc.is_null()) doc = json::object();
        walk_object(doc, "", [&](const std::string& k, const json& v, const std::string& path) {
            if (k == "seed") cfg.seed = static_cast<std::uint64_t>(size_at(v, path));
            else if (k == "threads") cfg.threads = int_at(v, path);
            else if (k == "backbone") apply_backbone(v, cfg.model.backbone);
            else if (k == "prompts") apply_prompts(v, cfg.model.prompts);
            else if (k == "fusion") apply_fusion(v, cfg.model.fusion);
            else if (k == "loss") apply_loss(v, cfg.model.loss);
            else if (k == "train") apply_train(v, cfg.train, cfg.model.ablation);
            else if (k == "data") apply_data(v, cfg.data);
            else if (k == "eval") apply_eval(v, cfg.eval);
            else return false;
            return true;
        });
    }
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (model.fusion.heads < 1 ||
        model.backbone.vision_width % static_cast<std::size_t>(model.fusion.heads) != 0 ||
        model.backbone.text_width % static_cast<std::size_t>(model.fusion.heads) != 0)
        throw ConfigError("fusion.heads: must divide both vision_width and text_width");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    for (const auto& f : data.families) synth_family_from_string(f);
    if (data.frames_per_video == 0) throw ConfigError("data.frames_per_video must be >= 1");
    if (eval.batch_size == 0) throw ConfigError("eval.batch_size must be >= 1");
    for (int i = 0; i < 3; ++i)
        if (data.norm_std[i] == 0.0) throw ConfigError("data.norm_std must be nonzero");
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["backbone"] = {{"image_size", model.backbone.image_size},
                     {"patch_size", model.backbone.patch_size},
                     {"vision_width", model.backbone.vision_width},
                     {"vision_blocks", model.backbone.vision_blocks},
                     {"vision_heads", model.backbone.vision_heads},
                     {"tap_blocks", model.backbone.tap_blocks},
                     {"text_width", model.backbone.text_width},
                     {"text_blocks", model.backbone.text_blocks},
                     {"text_heads", model.backbone.text_heads},
                     {"context_length", model.backbone.context_length},
                     {"vocab_size", model.backbone.vocab_size},
                     {"embed_dim", model.backbone.embed_dim},
                     {"temperature", model.backbone.temperature}};
    j["prompts"] = {{"K_r", model.prompts.num_real},
                    {"K_f", model.prompts.num_fake},
                    {"M", model.prompts.num_context},
                    {"arrangement", to_string(model.prompts.arrangement)},
                    {"composition", to_string(model.prompts.composition)},
                    {"dropout", model.prompts.dropout_rate}};
    j["fusion"] = {{"heads", model.fusion.heads}, {"zero_init_out", model.fusion.zero_init_out}};
    j["loss"] = {{"scheme", to_string(model.loss.scheme)},
                 {"depth", model.loss.depth},
                 {"prior_prompt", model.loss.prior_prompt},
                 {"objective", to_string(model.loss.variant)}};
    j["train"] = {{"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"beta1", train.beta1},
                  {"beta2", train.beta2},
                  {"weight_decay", train.weight_decay},
                  {"grad_clip", train.grad_clip},
                  {"ablation",
                   {{"t2v", model.ablation.t2v},
                    {"self_attn", model.ablation.self_attn},
                    {"v2t", model.ablation.v2t}}}};
    j["data"] = {{"families", data.families},
                 {"train_frames_per_class", data.train_frames_per_class},
                 {"test_frames_per_class", data.test_frames_per_class},
                 {"frames_per_video", data.frames_per_video},
                 {"image_size", data.image_size},
                 {"norm_mean", {data.norm_mean[0], data.norm_mean[1], data.norm_mean[2]}},
                 {"norm_std", {data.norm_std[0], data.norm_std[1], data.norm_std[2]}}};
    j["eval"] = {{"batch_size", eval.batch_size}};
    return j.dump(2);
}

PreprocessConfig RunConfig::preprocess_config() const {
    PreprocessConfig p;
    p.image_size = model.backbone.image_size;
    for (int i = 0; i < 3; ++i) {
        p.mean[i] = data.norm_mean[i];
        p.stddev[i] = data.norm_std[i];
    }
    return p;
}

}  // namespace hamlet
