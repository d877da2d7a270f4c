// hamlet - command-line driver over the libhamlet C API.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hamlet/hamlet.h"
#include "json.hpp"

using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
    std::string config_path;
    std::string profile = "desk";
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out;
    std::vector<std::string> overrides;  // key.path=json-value
};

void add_common(CLI::App* cmd, CommonOpts& o, const std::string& default_out_leaf) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--profile", o.profile, "config profile: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--seed", o.seed, "master seed (module seeds derive from it)");
    cmd->add_option("--threads", o.threads, "worker threads (1 keeps runs bit-reproducible)");
    cmd->add_option("--set", o.overrides,
                    "config override as dotted.path=value (e.g. prompts.M=16)");
    const char* root = std::getenv("HAMLET_OUT");
    o.out = (root ? std::string(root) : std::string("out")) + "/" + default_out_leaf;
    cmd->add_option("--out", o.out, "output directory");
}

json parse_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);  // bare string
    }
}

// Builds the config document: file contents plus --set overrides.
std::string build_config_json(const CommonOpts& o) {
    json doc = json::object();
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) {
            std::cerr << "error: cannot open config file " << o.config_path << "\n";
            std::exit(kExitUsage);
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        try {
            doc = ss.str().empty() ? json::object() : json::parse(ss.str());
        } catch (const json::exception& e) {
            std::cerr << "error: config parse failure: " << e.what() << "\n";
            std::exit(kExitUsage);
        }
    }
    for (const auto& ov : o.overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --set expects dotted.path=value, got '" << ov << "'\n";
            std::exit(kExitUsage);
        }
        json* at = &doc;
        std::string path = ov.substr(0, eq);
        std::size_t pos = 0;
        while (true) {
            const auto dot = path.find('.', pos);
            const std::string key = path.substr(pos, dot - pos);
            if (dot == std::string::npos) {
                (*at)[key] = parse_value(ov.substr(eq + 1));
                break;
            }
            at = &(*at)[key];
            pos = dot + 1;
        }
    }
    return doc.empty() ? std::string() : doc.dump();
}

hamlet_ctx* make_ctx(const CommonOpts& o) {
    hamlet_ctx* ctx = hamlet_ctx_create(build_config_json(o).c_str(), o.profile.c_str(), o.seed,
                                        o.threads);
    if (!ctx) {
        std::cerr << "error: " << hamlet_errmsg() << "\n";
        std::exit(kExitUsage);
    }
    return ctx;
}

int report(int rc) {
    if (rc != HAMLET_OK) std::cerr << "error: " << hamlet_errmsg() << "\n";
    return rc == HAMLET_OK ? 0 : (rc == HAMLET_ERR_USAGE ? kExitUsage : kExitRuntime);
}

void print_and_free(char* s) {
    if (!s) return;
    std::cout << s << "\n";
    hamlet_free(s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"HAMLET forgery-detection toolkit"};
    app.require_subcommand(1);

    CommonOpts synth_o, train_o, ablate_o, grad_o;

    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    add_common(synth, synth_o, "synth");

    auto* train = app.add_subcommand("train", "train a model on a manifest");
    add_common(train, train_o, "train");
    std::string train_manifest;
    train->add_option("--manifest", train_manifest, "training manifest (JSON lines)")->required();
    // trainer fields as first-class flags
    double lr = -1, wd = -1, b1 = -1, b2 = -1, clip = -1;
    int epochs = -1;
    long long batch = -1;
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--batch-size", batch, "batch size");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--beta1", b1, "Adam beta1");
    train->add_option("--beta2", b2, "Adam beta2");
    train->add_option("--weight-decay", wd, "decoupled weight decay");
    train->add_option("--grad-clip", clip, "global L2 gradient clip (0 disables)");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string eval_ckpt, eval_manifest, eval_out;
    int eval_threads = 1;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint (.hmlt with .json sidecar)")->required();
    eval->add_option("--manifest", eval_manifest, "evaluation manifest")->required();
    eval->add_option("--threads", eval_threads, "worker threads");
    eval->add_option("--out", eval_out, "also write report.json here");

    auto* pert = app.add_subcommand("perturb-eval", "6x6 perturbation robustness sweep");
    std::string pert_ckpt, pert_manifest, pert_out = "out/perturb";
    int pert_threads = 1;
    pert->add_option("--ckpt", pert_ckpt, "checkpoint")->required();
    pert->add_option("--manifest", pert_manifest, "evaluation manifest")->required();
    pert->add_option("--threads", pert_threads, "worker threads");
    if (const char* root = std::getenv("HAMLET_OUT")) pert_out = std::string(root) + "/perturb";
    pert->add_option("--out", pert_out, "output directory");

    auto* ablate = app.add_subcommand("ablate", "train/evaluate an ablation grid");
    add_common(ablate, ablate_o, "ablate");
    std::string axis, values, ab_train, ab_within, ab_cross, ab_csv;
    ablate->add_option("--axis", axis,
                       "fusion | arrangement | composition | objective | weights | heads | taps")
        ->required();
    ablate->add_option("--values", values, "comma-separated cell override");
    ablate->add_option("--train", ab_train, "training manifest")->required();
    ablate->add_option("--within", ab_within, "within-domain evaluation manifest")->required();
    ablate->add_option("--cross", ab_cross, "cross-domain evaluation manifest");
    ablate->add_option("--csv", ab_csv, "output CSV path (default <out>/ablation_<axis>.csv)");

    auto* attn = app.add_subcommand("attn-export", "export per-token attention maps as PGM");
    std::string attn_ckpt, attn_image, attn_out = "out/attn";
    int attn_threads = 1;
    attn->add_option("--ckpt", attn_ckpt, "checkpoint")->required();
    attn->add_option("--image", attn_image, "input image (PPM or CTEN)")->required();
    attn->add_option("--threads", attn_threads, "worker threads");
    if (const char* root = std::getenv("HAMLET_OUT")) attn_out = std::string(root) + "/attn";
    attn->add_option("--out", attn_out, "output directory");

    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient suite");
    std::string precision = "f64";
    int grad_configs = 10;
    grad->add_option("--precision", precision, "f64 or f32")
        ->check(CLI::IsMember({"f64", "f32"}));
    grad->add_option("--configs", grad_configs, "number of random configurations");
    grad->add_option("--seed", grad_o.seed, "suite seed");

    auto* verify = app.add_subcommand("verify-frozen", "compare backbone tensors of two checkpoints");
    std::string before, after;
    verify->add_option("--before", before, "checkpoint before training")->required();
    verify->add_option("--after", after, "checkpoint after training")->required();

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        hamlet_ctx* ctx = make_ctx(synth_o);
        char* summary = nullptr;
        const int rc = hamlet_synth(ctx, synth_o.out.c_str(), &summary);
        print_and_free(summary);
        hamlet_ctx_destroy(ctx);
        return report(rc);
    }

    if (train->parsed()) {
        if (epochs >= 0) train_o.overrides.push_back("train.epochs=" + std::to_string(epochs));
        if (batch >= 0) train_o.overrides.push_back("train.batch_size=" + std::to_string(batch));
        if (lr >= 0) train_o.overrides.push_back("train.lr=" + std::to_string(lr));
        if (b1 >= 0) train_o.overrides.push_back("train.beta1=" + std::to_string(b1));
        if (b2 >= 0) train_o.overrides.push_back("train.beta2=" + std::to_string(b2));
        if (wd >= 0) train_o.overrides.push_back("train.weight_decay=" + std::to_string(wd));
        if (clip >= 0) train_o.overrides.push_back("train.grad_clip=" + std::to_string(clip));
        hamlet_ctx* ctx = make_ctx(train_o);
        const int rc = hamlet_train(ctx, train_manifest.c_str(), train_o.out.c_str());
        if (rc == HAMLET_OK)
            std::cout << "{\"checkpoint\": \"" << train_o.out << "/model.hmlt\"}\n";
        hamlet_ctx_destroy(ctx);
        return report(rc);
    }

    if (eval->parsed()) {
        char* rep = nullptr;
        const int rc = hamlet_eval(eval_ckpt.c_str(), eval_manifest.c_str(), eval_threads, &rep);
        if (rc == HAMLET_OK && rep && !eval_out.empty()) {
            std::ofstream(eval_out + "/report.json") << rep;
        }
        print_and_free(rep);
        return report(rc);
    }

    if (pert->parsed()) {
        char* summary = nullptr;
        const int rc = hamlet_perturb_eval(pert_ckpt.c_str(), pert_manifest.c_str(),
                                           pert_out.c_str(), pert_threads, &summary);
        print_and_free(summary);
        return report(rc);
    }

    if (ablate->parsed()) {
        hamlet_ctx* ctx = make_ctx(ablate_o);
        if (ab_csv.empty()) ab_csv = ablate_o.out + "/ablation_" + axis + ".csv";
        char* summary = nullptr;
        const int rc = hamlet_ablate(ctx, axis.c_str(), values.c_str(), ab_train.c_str(),
                                     ab_within.c_str(), ab_cross.empty() ? nullptr : ab_cross.c_str(),
                                     ab_csv.c_str(), &summary);
        print_and_free(summary);
        hamlet_ctx_destroy(ctx);
        return report(rc);
    }

    if (attn->parsed()) {
        int count = 0;
        const int rc = hamlet_attn_export(attn_ckpt.c_str(), attn_image.c_str(), attn_out.c_str(),
                                          attn_threads, &count);
        if (rc == HAMLET_OK)
            std::cout << "{\"maps\": " << count << ", \"out\": \"" << attn_out << "\"}\n";
        return report(rc);
    }

    if (grad->parsed()) {
        double max_err = 0.0;
        const int rc =
            hamlet_grad_check(precision.c_str(), grad_o.seed, grad_configs, &max_err);
        if (rc != HAMLET_OK) return report(rc);
        const double threshold = precision == "f64" ? 1e-5 : 1e-2;
        std::printf("{\"precision\": \"%s\", \"max_rel_err\": %.3e, \"threshold\": %.0e}\n",
                    precision.c_str(), max_err, threshold);
        return max_err < threshold ? 0 : kExitRuntime;
    }

    if (verify->parsed()) {
        int frozen = 0;
        const int rc = hamlet_verify_frozen(before.c_str(), after.c_str(), &frozen);
        if (rc != HAMLET_OK) return report(rc);
        std::printf("{\"frozen\": %s}\n", frozen ? "true" : "false");
        return frozen ? 0 : kExitRuntime;
    }

    return kExitUsage;
}
