#include "hamlet/hamlet.h"

#include <cstring>
#include <string>

#include "core/pipeline.hpp"

using namespace hamlet;

struct hamlet_ctx {
    RunConfig cfg;
};

namespace {

thread_local std::string t_errmsg;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

int classify(const std::exception& e) {
    t_errmsg = e.what();
    if (dynamic_cast<const ConfigError*>(&e)) return HAMLET_ERR_USAGE;
    return HAMLET_ERR_RUNTIME;
}

template <class Fn>
int guarded(Fn&& fn) {
    try {
        t_errmsg.clear();
        fn();
        return HAMLET_OK;
    } catch (const std::exception& e) {
        return classify(e);
    } catch (...) {
        t_errmsg = "unknown error";
        return HAMLET_ERR_RUNTIME;
    }
}

int require(bool ok, const char* what) {
    if (ok) return HAMLET_OK;
    t_errmsg = std::string("missing required argument: ") + what;
    return HAMLET_ERR_USAGE;
}

}  // namespace

extern "C" {

hamlet_ctx* hamlet_ctx_create(const char* config_json, const char* profile, uint64_t seed,
                              int threads) {
    try {
        t_errmsg.clear();
        RunConfig cfg = RunConfig::resolve(config_json ? config_json : "",
                                           profile ? profile : "desk");
        cfg.seed = seed;
        if (threads > 0) cfg.threads = threads;
        cfg.validate();
        set_num_threads(cfg.threads);
        return new hamlet_ctx{std::move(cfg)};
    } catch (const std::exception& e) {
        t_errmsg = e.what();
        return nullptr;
    }
}

void hamlet_ctx_destroy(hamlet_ctx* ctx) { delete ctx; }

const char* hamlet_errmsg(void) { return t_errmsg.c_str(); }

void hamlet_free(char* str) { std::free(str); }

int hamlet_resolved_config(hamlet_ctx* ctx, char** json_out) {
    if (int rc = require(ctx && json_out, "ctx/json_out")) return rc;
    return guarded([&] { *json_out = dup_string(ctx->cfg.to_json()); });
}

int hamlet_synth(hamlet_ctx* ctx, const char* out_dir, char** summary_out) {
    if (int rc = require(ctx && out_dir, "ctx/out_dir")) return rc;
    return guarded([&] {
        std::string summary = run_synth(ctx->cfg, out_dir);
        if (summary_out) *summary_out = dup_string(summary);
    });
}

int hamlet_train(hamlet_ctx* ctx, const char* train_manifest, const char* out_dir) {
    if (int rc = require(ctx && train_manifest && out_dir, "ctx/manifest/out_dir")) return rc;
    return guarded([&] { run_train(ctx->cfg, train_manifest, out_dir); });
}

int hamlet_eval(const char* checkpoint, const char* manifest, int threads, char** report_out) {
    if (int rc = require(checkpoint && manifest, "checkpoint/manifest")) return rc;
    return guarded([&] {
        std::string report = run_eval(checkpoint, manifest, threads);
        if (report_out) *report_out = dup_string(report);
    });
}

int hamlet_perturb_eval(const char* checkpoint, const char* manifest, const char* out_dir,
                        int threads, char** summary_out) {
    if (int rc = require(checkpoint && manifest && out_dir, "checkpoint/manifest/out_dir"))
        return rc;
    return guarded([&] {
        std::string summary = run_perturb_eval(checkpoint, manifest, out_dir, threads);
        if (summary_out) *summary_out = dup_string(summary);
    });
}

int hamlet_ablate(hamlet_ctx* ctx, const char* axis, const char* values_csv,
                  const char* train_manifest, const char* within_manifest,
                  const char* cross_manifest, const char* out_csv, char** summary_out) {
    if (int rc = require(ctx && axis && train_manifest && within_manifest && out_csv,
                         "ctx/axis/train/within/out_csv"))
        return rc;
    return guarded([&] {
        std::string summary =
            run_ablate(ctx->cfg, axis, values_csv ? values_csv : "", train_manifest,
                       within_manifest, cross_manifest ? cross_manifest : "", out_csv);
        if (summary_out) *summary_out = dup_string(summary);
    });
}

int hamlet_grad_check(const char* precision, uint64_t seed, int configs,
                      double* max_rel_err_out) {
    if (int rc = require(precision && max_rel_err_out, "precision/out")) return rc;
    return guarded([&] {
        Precision prec;
        const std::string p = precision;
        if (p == "f64") prec = Precision::f64;
        else if (p == "f32") prec = Precision::f32;
        else throw ConfigError("precision must be f32 or f64");
        GradCheckSummary summary = run_grad_check(prec, seed, configs > 0 ? configs : 10);
        *max_rel_err_out = summary.max_rel_err;
    });
}

int hamlet_verify_frozen(const char* before, const char* after, int* frozen_out) {
    if (int rc = require(before && after && frozen_out, "before/after/out")) return rc;
    return guarded([&] { *frozen_out = run_verify_frozen(before, after) ? 1 : 0; });
}

int hamlet_attn_export(const char* checkpoint, const char* image_path, const char* out_dir,
                       int threads, int* map_count_out) {
    if (int rc = require(checkpoint && image_path && out_dir, "checkpoint/image/out_dir"))
        return rc;
    return guarded([&] {
        const int n = run_attn_export(checkpoint, image_path, out_dir, threads);
        if (map_count_out) *map_count_out = n;
    });
}

}  // extern "C"
