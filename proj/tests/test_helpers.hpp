#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "core/model.hpp"

namespace hamlet::testing {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("hamlet_t_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Small-but-complete model geometry for fast training tests.
inline ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.backbone.image_size = 16;
    cfg.backbone.patch_size = 4;  // N = 16
    cfg.backbone.vision_width = 32;
    cfg.backbone.vision_blocks = 2;
    cfg.backbone.vision_heads = 2;
    cfg.backbone.tap_blocks = {1, 2};
    cfg.backbone.text_width = 24;
    cfg.backbone.text_blocks = 2;
    cfg.backbone.text_heads = 2;
    cfg.backbone.context_length = 24;
    cfg.backbone.vocab_size = 64;
    cfg.backbone.embed_dim = 16;
    cfg.prompts.num_real = 1;
    cfg.prompts.num_fake = 1;
    cfg.prompts.num_context = 4;
    cfg.fusion.heads = 2;
    return cfg;
}

}  // namespace hamlet::testing
