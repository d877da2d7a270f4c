#include "backbone.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace hamlet {

const std::string Backbone::kPriorPromptText = "A photo of a face.";

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::paper() {
    BackboneConfig cfg;
    cfg.image_size = 224;
    cfg.patch_size = 14;
    cfg.vision_width = 1024;
    cfg.vision_blocks = 24;
    cfg.vision_heads = 16;
    cfg.tap_blocks = {4, 8, 12, 16, 20, 24};
    cfg.text_width = 768;
    cfg.text_blocks = 12;
    cfg.text_heads = 12;
    cfg.context_length = 77;
    cfg.vocab_size = 49408;
    cfg.embed_dim = 768;
    cfg.temperature = 0.01;
    return cfg;
}

void BackboneConfig::validate() const {
    if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0)
        throw ConfigError("backbone.image_size must be a positive multiple of patch_size");
    if (vision_blocks == 0 || text_blocks == 0) throw ConfigError("backbone: block counts must be >= 1");
    if (tap_blocks.empty()) throw ConfigError("backbone.tap_blocks must list at least one block");
    for (std::size_t i = 0; i < tap_blocks.size(); ++i) {
        if (tap_blocks[i] < 1 || tap_blocks[i] > vision_blocks)
            throw ConfigError("backbone.tap_blocks: index " + std::to_string(tap_blocks[i]) +
                              " outside [1," + std::to_string(vision_blocks) + "]");
        if (i > 0 && tap_blocks[i] <= tap_blocks[i - 1])
            throw ConfigError("backbone.tap_blocks must be sorted and unique");
    }
    if (vision_heads < 1 || vision_width % static_cast<std::size_t>(vision_heads) != 0)
        throw ConfigError("backbone.vision_width must be divisible by vision_heads");
    if (text_heads < 1 || text_width % static_cast<std::size_t>(text_heads) != 0)
        throw ConfigError("backbone.text_width must be divisible by text_heads");
    if (vocab_size < 4) throw ConfigError("backbone.vocab_size must be >= 4");
    if (context_length < 3) throw ConfigError("backbone.context_length must be >= 3");
    if (embed_dim == 0) throw ConfigError("backbone.embed_dim must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("backbone.temperature must be > 0");
}

std::vector<int> ToyTokenizer::word_ids(const std::string& text) const {
    std::vector<int> ids;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        const std::uint64_t h = fnv1a(word);
        ids.push_back(kPad + 1 + static_cast<int>(h % (vocab_size - 3)));
        word.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch)))
            flush();
        else
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    flush();
    return ids;
}

namespace {

TransformerBlockParams init_block(std::size_t width, int heads, Rng& rng) {
    TransformerBlockParams b;
    b.ln1 = LayerNormParams::init(width);
    b.ln2 = LayerNormParams::init(width);
    b.attn = AttentionParams::init(width, width, heads, rng);
    const std::size_t hidden = width * 4;
    b.mlp_w1 = Tensor::randn({width, hidden}, rng, 1.0 / std::sqrt(static_cast<double>(width)));
    b.mlp_b1 = Tensor::zeros({hidden});
    b.mlp_w2 = Tensor::randn({hidden, width}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
    b.mlp_b2 = Tensor::zeros({width});
    return b;
}

void collect_block(const std::string& prefix, const TransformerBlockParams& b,
                   std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".ln1.gain", b.ln1.gain);
    out.emplace_back(prefix + ".ln1.bias", b.ln1.bias);
    out.emplace_back(prefix + ".attn.wq", b.attn.wq);
    out.emplace_back(prefix + ".attn.bq", b.attn.bq);
    out.emplace_back(prefix + ".attn.wk", b.attn.wk);
    out.emplace_back(prefix + ".attn.wv", b.attn.wv);
    out.emplace_back(prefix + ".attn.bv", b.attn.bv);
    out.emplace_back(prefix + ".attn.wo", b.attn.wo);
    out.emplace_back(prefix + ".attn.bo", b.attn.bo);
    out.emplace_back(prefix + ".ln2.gain", b.ln2.gain);
    out.emplace_back(prefix + ".ln2.bias", b.ln2.bias);
    out.emplace_back(prefix + ".mlp.w1", b.mlp_w1);
    out.emplace_back(prefix + ".mlp.b1", b.mlp_b1);
    out.emplace_back(prefix + ".mlp.w2", b.mlp_w2);
    out.emplace_back(prefix + ".mlp.b2", b.mlp_b2);
}

Tensor causal_mask(std::size_t len) {
    std::vector<double> m(len * len, 0.0);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = i + 1; j < len; ++j) m[i * len + j] = -1e30;
    return Tensor::from_data({len, len}, std::move(m));
}

// [B,3,H,W] -> [B, N, 3*p*p], channel-major within a patch.
Tensor patchify(const Tensor& images, const BackboneConfig& cfg) {
    const std::size_t B = images.size(0), H = cfg.image_size, p = cfg.patch_size;
    const std::size_t g = H / p, N = g * g, pd = 3 * p * p;
    const auto& in = images.data();
    std::vector<double> out(B * N * pd);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t gy = 0; gy < g; ++gy)
            for (std::size_t gx = 0; gx < g; ++gx) {
                double* dst = out.data() + (b * N + gy * g + gx) * pd;
                std::size_t w = 0;
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t py = 0; py < p; ++py)
                        for (std::size_t px = 0; px < p; ++px)
                            dst[w++] = in[((b * 3 + c) * H + gy * p + py) * H + gx * p + px];
            }
    return Tensor::from_data({B, N, pd}, std::move(out));
}

}  // namespace

Backbone Backbone::init(const BackboneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Backbone bb;
    bb.cfg_ = cfg;
    Rng root(seed);

    Rng vr = root.derive("backbone.visual");
    const std::size_t dv = cfg.vision_width, de = cfg.embed_dim;
    const std::size_t pd = 3 * cfg.patch_size * cfg.patch_size;
    const double sv = 1.0 / std::sqrt(static_cast<double>(dv));
    bb.visual_.patch_proj = Tensor::randn({pd, dv}, vr, 1.0 / std::sqrt(static_cast<double>(pd)));
    bb.visual_.class_token = Tensor::randn({1, dv}, vr, sv);
    bb.visual_.pos_embed = Tensor::randn({cfg.num_patches() + 1, dv}, vr, sv);
    bb.visual_.ln_pre = LayerNormParams::init(dv);
    bb.visual_.ln_post = LayerNormParams::init(dv);
    for (std::size_t i = 0; i < cfg.vision_blocks; ++i) {
        Rng br = root.derive("backbone.visual.block", i);
        bb.visual_.blocks.push_back(init_block(dv, cfg.vision_heads, br));
    }
    bb.visual_.proj = Tensor::randn({dv, de}, vr, sv);

    Rng tr = root.derive("backbone.text");
    const std::size_t dt = cfg.text_width;
    const double st = 1.0 / std::sqrt(static_cast<double>(dt));
    bb.text_.token_embedding = Tensor::randn({cfg.vocab_size, dt}, tr, st);
    bb.text_.pos_embed = Tensor::randn({cfg.context_length, dt}, tr, st);
    for (std::size_t i = 0; i < cfg.text_blocks; ++i) {
        Rng br = root.derive("backbone.text.block", i);
        bb.text_.blocks.push_back(init_block(dt, cfg.text_heads, br));
    }
    bb.text_.ln_final = LayerNormParams::init(dt);
    bb.text_.proj = Tensor::randn({dt, de}, tr, st);
    return bb;
}

Tensor Backbone::run_blocks(Tensor x, const std::vector<TransformerBlockParams>& blocks,
                            const Tensor* mask, const std::vector<std::size_t>* taps,
                            std::vector<Tensor>* tap_out) const {
    std::size_t next_tap = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        Tensor h = layer_norm(x, b.ln1);
        x = add(x, multihead_attention(h, h, h, b.attn, mask));
        Tensor m = layer_norm(x, b.ln2);
        m = linear(gelu(linear(m, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
        x = add(x, m);
        if (taps && next_tap < taps->size() && (*taps)[next_tap] == i + 1) {
            tap_out->push_back(slice(x, 1, 1, x.size(1) - 1).detach());
            ++next_tap;
        }
    }
    return x;
}

std::pair<ImageFeatures, MultiLevelFeatures> Backbone::encode_image(const Tensor& images) const {
    if (images.ndim() != 4 || images.size(1) != 3 || images.size(2) != cfg_.image_size ||
        images.size(3) != cfg_.image_size)
        throw DataError("encode_image: expected [B,3," + std::to_string(cfg_.image_size) + "," +
                        std::to_string(cfg_.image_size) + "], got " + shape_str(images.shape()));
    NoGradGuard ng;
    const std::size_t B = images.size(0);
    Tensor x = linear(patchify(images, cfg_), visual_.patch_proj);        // [B,N,dv]
    Tensor cls = broadcast0(visual_.class_token, B);                      // [B,1,dv]
    x = concat({cls, x}, 1);                                              // [B,N+1,dv]
    x = add(x, broadcast0(visual_.pos_embed, B));
    x = layer_norm(x, visual_.ln_pre);
    std::vector<Tensor> taps;
    x = run_blocks(x, visual_.blocks, nullptr, &cfg_.tap_blocks, &taps);
    Tensor cls_out = reshape(slice(x, 1, 0, 1), {B, cfg_.vision_width});
    Tensor v_cls = linear(layer_norm(cls_out, visual_.ln_post), visual_.proj);
    return {ImageFeatures{v_cls}, MultiLevelFeatures{stack0(taps)}};
}

Tensor Backbone::encode_text_embeddings(const Tensor& embeds) const {
    if (embeds.ndim() != 3 || embeds.size(2) != cfg_.text_width)
        throw ConfigError("encode_text_embeddings: expected [B,T," +
                          std::to_string(cfg_.text_width) + "]");
    const std::size_t B = embeds.size(0), T = embeds.size(1);
    if (T + 2 > cfg_.context_length)
        throw ConfigError("encode_text_embeddings: sequence length " + std::to_string(T) +
                          " + 2 exceeds context_length " + std::to_string(cfg_.context_length));
    const std::size_t S = T + 2;
    Tensor sot = broadcast0(slice(text_.token_embedding, 0, ToyTokenizer::kStart, 1), B);
    Tensor eot = broadcast0(slice(text_.token_embedding, 0, ToyTokenizer::kEnd, 1), B);
    Tensor x = T > 0 ? concat({sot, embeds, eot}, 1) : concat({sot, eot}, 1);  // [B,S,dt]
    x = add(x, broadcast0(slice(text_.pos_embed, 0, 0, S), B));
    // Causal masking makes positions beyond S invisible to the readout at T+1,
    // so the pad tail of the context window never needs to be materialized.
    Tensor mask = causal_mask(S);
    x = run_blocks(x, text_.blocks, &mask, nullptr, nullptr);
    x = layer_norm(x, text_.ln_final);
    Tensor pooled = reshape(slice(x, 1, T + 1, 1), {B, cfg_.text_width});
    return linear(pooled, text_.proj);
}

Tensor Backbone::word_embeddings(const ToyTokenizer& tok, const std::string& text) const {
    const std::vector<int> ids = tok.word_ids(text);
    std::vector<Tensor> rows;
    rows.reserve(ids.size());
    for (int id : ids) rows.push_back(slice(text_.token_embedding, 0, static_cast<std::size_t>(id), 1));
    if (rows.empty()) return Tensor::zeros({0, cfg_.text_width});
    return concat(rows, 0);  // [T, dt]
}

Tensor Backbone::encode_prior_prompt(const ToyTokenizer& tok) const {
    if (prior_cache_.defined()) return prior_cache_;
    NoGradGuard ng;
    Tensor words = word_embeddings(tok, kPriorPromptText);
    Tensor seq = reshape(words, {1, words.size(0), cfg_.text_width});
    prior_cache_ = encode_text_embeddings(seq);  // [1, de]
    return prior_cache_;
}

std::vector<std::pair<std::string, Tensor>> Backbone::named_params(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back(prefix + "visual.patch_proj", visual_.patch_proj);
    out.emplace_back(prefix + "visual.class_token", visual_.class_token);
    out.emplace_back(prefix + "visual.pos_embed", visual_.pos_embed);
    out.emplace_back(prefix + "visual.ln_pre.gain", visual_.ln_pre.gain);
    out.emplace_back(prefix + "visual.ln_pre.bias", visual_.ln_pre.bias);
    for (std::size_t i = 0; i < visual_.blocks.size(); ++i)
        collect_block(prefix + "visual.block" + std::to_string(i), visual_.blocks[i], out);
    out.emplace_back(prefix + "visual.ln_post.gain", visual_.ln_post.gain);
    out.emplace_back(prefix + "visual.ln_post.bias", visual_.ln_post.bias);
    out.emplace_back(prefix + "visual.proj", visual_.proj);
    out.emplace_back(prefix + "text.token_embedding", text_.token_embedding);
    out.emplace_back(prefix + "text.pos_embed", text_.pos_embed);
    for (std::size_t i = 0; i < text_.blocks.size(); ++i)
        collect_block(prefix + "text.block" + std::to_string(i), text_.blocks[i], out);
    out.emplace_back(prefix + "text.ln_final.gain", text_.ln_final.gain);
    out.emplace_back(prefix + "text.ln_final.bias", text_.ln_final.bias);
    out.emplace_back(prefix + "text.proj", text_.proj);
    return out;
}

Tensor rowwise_cosine(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || a.shape() != b.shape())
        throw ConfigError("rowwise_cosine: expected matching [B,D] inputs");
    const std::size_t B = a.size(0), D = a.size(1);
    for (std::size_t r = 0; r < B; ++r) {
        double na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < D; ++i) {
            na += a.data()[r * D + i] * a.data()[r * D + i];
            nb += b.data()[r * D + i] * b.data()[r * D + i];
        }
        if (na <= 0.0 || nb <= 0.0) throw DataError("cosine: zero-norm vector");
    }
    Tensor dot = sum_axis(mul(a, b), 1);
    Tensor na = sqrt_t(sum_axis(mul(a, a), 1));
    Tensor nb = sqrt_t(sum_axis(mul(b, b), 1));
    return div(dot, mul(na, nb));
}

Tensor zero_shot_probability(const Tensor& v_cls, const Tensor& prompt_feats, double tau) {
    if (prompt_feats.ndim() != 2 || prompt_feats.size(0) < 2)
        throw ConfigError("zero_shot_probability: need at least 2 class prompts");
    if (!(tau > 0.0)) throw ConfigError("zero_shot_probability: tau must be > 0");
    const std::size_t B = v_cls.size(0), D = v_cls.size(1), C = prompt_feats.size(0);
    if (prompt_feats.size(1) != D) throw ConfigError("zero_shot_probability: dim mismatch");
    const auto& vv = v_cls.data();
    const auto& pv = prompt_feats.data();
    std::vector<double> logits(B * C);
    for (std::size_t b = 0; b < B; ++b) {
        double nv = 0.0;
        for (std::size_t i = 0; i < D; ++i) nv += vv[b * D + i] * vv[b * D + i];
        if (nv <= 0.0) throw DataError("zero_shot_probability: zero-norm image feature");
        for (std::size_t c = 0; c < C; ++c) {
            double np = 0.0, dot = 0.0;
            for (std::size_t i = 0; i < D; ++i) {
                np += pv[c * D + i] * pv[c * D + i];
                dot += vv[b * D + i] * pv[c * D + i];
            }
            if (np <= 0.0) throw DataError("zero_shot_probability: zero-norm prompt feature");
            logits[b * C + c] = dot / (std::sqrt(nv) * std::sqrt(np) * tau);
        }
    }
    return softmax_lastdim(Tensor::from_data({B, C}, std::move(logits)));
}

}  // namespace hamlet
