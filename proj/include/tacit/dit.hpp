#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/graph.hpp"
#include "tacit/image.hpp"
#include "tacit/rng.hpp"
#include "tacit/tensor.hpp"

namespace tacit {

struct ModelConfig {
    int resolution = 64;
    int patch = 8;
    int hidden = 384;
    int blocks = 8;
    int heads = 6;
    int head_dim = 64;
    int mlp = 1536;
    int time_freq = 256;

    /// Full-size configuration.
    static ModelConfig paper() { return ModelConfig{}; }

    /// Laptop-scale preset: same 64-token shape at 32x32 resolution.
    static ModelConfig desk() { return ModelConfig{32, 4, 128, 4, 4, 32, 512, 256}; }

    int grid() const { return resolution / patch; }
    int tokens() const { return grid() * grid(); }
    int patch_dim() const { return patch * patch * 3; }

    void validate() const {
        require(resolution >= 1 && patch >= 1 && resolution % patch == 0,
                ErrorCategory::invalid_argument, "resolution must be divisible by patch size");
        require(heads >= 1 && head_dim >= 1 && heads * head_dim == hidden,
                ErrorCategory::invalid_argument, "heads * head_dim must equal hidden dim");
        require(mlp == 4 * hidden, ErrorCategory::invalid_argument, "mlp dim must be 4x hidden");
        require(hidden % 4 == 0, ErrorCategory::invalid_argument,
                "hidden dim must be divisible by 4 for the 2-D positional table");
        require(blocks >= 1 && time_freq >= 2 && time_freq % 2 == 0,
                ErrorCategory::invalid_argument, "bad block count or timestep feature dim");
    }

    bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct BlockParams {
    Tensor<T> mod1_w, mod1_b;          // d -> 2d, (gamma, beta) before attention
    Tensor<T> qkv_w, qkv_b;            // d -> 3d
    Tensor<T> attn_out_w, attn_out_b;  // d -> d
    Tensor<T> mod2_w, mod2_b;          // d -> 2d, before the feedforward
    Tensor<T> ffn1_w, ffn1_b;          // d -> 4d
    Tensor<T> ffn2_w, ffn2_b;          // 4d -> d
};

/// All model tensors. `pos_table` is frozen (deterministic from the config);
/// everything else is trainable.
template <typename T>
struct DitParams {
    ModelConfig config;
    Tensor<T> patch_w, patch_b;  // p^2*3 -> d
    Tensor<T> pos_table;         // [tokens, d]
    Tensor<T> time_w1, time_b1;  // time_freq -> d
    Tensor<T> time_w2, time_b2;  // d -> d
    std::vector<BlockParams<T>> blocks;
    Tensor<T> final_mod_w, final_mod_b;  // d -> 2d
    Tensor<T> final_w, final_b;          // d -> p^2*3
};

/// Visits every tensor including the frozen positional table, in the fixed
/// serialization order shared by checkpoints. P is DitParams<T>, const or not.
template <typename P, typename F>
void for_each_tensor(P& params, F&& fn) {
    fn("patch.w", params.patch_w);
    fn("patch.b", params.patch_b);
    fn("pos_table", params.pos_table);
    fn("time.w1", params.time_w1);
    fn("time.b1", params.time_b1);
    fn("time.w2", params.time_w2);
    fn("time.b2", params.time_b2);
    for (size_t i = 0; i < params.blocks.size(); ++i) {
        auto& b = params.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        fn(p + "mod1.w", b.mod1_w);
        fn(p + "mod1.b", b.mod1_b);
        fn(p + "qkv.w", b.qkv_w);
        fn(p + "qkv.b", b.qkv_b);
        fn(p + "attn_out.w", b.attn_out_w);
        fn(p + "attn_out.b", b.attn_out_b);
        fn(p + "mod2.w", b.mod2_w);
        fn(p + "mod2.b", b.mod2_b);
        fn(p + "ffn1.w", b.ffn1_w);
        fn(p + "ffn1.b", b.ffn1_b);
        fn(p + "ffn2.w", b.ffn2_w);
        fn(p + "ffn2.b", b.ffn2_b);
    }
    fn("final_mod.w", params.final_mod_w);
    fn("final_mod.b", params.final_mod_b);
    fn("final.w", params.final_w);
    fn("final.b", params.final_b);
}

/// Trainable subset, same relative order as for_each_tensor.
template <typename P, typename F>
void for_each_trainable(P& params, F&& fn) {
    for_each_tensor(params, [&fn](const std::string& name, auto& tensor) {
        if (name != "pos_table") fn(name, tensor);
    });
}

template <typename T>
std::vector<Tensor<T>*> trainable_tensors(DitParams<T>& params) {
    std::vector<Tensor<T>*> out;
    for_each_trainable(params, [&out](const std::string&, Tensor<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> trainable_tensors(const DitParams<T>& params) {
    std::vector<const Tensor<T>*> out;
    for_each_trainable(params,
                       [&out](const std::string&, const Tensor<T>& t) { out.push_back(&t); });
    return out;
}

inline int64_t trainable_param_count(const ModelConfig& cfg) {
    const int64_t d = cfg.hidden;
    const int64_t pd = cfg.patch_dim();
    const int64_t per_block = (d * 2 * d + 2 * d)        // mod1
                              + (d * 3 * d + 3 * d)      // qkv
                              + (d * d + d)              // attn out
                              + (d * 2 * d + 2 * d)      // mod2
                              + (d * cfg.mlp + cfg.mlp)  // ffn1
                              + (cfg.mlp * d + d);       // ffn2
    return (pd * d + d)                                   // patch embed
           + (int64_t(cfg.time_freq) * d + d) + (d * d + d)  // timestep mlp
           + cfg.blocks * per_block + (d * 2 * d + 2 * d)    // final modulation
           + (d * pd + pd);                                  // final projection
}

/// Frozen 2-D sinusoidal table for a g x g patch grid. The first half of each
/// vector encodes the column (x), the second half the row (y); within a half,
/// dims 2i / 2i+1 hold sin / cos of pos / 10000^(2i/(d/2)).
template <typename T>
Tensor<T> pos_encoding_2d(int grid, int d) {
    require(d % 4 == 0, ErrorCategory::invalid_argument,
            "positional dim must be divisible by 4");
    Tensor<T> table({grid * grid, d});
    const int half = d / 2;
    for (int row = 0; row < grid; ++row) {
        for (int col = 0; col < grid; ++col) {
            T* out = &table.data[(size_t(row) * grid + col) * d];
            for (int i = 0; i < half / 2; ++i) {
                const double freq = std::pow(10000.0, -2.0 * i / half);
                out[2 * i] = static_cast<T>(std::sin(col * freq));
                out[2 * i + 1] = static_cast<T>(std::cos(col * freq));
                out[half + 2 * i] = static_cast<T>(std::sin(row * freq));
                out[half + 2 * i + 1] = static_cast<T>(std::cos(row * freq));
            }
        }
    }
    return table;
}

/// Sinusoidal timestep features: dim/2 sines then dim/2 cosines of
/// t * 10000^(-k/(dim/2 - 1)), k = 0..dim/2-1, applied to raw t in [0,1].
template <typename T>
Tensor<T> timestep_features(double t, int dim) {
    require(t >= 0.0 && t <= 1.0, ErrorCategory::invalid_argument,
            "timestep must lie in [0,1]");
    Tensor<T> out({1, dim});
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -double(k) / double(half - 1));
        out.data[k] = static_cast<T>(std::sin(t * freq));
        out.data[half + k] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

/// CHW image -> [tokens, p^2*3] raw patches. Patches are ordered row-major
/// over the patch grid; within a patch values are flattened channel, then
/// row, then column.
template <typename T>
Tensor<T> patchify(const Image<T>& img, int patch) {
    require(img.height == img.width && img.height % patch == 0,
            ErrorCategory::invalid_argument, "image side must be divisible by patch size");
    const int g = img.height / patch;
    const int pd = patch * patch * 3;
    Tensor<T> tokens({g * g, pd});
    for (int pr = 0; pr < g; ++pr)
        for (int pc = 0; pc < g; ++pc) {
            T* out = &tokens.data[(size_t(pr) * g + pc) * pd];
            for (int c = 0; c < 3; ++c)
                for (int r = 0; r < patch; ++r)
                    for (int col = 0; col < patch; ++col)
                        out[(c * patch + r) * patch + col] =
                            img.at(c, pr * patch + r, pc * patch + col);
        }
    return tokens;
}

/// Exact inverse of patchify.
template <typename T>
Image<T> unpatchify(const Tensor<T>& tokens, int patch, int resolution) {
    const int g = resolution / patch;
    const int pd = patch * patch * 3;
    require(tokens.ndim() == 2 && tokens.rows() == g * g && tokens.cols() == pd &&
                resolution % patch == 0,
            ErrorCategory::invalid_argument, "token shape does not match image geometry");
    Image<T> img(resolution, resolution);
    for (int pr = 0; pr < g; ++pr)
        for (int pc = 0; pc < g; ++pc) {
            const T* in = &tokens.data[(size_t(pr) * g + pc) * pd];
            for (int c = 0; c < 3; ++c)
                for (int r = 0; r < patch; ++r)
                    for (int col = 0; col < patch; ++col)
                        img.at(c, pr * patch + r, pc * patch + col) =
                            in[(c * patch + r) * patch + col];
        }
    return img;
}

/// Allocates all tensors at their configured shapes, zero-filled except the
/// (deterministic) positional table.
template <typename T>
DitParams<T> make_params(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.hidden;
    DitParams<T> p;
    p.config = cfg;
    p.patch_w = Tensor<T>({cfg.patch_dim(), d});
    p.patch_b = Tensor<T>({d});
    p.pos_table = pos_encoding_2d<T>(cfg.grid(), d);
    p.time_w1 = Tensor<T>({cfg.time_freq, d});
    p.time_b1 = Tensor<T>({d});
    p.time_w2 = Tensor<T>({d, d});
    p.time_b2 = Tensor<T>({d});
    p.blocks.resize(cfg.blocks);
    for (auto& b : p.blocks) {
        b.mod1_w = Tensor<T>({d, 2 * d});
        b.mod1_b = Tensor<T>({2 * d});
        b.qkv_w = Tensor<T>({d, 3 * d});
        b.qkv_b = Tensor<T>({3 * d});
        b.attn_out_w = Tensor<T>({d, d});
        b.attn_out_b = Tensor<T>({d});
        b.mod2_w = Tensor<T>({d, 2 * d});
        b.mod2_b = Tensor<T>({2 * d});
        b.ffn1_w = Tensor<T>({d, cfg.mlp});
        b.ffn1_b = Tensor<T>({cfg.mlp});
        b.ffn2_w = Tensor<T>({cfg.mlp, d});
        b.ffn2_b = Tensor<T>({d});
    }
    p.final_mod_w = Tensor<T>({d, 2 * d});
    p.final_mod_b = Tensor<T>({2 * d});
    p.final_w = Tensor<T>({d, cfg.patch_dim()});
    p.final_b = Tensor<T>({cfg.patch_dim()});
    return p;
}

/// Weight init: truncated normal (std 0.02) for projection weights, zeros for
/// biases. Modulation linears start as the identity modulation (zero weight,
/// gamma bias 1, beta bias 0); the attention output, second feedforward and
/// final projections start at zero so every block is the identity map and the
/// model emits zero velocity until training moves it.
template <typename T>
DitParams<T> init_params(const ModelConfig& cfg, uint64_t seed) {
    DitParams<T> p = make_params<T>(cfg);
    Xoshiro256ss rng(seed);
    auto trunc_normal = [&rng](Tensor<T>& t) {
        for (auto& v : t.data) v = static_cast<T>(rng.truncated_normal(0.02));
    };
    auto gamma_bias_one = [&cfg](Tensor<T>& b) {
        for (int i = 0; i < cfg.hidden; ++i) b.data[i] = T(1);  // beta half stays 0
    };

    trunc_normal(p.patch_w);
    trunc_normal(p.time_w1);
    trunc_normal(p.time_w2);
    for (auto& b : p.blocks) {
        gamma_bias_one(b.mod1_b);
        trunc_normal(b.qkv_w);
        gamma_bias_one(b.mod2_b);
        trunc_normal(b.ffn1_w);
    }
    gamma_bias_one(p.final_mod_b);
    return p;
}

template <typename T, typename From>
DitParams<T> params_cast(const DitParams<From>& src) {
    DitParams<T> dst;
    dst.config = src.config;
    dst.blocks.resize(src.blocks.size());
    std::vector<const Tensor<From>*> in;
    for_each_tensor(src, [&in](const std::string&, const Tensor<From>& t) { in.push_back(&t); });
    size_t i = 0;
    for_each_tensor(dst, [&](const std::string&, Tensor<T>& t) { t = tensor_cast<T>(*in[i++]); });
    return dst;
}

/// Parameter leaves bound into a graph, in for_each_trainable order.
struct BoundParams {
    std::vector<int> trainable_ids;
    int pos_table_id = -1;
};

namespace detail {

/// adaLN: gamma(e) * layer_norm(h) + beta(e), gamma/beta from one linear map.
template <typename T>
int adaln_modulate(Graph<T>& g, int h, int e, int mod_w, int mod_b, int hidden) {
    const int mod = linear(g, e, mod_w, mod_b);  // [1, 2d]
    const int gamma = g.slice_cols(mod, 0, hidden);
    const int beta = g.slice_cols(mod, hidden, 2 * hidden);
    return g.row_add(g.row_mul(g.layer_norm(h), gamma), beta);
}

}  // namespace detail

/// Records the full model on the graph and returns the prediction node in
/// token space ([tokens, p^2*3]); unpatchify it for the image view. When
/// `bound` is given, parameter leaf ids are reported there for gradient
/// collection.
template <typename T>
int dit_forward(Graph<T>& g, const DitParams<T>& p, const Tensor<T>& patch_tokens, double t,
                BoundParams* bound = nullptr) {
    const ModelConfig& cfg = p.config;
    require(patch_tokens.ndim() == 2 && patch_tokens.rows() == cfg.tokens() &&
                patch_tokens.cols() == cfg.patch_dim(),
            ErrorCategory::invalid_argument, "input tokens do not match model config");

    std::vector<int> ids;
    auto bind = [&g, &ids](const Tensor<T>& tensor) {
        ids.push_back(g.param(&tensor));
        return ids.back();
    };

    const int patch_w = bind(p.patch_w), patch_b = bind(p.patch_b);
    const int time_w1 = bind(p.time_w1), time_b1 = bind(p.time_b1);
    const int time_w2 = bind(p.time_w2), time_b2 = bind(p.time_b2);

    struct BlockIds {
        int mod1_w, mod1_b, qkv_w, qkv_b, attn_out_w, attn_out_b;
        int mod2_w, mod2_b, ffn1_w, ffn1_b, ffn2_w, ffn2_b;
    };
    std::vector<BlockIds> blocks;
    blocks.reserve(p.blocks.size());
    for (const auto& b : p.blocks)
        blocks.push_back({bind(b.mod1_w), bind(b.mod1_b), bind(b.qkv_w), bind(b.qkv_b),
                          bind(b.attn_out_w), bind(b.attn_out_b), bind(b.mod2_w), bind(b.mod2_b),
                          bind(b.ffn1_w), bind(b.ffn1_b), bind(b.ffn2_w), bind(b.ffn2_b)});
    const int final_mod_w = bind(p.final_mod_w), final_mod_b = bind(p.final_mod_b);
    const int final_w = bind(p.final_w), final_b = bind(p.final_b);

    const int pos_id = g.input(p.pos_table);

    // timestep embedding: sinusoid -> linear -> SiLU -> linear
    const int tfeat = g.input(timestep_features<T>(t, cfg.time_freq));
    const int e = linear(g, g.silu(linear(g, tfeat, time_w1, time_b1)), time_w2, time_b2);

    // patch embedding plus frozen positional table
    int h = g.add(linear(g, g.input(patch_tokens), patch_w, patch_b), pos_id);

    for (const auto& ib : blocks) {
        const int u = detail::adaln_modulate(g, h, e, ib.mod1_w, ib.mod1_b, cfg.hidden);
        const int qkv = linear(g, u, ib.qkv_w, ib.qkv_b);
        const int q = g.split_heads(g.slice_cols(qkv, 0, cfg.hidden), cfg.heads);
        const int k = g.split_heads(g.slice_cols(qkv, cfg.hidden, 2 * cfg.hidden), cfg.heads);
        const int v = g.split_heads(g.slice_cols(qkv, 2 * cfg.hidden, 3 * cfg.hidden), cfg.heads);
        const int attn = g.merge_heads(g.attention(q, k, v));
        h = g.add(h, linear(g, attn, ib.attn_out_w, ib.attn_out_b));

        const int f = detail::adaln_modulate(g, h, e, ib.mod2_w, ib.mod2_b, cfg.hidden);
        const int f1 = g.gelu(linear(g, f, ib.ffn1_w, ib.ffn1_b));
        h = g.add(h, linear(g, f1, ib.ffn2_w, ib.ffn2_b));
    }

    const int u = detail::adaln_modulate(g, h, e, final_mod_w, final_mod_b, cfg.hidden);
    const int out = linear(g, u, final_w, final_b);

    if (bound) {
        bound->trainable_ids = std::move(ids);
        bound->pos_table_id = pos_id;
    }
    return out;
}

/// Image-in, image-out forward pass (fresh graph, no gradients kept).
template <typename T>
Image<T> model_forward(const DitParams<T>& p, const Image<T>& x_t, double t) {
    require(x_t.height == p.config.resolution && x_t.width == p.config.resolution,
            ErrorCategory::invalid_argument, "input resolution does not match model config");
    Graph<T> g;
    const int out = dit_forward(g, p, patchify(x_t, p.config.patch), t);
    return unpatchify(g.value(out), p.config.patch, p.config.resolution);
}

}  // namespace tacit
