#pragma once

// The velocity transformer: latents are cut into raster-order patch tokens,
// each image becomes one attention chunk, and every block is conditioned on
// its chunk's flow time plus a class embedding through zero-initialized
// adaptive layer-norm modulation. The final linear head starts at exactly
// zero, so a fresh model predicts the zero velocity field.

#include <cstdint>
#include <string>
#include <vector>

#include "arflow/attention.hpp"
#include "arflow/interpolant.hpp"
#include "arflow/ops.hpp"

namespace arflow {

// Class sentinel for unconditional (classifier-free) forwards; the class
// table's extra last row backs it.
inline constexpr int64_t NULL_CLASS = -1;

struct ModelConfig {
    Shape latent_shape{4, 8, 8}; // (channels, height, width)
    int64_t patch_size = 2;
    int64_t hidden_size = 128;
    int64_t depth = 4;
    int64_t num_heads = 4;
    int64_t num_classes = 4;
    int64_t mlp_ratio = 4;
    int64_t seq_len_train = 5; // images per training sequence

    // attention knobs forwarded into every block
    double gate_temperature = 16.0;
    bool use_gate = true;
    bool use_cache = true;
    double intra_scale = 0.0; // 0 = 1/sqrt(head_dim)

    int64_t channels() const { return latent_shape[0]; }
    int64_t grid_h() const { return latent_shape[1] / patch_size; }
    int64_t grid_w() const { return latent_shape[2] / patch_size; }
    // M: patch tokens per image, which is also the attention chunk size
    int64_t tokens_per_image() const { return grid_h() * grid_w(); }
    int64_t patch_dim() const {
        return patch_size * patch_size * latent_shape[0];
    }

    void validate() const {
        ARF_CHECK(latent_shape.size() == 3, ErrorKind::config,
                  "latent_shape must be (channels, height, width)");
        ARF_CHECK(latent_shape[0] >= 1 && latent_shape[1] >= 1 &&
                      latent_shape[2] >= 1,
                  ErrorKind::config, "latent dims must be positive");
        ARF_CHECK(patch_size >= 1 &&
                      latent_shape[1] % patch_size == 0 &&
                      latent_shape[2] % patch_size == 0,
                  ErrorKind::config,
                  "latent height/width must be divisible by patch_size");
        ARF_CHECK(hidden_size >= 4 && hidden_size % 4 == 0, ErrorKind::config,
                  "hidden_size must be a positive multiple of 4");
        ARF_CHECK(num_heads >= 1 && hidden_size % num_heads == 0,
                  ErrorKind::config,
                  "hidden_size must be divisible by num_heads");
        ARF_CHECK(depth >= 0, ErrorKind::config, "depth must be >= 0");
        ARF_CHECK(num_classes >= 1, ErrorKind::config,
                  "need at least one class");
        ARF_CHECK(mlp_ratio >= 1, ErrorKind::config, "mlp_ratio must be >= 1");
        ARF_CHECK(seq_len_train >= 1, ErrorKind::config,
                  "seq_len_train must be >= 1");
    }

    HybridAttnConfig attention_config() const {
        HybridAttnConfig a;
        a.num_heads = num_heads;
        a.head_dim = hidden_size / num_heads;
        a.chunk_size = tokens_per_image();
        a.gate_temperature = gate_temperature;
        a.use_gate = use_gate;
        a.use_cache = use_cache;
        a.intra_scale = intra_scale;
        return a;
    }
};

// What the velocity field is conditioned on: one flow time per chunk plus a
// single class id (NULL_CLASS for the unconditional branch).
struct ConditioningInput {
    std::vector<FlowTime> times;
    int64_t class_id = NULL_CLASS;
};

template <typename Field>
struct ModelBlock {
    Field w_q, w_k, w_v, w_o, w_gamma; // attention projections
    Field mod_w, mod_b;                // cond -> 6*hidden modulation
    Field mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename T>
struct ModelParams {
    Tensor<T> patch_w, patch_b;
    Tensor<T> time_w1, time_b1, time_w2, time_b2;
    Tensor<T> class_table; // (num_classes + 1, hidden), last row = null class
    std::vector<ModelBlock<Tensor<T>>> blocks;
    Tensor<T> final_mod_w, final_mod_b; // cond -> 2*hidden (shift, scale)
    Tensor<T> head_w, head_b;           // zero at init
    Tensor<T> pos;                      // fixed sincos table, not learned
};

// The same structure bound onto a tape (leaves) or wrapped as constants.
template <typename T>
struct TracedParams {
    Traced<T> patch_w, patch_b;
    Traced<T> time_w1, time_b1, time_w2, time_b2;
    Traced<T> class_table;
    std::vector<ModelBlock<Traced<T>>> blocks;
    Traced<T> final_mod_w, final_mod_b;
    Traced<T> head_w, head_b;
    Traced<T> pos;
};

// Visits every learned tensor in a fixed, checkpoint-stable order. The
// positional table is fixed data, not a parameter, and is not visited.
template <typename PS, typename F>
void for_each_param(PS& p, F&& f) {
    f("patch_w", p.patch_w);
    f("patch_b", p.patch_b);
    f("time_w1", p.time_w1);
    f("time_b1", p.time_b1);
    f("time_w2", p.time_w2);
    f("time_b2", p.time_b2);
    f("class_table", p.class_table);
    for (size_t b = 0; b < p.blocks.size(); ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        auto& blk = p.blocks[b];
        f(pre + "w_q", blk.w_q);
        f(pre + "w_k", blk.w_k);
        f(pre + "w_v", blk.w_v);
        f(pre + "w_o", blk.w_o);
        f(pre + "w_gamma", blk.w_gamma);
        f(pre + "mod_w", blk.mod_w);
        f(pre + "mod_b", blk.mod_b);
        f(pre + "mlp_w1", blk.mlp_w1);
        f(pre + "mlp_b1", blk.mlp_b1);
        f(pre + "mlp_w2", blk.mlp_w2);
        f(pre + "mlp_b2", blk.mlp_b2);
    }
    f("final_mod_w", p.final_mod_w);
    f("final_mod_b", p.final_mod_b);
    f("head_w", p.head_w);
    f("head_b", p.head_b);
}

// Fixed 2D sincos positional table over the patch grid, (M, hidden);
// identical for every chunk.
template <typename T>
Tensor<T> sincos_position_table(const ModelConfig& cfg);

// Sinusoidal features of a flow time, (1, hidden); input to the time MLP.
template <typename T>
Tensor<T> time_embedding_input(double t, int64_t hidden);

// Random init: normal(0, 0.02) everywhere except the velocity head and all
// modulation projections, which start at exactly zero.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, RngState& rng);

// Leaves every learned tensor on the tape (constants when tape is null).
template <typename T>
TracedParams<T> bind_params(Tape<T>* tape, const ModelParams<T>& p);

// (channels, h, w) -> (M, p*p*channels) in raster order: token index runs
// left to right then top to bottom over the patch grid; within a token the
// layout is (py, px, channel).
template <typename T>
Traced<T> patchify(Tape<T>* tape, const Traced<T>& z, int64_t p);

// Exact inverse of patchify.
template <typename T>
Traced<T> unpatchify(Tape<T>* tape, const Traced<T>& tokens,
                     const Shape& latent_shape, int64_t p);

template <typename T>
struct ModelOut {
    std::vector<Traced<T>> v;          // one velocity latent per chunk
    std::vector<ChunkState<T>> states; // one carried state per block
};

// Runs N chunks through the stack. Chunk n's outputs depend on chunks
// 0..n-1 only through the attention states, so prefix outputs are invariant
// to suffix edits. Pass the states from a previous call to continue a
// sequence incrementally.
template <typename T>
ModelOut<T> model_forward(Tape<T>* tape, const std::vector<Tensor<T>>& chunks,
                          const ConditioningInput& cond,
                          const TracedParams<T>& params,
                          const ModelConfig& cfg,
                          const std::vector<ChunkState<T>>* initial = nullptr);

// Closed-form learned-parameter count for a config; matches the
// instantiated model exactly.
int64_t count_params(const ModelConfig& cfg);

} // namespace arflow
