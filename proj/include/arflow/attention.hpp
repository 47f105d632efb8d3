#pragma once

// Hybrid chunkwise linear attention: causal linear attention between chunks
// through a decayed d x d state per head, full bidirectional softmax
// attention within each chunk. Provided in two independently coded forms
// (one-shot chunkwise and chunk-at-a-time recurrent) that are equivalence-
// tested against each other, plus the standard causal linear-attention and
// quadratic softmax baselines used by tests and benchmarks.

#include <cmath>
#include <cstdint>
#include <vector>

#include "arflow/ops.hpp"

namespace arflow {

struct HybridAttnConfig {
    int64_t num_heads = 4;
    int64_t head_dim = 32;
    int64_t chunk_size = 16;        // tokens per image
    double gate_temperature = 16.0; // exponent 1/tau flattens gates toward 1
    bool use_gate = true;           // false: decay fixed at 1
    bool use_cache = true;          // false: inter-chunk term removed
    double intra_scale = 0.0;       // 0 = default 1/sqrt(head_dim)

    int64_t hidden() const { return num_heads * head_dim; }
    double intra_scale_value() const {
        return intra_scale != 0.0
                   ? intra_scale
                   : 1.0 / std::sqrt(static_cast<double>(head_dim));
    }
    void validate() const {
        ARF_CHECK(num_heads >= 1 && head_dim >= 1 && chunk_size >= 1,
                  ErrorKind::config, "attention geometry must be positive");
        ARF_CHECK(gate_temperature > 0.0, ErrorKind::config,
                  "gate temperature must be positive");
        ARF_CHECK(intra_scale >= 0.0, ErrorKind::config,
                  "intra_scale must be 0 (auto) or positive");
    }
};

template <typename T>
struct AttentionParams {
    Traced<T> w_q, w_k, w_v, w_o; // (hidden, hidden)
    Traced<T> w_gamma;            // (hidden, num_heads)
};

// Inter-chunk memory: one d x d matrix per head plus how many chunks built
// it. Value semantics; forwards return updated copies.
template <typename T>
struct ChunkState {
    std::vector<Traced<T>> s;
    int64_t chunk_index = 0;
};

template <typename T>
ChunkState<T> zero_state(const HybridAttnConfig& cfg) {
    ChunkState<T> st;
    st.s.reserve(static_cast<size_t>(cfg.num_heads));
    for (int64_t h = 0; h < cfg.num_heads; ++h)
        st.s.push_back(
            constant(Tensor<T>(Shape{cfg.head_dim, cfg.head_dim})));
    return st;
}

// Recorded gate values g_t in (0,1) and per-chunk decays, chunk by chunk.
template <typename T>
struct GateTrace {
    std::vector<Tensor<T>> gates;  // (C, num_heads) per chunk
    std::vector<Tensor<T>> decays; // (num_heads,) per chunk
};

template <typename T>
struct HybridOut {
    Traced<T> y; // (T, hidden), after the output projection
    ChunkState<T> state;
    GateTrace<T> trace;
};

// Per-token, per-head gates sigmoid(x W_gamma)^(1/temperature), computed in
// log space so extreme logits stay in (0, 1). x: (C, hidden) -> (C, heads).
template <typename T>
Traced<T> gate(Tape<T>* tape, const Traced<T>& x, const Traced<T>& w_gamma,
               double temperature);

// Geometric mean over the chunk axis: gates (C, heads) -> decay (heads,).
template <typename T>
Traced<T> chunk_decay(Tape<T>* tape, const Traced<T>& gates);

// S' = decay * S + K^T V per head; chunk_index increments.
template <typename T>
ChunkState<T> state_update(Tape<T>* tape, const ChunkState<T>& state,
                           const Traced<T>& decay,
                           const std::vector<Traced<T>>& k_heads,
                           const std::vector<Traced<T>>& v_heads);

// One-shot form: projects the whole sequence at once, runs all intra-chunk
// attention, then adds the causal inter-chunk term in a single state scan
// with fused log-space decays.
template <typename T>
HybridOut<T> hybrid_forward_chunkwise(Tape<T>* tape, const Traced<T>& tokens,
                                      const HybridAttnConfig& cfg,
                                      const AttentionParams<T>& p,
                                      const ChunkState<T>* initial = nullptr);

// Chunk-at-a-time form with an explicit sequential state update; the
// inference path and the equivalence oracle for the one-shot form.
template <typename T>
HybridOut<T> hybrid_forward_recurrent(Tape<T>* tape, const Traced<T>& tokens,
                                      const HybridAttnConfig& cfg,
                                      const AttentionParams<T>& p,
                                      const ChunkState<T>* initial = nullptr);

// Standard chunkwise causal linear attention (no gate, no softmax, causal
// mask within the chunk); matches token-level recurrence S_t = S_{t-1} +
// k_t v_t^T, o_t = q_t S_t.
template <typename T>
Traced<T> linear_attention_causal(Tape<T>* tape, const Traced<T>& tokens,
                                  const HybridAttnConfig& cfg,
                                  const AttentionParams<T>& p);

// Quadratic softmax attention over the full sequence, causal or not; the
// baseline for benchmarks and the single-chunk equality check.
template <typename T>
Traced<T> softmax_attention_full(Tape<T>* tape, const Traced<T>& tokens,
                                 bool causal, const HybridAttnConfig& cfg,
                                 const AttentionParams<T>& p);

} // namespace arflow
