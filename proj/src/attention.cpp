#include "arflow/attention.hpp"

namespace arflow {

namespace {

template <typename T>
int64_t check_tokens(const Traced<T>& tokens, const HybridAttnConfig& cfg) {
    cfg.validate();
    ARF_CHECK(tokens.value.rank() == 2, ErrorKind::dimension,
              "tokens must be 2-D, have rank " << tokens.value.rank());
    ARF_CHECK(tokens.value.dim(1) == cfg.hidden(), ErrorKind::dimension,
              "token width " << tokens.value.dim(1) << " != heads*head_dim "
                             << cfg.hidden());
    const int64_t t = tokens.value.dim(0);
    ARF_CHECK(t >= 1, ErrorKind::dimension, "empty token sequence");
    ARF_CHECK(t % cfg.chunk_size == 0, ErrorKind::dimension,
              "sequence of " << t << " tokens is not whole chunks of "
                             << cfg.chunk_size
                             << " (partial chunks are rejected)");
    return t / cfg.chunk_size;
}

template <typename T>
void check_params(const AttentionParams<T>& p, const HybridAttnConfig& cfg) {
    const int64_t hd = cfg.hidden();
    for (const auto* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o})
        ARF_CHECK(w->value.rank() == 2 && w->value.dim(0) == hd &&
                      w->value.dim(1) == hd,
                  ErrorKind::dimension, "projection must be " << hd << "x"
                                                              << hd);
    if (cfg.use_gate)
        ARF_CHECK(p.w_gamma.value.rank() == 2 &&
                      p.w_gamma.value.dim(0) == hd &&
                      p.w_gamma.value.dim(1) == cfg.num_heads,
                  ErrorKind::dimension,
                  "gate projection must be " << hd << "x" << cfg.num_heads);
}

template <typename T>
void check_state(const ChunkState<T>& st, const HybridAttnConfig& cfg) {
    ARF_CHECK(static_cast<int64_t>(st.s.size()) == cfg.num_heads,
              ErrorKind::dimension, "state has " << st.s.size() << " heads, "
                                                 << "config " << cfg.num_heads);
    for (const auto& s : st.s)
        ARF_CHECK(s.value.rank() == 2 && s.value.dim(0) == cfg.head_dim &&
                      s.value.dim(1) == cfg.head_dim,
                  ErrorKind::dimension, "state blocks must be head_dim^2");
}

template <typename T>
Tensor<T> exp_values(const Tensor<T>& logs) {
    Tensor<T> out(logs.shape());
    kern::active<T>().vexp(logs.data(), out.data(), out.size());
    return out;
}

} // namespace

template <typename T>
Traced<T> gate(Tape<T>* tape, const Traced<T>& x, const Traced<T>& w_gamma,
               double temperature) {
    ARF_CHECK(temperature > 0.0, ErrorKind::config,
              "gate temperature must be positive");
    auto logits = matmul(tape, x, w_gamma);
    // sigmoid(l)^(1/tau) = exp(log_sigmoid(l) / tau); the log-space route
    // keeps saturated logits inside (0, 1)
    return exp_elem(tape, scale_by(tape, log_sigmoid(tape, logits),
                                   static_cast<T>(1.0 / temperature)));
}

template <typename T>
Traced<T> chunk_decay(Tape<T>* tape, const Traced<T>& gates) {
    ARF_CHECK(gates.value.rank() == 2, ErrorKind::dimension,
              "gates must be (chunk, heads)");
    // log_elem rejects non-positive gates (contract error)
    return exp_elem(tape, mean_axis0(tape, log_elem(tape, gates)));
}

template <typename T>
ChunkState<T> state_update(Tape<T>* tape, const ChunkState<T>& state,
                           const Traced<T>& decay,
                           const std::vector<Traced<T>>& k_heads,
                           const std::vector<Traced<T>>& v_heads) {
    const auto heads = state.s.size();
    ARF_CHECK(k_heads.size() == heads && v_heads.size() == heads,
              ErrorKind::dimension, "state_update: head count mismatch");
    ARF_CHECK(decay.value.size() == static_cast<int64_t>(heads),
              ErrorKind::dimension, "state_update: decay per head required");
    ChunkState<T> next;
    next.chunk_index = state.chunk_index + 1;
    next.s.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
        auto g = select_element(tape, decay, static_cast<int64_t>(h));
        auto decayed = mul_scalar(tape, state.s[h], g);
        auto ktv = matmul(tape, k_heads[h], v_heads[h], true, false);
        next.s.push_back(add(tape, decayed, ktv));
    }
    return next;
}

template <typename T>
HybridOut<T> hybrid_forward_chunkwise(Tape<T>* tape, const Traced<T>& tokens,
                                      const HybridAttnConfig& cfg,
                                      const AttentionParams<T>& p,
                                      const ChunkState<T>* initial) {
    const int64_t nch = check_tokens(tokens, cfg);
    check_params(p, cfg);
    if (initial) check_state(*initial, cfg);
    const int64_t c = cfg.chunk_size, nh = cfg.num_heads, d = cfg.head_dim;
    const T iscale = static_cast<T>(cfg.intra_scale_value());

    // One-shot projections over the whole sequence.
    auto q_all = matmul(tape, tokens, p.w_q);
    auto k_all = matmul(tape, tokens, p.w_k);
    auto v_all = matmul(tape, tokens, p.w_v);

    // Per-chunk decay logs, fused in log space; identically zero without
    // the gate (decay 1).
    HybridOut<T> out;
    std::vector<Traced<T>> decay(static_cast<size_t>(nch));
    if (cfg.use_gate) {
        auto logits = matmul(tape, tokens, p.w_gamma);
        auto log_g = scale_by(tape, log_sigmoid(tape, logits),
                              static_cast<T>(1.0 / cfg.gate_temperature));
        for (int64_t i = 0; i < nch; ++i) {
            auto lg = slice_rows(tape, log_g, i * c, (i + 1) * c);
            decay[static_cast<size_t>(i)] =
                exp_elem(tape, mean_axis0(tape, lg));
            out.trace.gates.push_back(exp_values(lg.value));
            out.trace.decays.push_back(
                decay[static_cast<size_t>(i)].value.clone());
        }
    } else {
        for (int64_t i = 0; i < nch; ++i) {
            out.trace.gates.push_back(
                Tensor<T>::full(Shape{c, nh}, T(1)));
            out.trace.decays.push_back(Tensor<T>::full(Shape{nh}, T(1)));
        }
    }

    out.state.chunk_index = (initial ? initial->chunk_index : 0) + nch;
    out.state.s.resize(static_cast<size_t>(nh));

    std::vector<Traced<T>> head_out(static_cast<size_t>(nh));
    for (int64_t h = 0; h < nh; ++h) {
        auto qh = slice_cols(tape, q_all, h * d, (h + 1) * d);
        auto kh = slice_cols(tape, k_all, h * d, (h + 1) * d);
        auto vh = slice_cols(tape, v_all, h * d, (h + 1) * d);

        // All intra-chunk attention first (bidirectional, softmax), then a
        // single state scan for the causal inter-chunk term.
        std::vector<Traced<T>> o_chunks(static_cast<size_t>(nch));
        std::vector<Traced<T>> qc(static_cast<size_t>(nch)),
            kc(static_cast<size_t>(nch)), vc(static_cast<size_t>(nch));
        for (int64_t i = 0; i < nch; ++i) {
            qc[static_cast<size_t>(i)] =
                slice_rows(tape, qh, i * c, (i + 1) * c);
            kc[static_cast<size_t>(i)] =
                slice_rows(tape, kh, i * c, (i + 1) * c);
            vc[static_cast<size_t>(i)] =
                slice_rows(tape, vh, i * c, (i + 1) * c);
            auto probs = softmax_rows(
                tape,
                matmul(tape, qc[static_cast<size_t>(i)],
                       kc[static_cast<size_t>(i)], false, true),
                iscale);
            o_chunks[static_cast<size_t>(i)] =
                matmul(tape, probs, vc[static_cast<size_t>(i)]);
        }

        if (cfg.use_cache) {
            Traced<T> s_cur;
            bool has_state = initial != nullptr;
            if (has_state) s_cur = initial->s[static_cast<size_t>(h)];
            for (int64_t i = 0; i < nch; ++i) {
                if (has_state) {
                    auto inter =
                        matmul(tape, qc[static_cast<size_t>(i)], s_cur);
                    o_chunks[static_cast<size_t>(i)] = add(
                        tape, inter, o_chunks[static_cast<size_t>(i)]);
                }
                auto ktv = matmul(tape, kc[static_cast<size_t>(i)],
                                  vc[static_cast<size_t>(i)], true, false);
                if (cfg.use_gate) {
                    auto g = select_element(
                        tape, decay[static_cast<size_t>(i)], h);
                    s_cur = has_state
                                ? add(tape, mul_scalar(tape, s_cur, g), ktv)
                                : ktv;
                } else {
                    s_cur = has_state ? add(tape, s_cur, ktv) : ktv;
                }
                has_state = true;
            }
            out.state.s[static_cast<size_t>(h)] = s_cur;
        }
        head_out[static_cast<size_t>(h)] = concat_rows(tape, o_chunks);
    }
    if (!cfg.use_cache) {
        int64_t advanced = out.state.chunk_index;
        out.state = zero_state<T>(cfg);
        out.state.chunk_index = advanced;
    }

    out.y = matmul(tape, concat_cols(tape, head_out), p.w_o);
    return out;
}

template <typename T>
HybridOut<T> hybrid_forward_recurrent(Tape<T>* tape, const Traced<T>& tokens,
                                      const HybridAttnConfig& cfg,
                                      const AttentionParams<T>& p,
                                      const ChunkState<T>* initial) {
    const int64_t nch = check_tokens(tokens, cfg);
    check_params(p, cfg);
    if (initial) check_state(*initial, cfg);
    const int64_t c = cfg.chunk_size, nh = cfg.num_heads, d = cfg.head_dim;
    const T iscale = static_cast<T>(cfg.intra_scale_value());

    HybridOut<T> out;
    ChunkState<T> state = initial ? *initial : zero_state<T>(cfg);
    // Tracks whether the state still holds its all-zero start, in which
    // case the inter-chunk term is skipped (exactly zero, not just small).
    bool live_state = initial != nullptr;

    std::vector<Traced<T>> seq_chunks(static_cast<size_t>(nch));
    for (int64_t i = 0; i < nch; ++i) {
        auto x = slice_rows(tape, tokens, i * c, (i + 1) * c);
        auto q = matmul(tape, x, p.w_q);
        auto k = matmul(tape, x, p.w_k);
        auto v = matmul(tape, x, p.w_v);

        Traced<T> decay;
        if (cfg.use_gate) {
            // the naive composition of the published forms, deliberately
            // different from the fused log-space path in the one-shot form
            auto g = gate(tape, x, p.w_gamma, cfg.gate_temperature);
            decay = chunk_decay(tape, g);
            out.trace.gates.push_back(g.value.clone());
            out.trace.decays.push_back(decay.value.clone());
        } else {
            decay = constant(Tensor<T>::full(Shape{nh}, T(1)));
            out.trace.gates.push_back(Tensor<T>::full(Shape{c, nh}, T(1)));
            out.trace.decays.push_back(Tensor<T>::full(Shape{nh}, T(1)));
        }

        std::vector<Traced<T>> k_heads(static_cast<size_t>(nh)),
            v_heads(static_cast<size_t>(nh)),
            o_heads(static_cast<size_t>(nh));
        for (int64_t h = 0; h < nh; ++h) {
            auto qh = slice_cols(tape, q, h * d, (h + 1) * d);
            auto kh = slice_cols(tape, k, h * d, (h + 1) * d);
            auto vh = slice_cols(tape, v, h * d, (h + 1) * d);
            k_heads[static_cast<size_t>(h)] = kh;
            v_heads[static_cast<size_t>(h)] = vh;

            auto probs =
                softmax_rows(tape, matmul(tape, qh, kh, false, true), iscale);
            auto o = matmul(tape, probs, vh);
            if (cfg.use_cache && live_state)
                o = add(tape,
                        matmul(tape, qh, state.s[static_cast<size_t>(h)]), o);
            o_heads[static_cast<size_t>(h)] = o;
        }

        if (cfg.use_cache) {
            state = state_update(tape, state, decay, k_heads, v_heads);
            live_state = true;
        } else {
            ++state.chunk_index;
        }
        seq_chunks[static_cast<size_t>(i)] = concat_cols(tape, o_heads);
    }

    out.y = matmul(tape, concat_rows(tape, seq_chunks), p.w_o);
    if (!cfg.use_cache) {
        ChunkState<T> blank = zero_state<T>(cfg);
        blank.chunk_index = state.chunk_index;
        state = blank;
    }
    out.state = state;
    return out;
}

template <typename T>
Traced<T> linear_attention_causal(Tape<T>* tape, const Traced<T>& tokens,
                                  const HybridAttnConfig& cfg,
                                  const AttentionParams<T>& p) {
    const int64_t nch = check_tokens(tokens, cfg);
    check_params(p, cfg);
    const int64_t c = cfg.chunk_size, nh = cfg.num_heads, d = cfg.head_dim;

    auto q_all = matmul(tape, tokens, p.w_q);
    auto k_all = matmul(tape, tokens, p.w_k);
    auto v_all = matmul(tape, tokens, p.w_v);

    // lower-triangular causal mask (diagonal kept) for the intra term
    Tensor<T> mask(Shape{c, c});
    for (int64_t i = 0; i < c; ++i)
        for (int64_t j = 0; j <= i; ++j) mask.at(i, j) = T(1);
    auto mask_c = constant(mask);

    std::vector<Traced<T>> head_out(static_cast<size_t>(nh));
    for (int64_t h = 0; h < nh; ++h) {
        auto qh = slice_cols(tape, q_all, h * d, (h + 1) * d);
        auto kh = slice_cols(tape, k_all, h * d, (h + 1) * d);
        auto vh = slice_cols(tape, v_all, h * d, (h + 1) * d);

        Traced<T> s;
        bool live_state = false;
        std::vector<Traced<T>> o_chunks(static_cast<size_t>(nch));
        for (int64_t i = 0; i < nch; ++i) {
            auto qc = slice_rows(tape, qh, i * c, (i + 1) * c);
            auto kc = slice_rows(tape, kh, i * c, (i + 1) * c);
            auto vc = slice_rows(tape, vh, i * c, (i + 1) * c);
            auto scores = mul(tape, matmul(tape, qc, kc, false, true), mask_c);
            auto o = matmul(tape, scores, vc);
            if (live_state) o = add(tape, matmul(tape, qc, s), o);
            auto ktv = matmul(tape, kc, vc, true, false);
            s = live_state ? add(tape, s, ktv) : ktv;
            live_state = true;
            o_chunks[static_cast<size_t>(i)] = o;
        }
        head_out[static_cast<size_t>(h)] = concat_rows(tape, o_chunks);
    }
    return matmul(tape, concat_cols(tape, head_out), p.w_o);
}

template <typename T>
Traced<T> softmax_attention_full(Tape<T>* tape, const Traced<T>& tokens,
                                 bool causal, const HybridAttnConfig& cfg,
                                 const AttentionParams<T>& p) {
    cfg.validate();
    check_params(p, cfg);
    ARF_CHECK(tokens.value.rank() == 2 &&
                  tokens.value.dim(1) == cfg.hidden(),
              ErrorKind::dimension, "tokens must be (T, hidden)");
    const int64_t nh = cfg.num_heads, d = cfg.head_dim;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

    auto q_all = matmul(tape, tokens, p.w_q);
    auto k_all = matmul(tape, tokens, p.w_k);
    auto v_all = matmul(tape, tokens, p.w_v);

    std::vector<Traced<T>> head_out(static_cast<size_t>(nh));
    for (int64_t h = 0; h < nh; ++h) {
        auto qh = slice_cols(tape, q_all, h * d, (h + 1) * d);
        auto kh = slice_cols(tape, k_all, h * d, (h + 1) * d);
        auto vh = slice_cols(tape, v_all, h * d, (h + 1) * d);
        auto scores = matmul(tape, qh, kh, false, true);
        auto probs = causal ? softmax_rows_causal(tape, scores, scale)
                            : softmax_rows(tape, scores, scale);
        head_out[static_cast<size_t>(h)] = matmul(tape, probs, vh);
    }
    return matmul(tape, concat_cols(tape, head_out), p.w_o);
}

#define ARFLOW_INSTANTIATE_ATTENTION(T)                                       \
    template Traced<T> gate(Tape<T>*, const Traced<T>&, const Traced<T>&,     \
                            double);                                          \
    template Traced<T> chunk_decay(Tape<T>*, const Traced<T>&);               \
    template ChunkState<T> state_update(Tape<T>*, const ChunkState<T>&,       \
                                        const Traced<T>&,                     \
                                        const std::vector<Traced<T>>&,        \
                                        const std::vector<Traced<T>>&);       \
    template HybridOut<T> hybrid_forward_chunkwise(                           \
        Tape<T>*, const Traced<T>&, const HybridAttnConfig&,                  \
        const AttentionParams<T>&, const ChunkState<T>*);                     \
    template HybridOut<T> hybrid_forward_recurrent(                           \
        Tape<T>*, const Traced<T>&, const HybridAttnConfig&,                  \
        const AttentionParams<T>&, const ChunkState<T>*);                     \
    template Traced<T> linear_attention_causal(Tape<T>*, const Traced<T>&,    \
                                               const HybridAttnConfig&,       \
                                               const AttentionParams<T>&);    \
    template Traced<T> softmax_attention_full(Tape<T>*, const Traced<T>&,     \
                                              bool, const HybridAttnConfig&,  \
                                              const AttentionParams<T>&);

ARFLOW_INSTANTIATE_ATTENTION(float)
ARFLOW_INSTANTIATE_ATTENTION(double)

#undef ARFLOW_INSTANTIATE_ATTENTION

} // namespace arflow
