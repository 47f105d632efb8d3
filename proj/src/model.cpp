#include "arflow/model.hpp"

#include <cmath>

namespace arflow {

namespace {

// raster patch layout: token m = gy*gw + gx; within a token the column is
// (py*p + px)*channels + ch
std::vector<int64_t> patchify_map(const Shape& latent, int64_t p) {
    const int64_t c = latent[0], h = latent[1], w = latent[2];
    const int64_t gw = w / p, ppc = p * p * c;
    std::vector<int64_t> perm(static_cast<size_t>(c * h * w));
    for (int64_t gy = 0; gy < h / p; ++gy)
        for (int64_t gx = 0; gx < gw; ++gx)
            for (int64_t py = 0; py < p; ++py)
                for (int64_t px = 0; px < p; ++px)
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const int64_t m = gy * gw + gx;
                        const int64_t col = (py * p + px) * c + ch;
                        const int64_t y = gy * p + py, x = gx * p + px;
                        perm[static_cast<size_t>(m * ppc + col)] =
                            (ch * h + y) * w + x;
                    }
    return perm;
}

std::vector<int64_t> invert_map(const std::vector<int64_t>& perm) {
    std::vector<int64_t> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i)
        inv[static_cast<size_t>(perm[i])] = static_cast<int64_t>(i);
    return inv;
}

template <typename T>
Tensor<T> normal_init(Shape shape, RngState& rng, double stddev) {
    Tensor<T> t = randn<T>(std::move(shape), rng);
    for (int64_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(t[i] * stddev);
    return t;
}

// modulate(x) = x * (1 + scale) + shift, applied per chunk of m rows
template <typename T>
Traced<T> modulate(Tape<T>* tape, const Traced<T>& x, const Traced<T>& shift,
                   const Traced<T>& scale, int64_t m) {
    auto scaled =
        mul_chunk_rows(tape, x, add_scalar(tape, scale, T(1)), m);
    return add_chunk_rows(tape, scaled, shift, m);
}

} // namespace

template <typename T>
Tensor<T> sincos_position_table(const ModelConfig& cfg) {
    cfg.validate();
    const int64_t m = cfg.tokens_per_image(), hd = cfg.hidden_size;
    const int64_t quarter = hd / 4, gw = cfg.grid_w();
    Tensor<T> pos(Shape{m, hd});
    for (int64_t tok = 0; tok < m; ++tok) {
        const double gy = static_cast<double>(tok / gw);
        const double gx = static_cast<double>(tok % gw);
        for (int64_t i = 0; i < quarter; ++i) {
            const double omega = std::pow(
                10000.0, -static_cast<double>(i) / static_cast<double>(quarter));
            pos.at(tok, i) = static_cast<T>(std::sin(gy * omega));
            pos.at(tok, quarter + i) = static_cast<T>(std::cos(gy * omega));
            pos.at(tok, 2 * quarter + i) = static_cast<T>(std::sin(gx * omega));
            pos.at(tok, 3 * quarter + i) = static_cast<T>(std::cos(gx * omega));
        }
    }
    return pos;
}

template <typename T>
Tensor<T> time_embedding_input(double t, int64_t hidden) {
    ARF_CHECK(hidden >= 2 && hidden % 2 == 0, ErrorKind::config,
              "time embedding width must be even");
    const int64_t half = hidden / 2;
    Tensor<T> row(Shape{1, hidden});
    for (int64_t i = 0; i < half; ++i) {
        const double omega = std::exp(-std::log(10000.0) *
                                      static_cast<double>(i) /
                                      static_cast<double>(half));
        const double arg = 1000.0 * t * omega;
        row.at(0, i) = static_cast<T>(std::cos(arg));
        row.at(0, half + i) = static_cast<T>(std::sin(arg));
    }
    return row;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, RngState& rng) {
    cfg.validate();
    const int64_t hd = cfg.hidden_size, pd = cfg.patch_dim();
    const int64_t r = cfg.mlp_ratio;
    const double s = 0.02;
    ModelParams<T> p;
    p.patch_w = normal_init<T>(Shape{pd, hd}, rng, s);
    p.patch_b = Tensor<T>(Shape{hd});
    p.time_w1 = normal_init<T>(Shape{hd, hd}, rng, s);
    p.time_b1 = Tensor<T>(Shape{hd});
    p.time_w2 = normal_init<T>(Shape{hd, hd}, rng, s);
    p.time_b2 = Tensor<T>(Shape{hd});
    p.class_table = normal_init<T>(Shape{cfg.num_classes + 1, hd}, rng, s);
    p.blocks.resize(static_cast<size_t>(cfg.depth));
    for (auto& blk : p.blocks) {
        blk.w_q = normal_init<T>(Shape{hd, hd}, rng, s);
        blk.w_k = normal_init<T>(Shape{hd, hd}, rng, s);
        blk.w_v = normal_init<T>(Shape{hd, hd}, rng, s);
        blk.w_o = normal_init<T>(Shape{hd, hd}, rng, s);
        blk.w_gamma = normal_init<T>(Shape{hd, cfg.num_heads}, rng, s);
        blk.mod_w = Tensor<T>(Shape{hd, 6 * hd});
        blk.mod_b = Tensor<T>(Shape{6 * hd});
        blk.mlp_w1 = normal_init<T>(Shape{hd, r * hd}, rng, s);
        blk.mlp_b1 = Tensor<T>(Shape{r * hd});
        blk.mlp_w2 = normal_init<T>(Shape{r * hd, hd}, rng, s);
        blk.mlp_b2 = Tensor<T>(Shape{hd});
    }
    p.final_mod_w = Tensor<T>(Shape{hd, 2 * hd});
    p.final_mod_b = Tensor<T>(Shape{2 * hd});
    p.head_w = Tensor<T>(Shape{hd, pd});
    p.head_b = Tensor<T>(Shape{pd});
    p.pos = sincos_position_table<T>(cfg);
    return p;
}

template <typename T>
TracedParams<T> bind_params(Tape<T>* tape, const ModelParams<T>& p) {
    std::vector<const Tensor<T>*> src;
    for_each_param(p, [&](const std::string&, const Tensor<T>& t) {
        src.push_back(&t);
    });
    TracedParams<T> tp;
    tp.blocks.resize(p.blocks.size());
    size_t i = 0;
    for_each_param(tp, [&](const std::string&, Traced<T>& slot) {
        slot = tape ? tape->leaf(*src[i]) : constant(*src[i]);
        ++i;
    });
    tp.pos = constant(p.pos);
    return tp;
}

template <typename T>
Traced<T> patchify(Tape<T>* tape, const Traced<T>& z, int64_t p) {
    ARF_CHECK(z.value.rank() == 3, ErrorKind::dimension,
              "patchify expects (channels, h, w)");
    const Shape& sh = z.value.shape();
    ARF_CHECK(p >= 1 && sh[1] % p == 0 && sh[2] % p == 0,
              ErrorKind::dimension,
              "latent " << sh[1] << "x" << sh[2]
                        << " not divisible by patch size " << p);
    const int64_t m = (sh[1] / p) * (sh[2] / p);
    return gather_permute(tape, z, patchify_map(sh, p),
                          Shape{m, p * p * sh[0]});
}

template <typename T>
Traced<T> unpatchify(Tape<T>* tape, const Traced<T>& tokens,
                     const Shape& latent_shape, int64_t p) {
    ARF_CHECK(latent_shape.size() == 3, ErrorKind::dimension,
              "latent shape must be (channels, h, w)");
    ARF_CHECK(p >= 1 && latent_shape[1] % p == 0 && latent_shape[2] % p == 0,
              ErrorKind::dimension, "latent not divisible by patch size");
    ARF_CHECK(tokens.value.rank() == 2 &&
                  tokens.value.size() == numel(latent_shape),
              ErrorKind::dimension,
              "token matrix does not hold one latent worth of data");
    return gather_permute(tape, tokens, invert_map(patchify_map(latent_shape, p)),
                          latent_shape);
}

template <typename T>
ModelOut<T> model_forward(Tape<T>* tape, const std::vector<Tensor<T>>& chunks,
                          const ConditioningInput& cond,
                          const TracedParams<T>& params,
                          const ModelConfig& cfg,
                          const std::vector<ChunkState<T>>* initial) {
    cfg.validate();
    const int64_t n = static_cast<int64_t>(chunks.size());
    ARF_CHECK(n >= 1, ErrorKind::dimension, "need at least one chunk");
    ARF_CHECK(static_cast<int64_t>(cond.times.size()) == n,
              ErrorKind::dimension, "got " << cond.times.size()
                                           << " times for " << n << " chunks");
    ARF_CHECK(cond.class_id == NULL_CLASS ||
                  (cond.class_id >= 0 && cond.class_id < cfg.num_classes),
              ErrorKind::contract,
              "class_id " << cond.class_id << " outside 0.."
                          << cfg.num_classes - 1 << " and not NULL_CLASS");
    for (const auto& z : chunks)
        ARF_CHECK(same_shape(z.shape(), cfg.latent_shape), ErrorKind::dimension,
                  "chunk latent shape mismatch");
    ARF_CHECK(static_cast<int64_t>(params.blocks.size()) == cfg.depth,
              ErrorKind::dimension, "params depth mismatch");
    if (initial)
        ARF_CHECK(static_cast<int64_t>(initial->size()) == cfg.depth,
                  ErrorKind::dimension,
                  "need one carried state per block");

    const int64_t m = cfg.tokens_per_image(), hd = cfg.hidden_size;
    const T eps = static_cast<T>(1e-6);

    // tokens: patchify each chunk, embed, add the shared positional table
    std::vector<Traced<T>> tok_parts;
    tok_parts.reserve(static_cast<size_t>(n));
    for (const auto& z : chunks)
        tok_parts.push_back(patchify(tape, constant(z), cfg.patch_size));
    auto x = matmul(tape, concat_rows(tape, tok_parts), params.patch_w);
    x = add_rows(tape, x, params.patch_b);
    Tensor<T> pos_tiled(Shape{n * m, hd});
    for (int64_t i = 0; i < n * m; ++i)
        for (int64_t j = 0; j < hd; ++j)
            pos_tiled.at(i, j) = params.pos.value.at(i % m, j);
    x = add(tape, x, constant(pos_tiled));

    // one conditioning row per chunk: time embedding + class embedding
    const int64_t class_row =
        cond.class_id == NULL_CLASS ? cfg.num_classes : cond.class_id;
    std::vector<Traced<T>> crows;
    crows.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        auto freq = constant(
            time_embedding_input<T>(cond.times[static_cast<size_t>(i)].t, hd));
        auto te = add_rows(tape, matmul(tape, freq, params.time_w1),
                           params.time_b1);
        te = add_rows(tape, matmul(tape, silu(tape, te), params.time_w2),
                      params.time_b2);
        auto ce = embedding_rows(tape, params.class_table, {class_row});
        crows.push_back(add(tape, te, ce));
    }
    auto cvec = silu(tape, concat_rows(tape, crows)); // (n, hidden)

    const HybridAttnConfig acfg = cfg.attention_config();
    ModelOut<T> out;
    out.states.reserve(static_cast<size_t>(cfg.depth));
    for (int64_t b = 0; b < cfg.depth; ++b) {
        const auto& blk = params.blocks[static_cast<size_t>(b)];
        auto mods = add_rows(tape, matmul(tape, cvec, blk.mod_w), blk.mod_b);
        auto sh1 = slice_cols(tape, mods, 0, hd);
        auto sc1 = slice_cols(tape, mods, hd, 2 * hd);
        auto g1 = slice_cols(tape, mods, 2 * hd, 3 * hd);
        auto sh2 = slice_cols(tape, mods, 3 * hd, 4 * hd);
        auto sc2 = slice_cols(tape, mods, 4 * hd, 5 * hd);
        auto g2 = slice_cols(tape, mods, 5 * hd, 6 * hd);

        auto h1 = modulate(tape, layer_norm(tape, x, eps), sh1, sc1, m);
        AttentionParams<T> ap;
        ap.w_q = blk.w_q;
        ap.w_k = blk.w_k;
        ap.w_v = blk.w_v;
        ap.w_o = blk.w_o;
        ap.w_gamma = blk.w_gamma;
        auto at = hybrid_forward_chunkwise(
            tape, h1, acfg, ap,
            initial ? &(*initial)[static_cast<size_t>(b)] : nullptr);
        x = add(tape, x, mul_chunk_rows(tape, at.y, g1, m));

        auto h2 = modulate(tape, layer_norm(tape, x, eps), sh2, sc2, m);
        auto mm = add_rows(tape, matmul(tape, h2, blk.mlp_w1), blk.mlp_b1);
        mm = add_rows(tape, matmul(tape, silu(tape, mm), blk.mlp_w2),
                      blk.mlp_b2);
        x = add(tape, x, mul_chunk_rows(tape, mm, g2, m));

        out.states.push_back(std::move(at.state));
    }

    auto fm = add_rows(tape, matmul(tape, cvec, params.final_mod_w),
                       params.final_mod_b);
    auto h = modulate(tape, layer_norm(tape, x, eps),
                      slice_cols(tape, fm, 0, hd),
                      slice_cols(tape, fm, hd, 2 * hd), m);
    auto y = add_rows(tape, matmul(tape, h, params.head_w), params.head_b);

    out.v.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        out.v.push_back(unpatchify(tape,
                                   slice_rows(tape, y, i * m, (i + 1) * m),
                                   cfg.latent_shape, cfg.patch_size));
    return out;
}

int64_t count_params(const ModelConfig& cfg) {
    cfg.validate();
    const int64_t hd = cfg.hidden_size, pd = cfg.patch_dim();
    const int64_t r = cfg.mlp_ratio;
    int64_t total = pd * hd + hd;          // patch embedding
    total += 2 * (hd * hd + hd);           // time MLP
    total += (cfg.num_classes + 1) * hd;   // class table with null row
    int64_t block = 4 * hd * hd + hd * cfg.num_heads; // attention
    block += hd * 6 * hd + 6 * hd;                    // modulation
    block += hd * (r * hd) + r * hd + (r * hd) * hd + hd; // mlp
    total += cfg.depth * block;
    total += hd * 2 * hd + 2 * hd; // final modulation
    total += hd * pd + pd;         // velocity head
    return total;
}

#define ARFLOW_INSTANTIATE_MODEL(T)                                           \
    template Tensor<T> sincos_position_table(const ModelConfig&);             \
    template Tensor<T> time_embedding_input(double, int64_t);                 \
    template ModelParams<T> init_params(const ModelConfig&, RngState&);       \
    template TracedParams<T> bind_params(Tape<T>*, const ModelParams<T>&);    \
    template Traced<T> patchify(Tape<T>*, const Traced<T>&, int64_t);         \
    template Traced<T> unpatchify(Tape<T>*, const Traced<T>&, const Shape&,   \
                                  int64_t);                                   \
    template ModelOut<T> model_forward(Tape<T>*,                              \
                                       const std::vector<Tensor<T>>&,         \
                                       const ConditioningInput&,              \
                                       const TracedParams<T>&,                \
                                       const ModelConfig&,                    \
                                       const std::vector<ChunkState<T>>*);

ARFLOW_INSTANTIATE_MODEL(float)
ARFLOW_INSTANTIATE_MODEL(double)

#undef ARFLOW_INSTANTIATE_MODEL

} // namespace arflow
