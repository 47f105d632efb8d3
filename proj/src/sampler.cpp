#include "arflow/sampler.hpp"

#include <cmath>

namespace arflow {

namespace {

// Exact grid time after k of K steps; lands on t_end exactly at k = K so
// the terminal time never accumulates rounding drift.
double grid_time(const SamplerConfig& cfg, int64_t k) {
    if (k >= cfg.steps) return cfg.t_end;
    return cfg.t_start - (cfg.t_start - cfg.t_end) *
                             (static_cast<double>(k) /
                              static_cast<double>(cfg.steps));
}

} // namespace

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& v_cond, const Tensor<T>& v_uncond,
                      double s) {
    ARF_CHECK(same_shape(v_cond.shape(), v_uncond.shape()),
              ErrorKind::dimension, "cfg_combine: shape mismatch");
    if (s == 1.0) return v_cond.clone();
    if (s == 0.0) return v_uncond.clone();
    const auto& k = kern::active<T>();
    Tensor<T> out(v_cond.shape());
    k.sub(v_cond.data(), v_uncond.data(), out.data(), out.size());
    k.scale(out.data(), static_cast<T>(s), out.data(), out.size());
    k.axpy(T(1), v_uncond.data(), out.data(), out.size());
    return out;
}

template <typename T>
Tensor<T> flow_update(const Tensor<T>& z, const Tensor<T>& v, double t,
                      double dt, const SamplerConfig& cfg, RngState& rng) {
    ARF_CHECK(same_shape(z.shape(), v.shape()), ErrorKind::dimension,
              "flow_update: latent and velocity shapes differ");
    const auto& k = kern::active<T>();
    const double w = (cfg.mode == SampleMode::sde_euler_maruyama)
                         ? cfg.sde_diffusion_scale * t
                         : 0.0;
    Tensor<T> out = z.clone();
    if (w == 0.0) {
        k.axpy(static_cast<T>(dt), v.data(), out.data(), out.size());
        return out;
    }
    Tensor<T> score = score_from_velocity(z, v, FlowTime(t));
    Tensor<T> drift = v.clone();
    k.axpy(static_cast<T>(-0.5 * w), score.data(), drift.data(), drift.size());
    k.axpy(static_cast<T>(dt), drift.data(), out.data(), out.size());
    Tensor<T> xi = randn<T>(z.shape(), rng);
    k.axpy(static_cast<T>(std::sqrt(w * std::abs(dt))), xi.data(), out.data(),
           out.size());
    return out;
}

template <typename T>
GenState<T> init_generation(const ModelConfig& mcfg, const SamplerConfig& cfg,
                            RngState& rng) {
    mcfg.validate();
    cfg.validate();
    GenState<T> st;
    st.z = randn<T>(mcfg.latent_shape, rng);
    st.t = cfg.t_start;
    st.step = 0;
    return st;
}

template <typename T>
void step(GenState<T>& state, const ModelParams<T>& params,
          const ModelConfig& mcfg, int64_t class_id, const SamplerConfig& cfg,
          RngState& rng) {
    ARF_CHECK(state.t > cfg.t_end, ErrorKind::contract,
              "step: time " << state.t << " already at or below t_end "
                            << cfg.t_end);
    const double t = state.t;
    const double dt = -(cfg.t_start - cfg.t_end) /
                      static_cast<double>(cfg.steps);

    TracedParams<T> tp = bind_params<T>(nullptr, params);
    std::vector<Tensor<T>> chunk{state.z};

    ConditioningInput cond;
    cond.times = {FlowTime(t)};
    cond.class_id = class_id;
    const std::vector<ChunkState<T>>* cond_init =
        (cfg.use_cache && !state.cond_states.empty()) ? &state.cond_states
                                                      : nullptr;
    ModelOut<T> out_c =
        model_forward<T>(nullptr, chunk, cond, tp, mcfg, cond_init);
    Tensor<T> v = out_c.v[0].value;

    const bool dual = cfg.force_dual_pass || cfg.cfg_scale != 1.0;
    if (dual) {
        ConditioningInput null_cond;
        null_cond.times = {FlowTime(t)};
        null_cond.class_id = NULL_CLASS;
        const std::vector<ChunkState<T>>* uncond_init =
            (cfg.use_cache && !state.uncond_states.empty())
                ? &state.uncond_states
                : nullptr;
        ModelOut<T> out_u = model_forward<T>(nullptr, chunk, null_cond, tp,
                                             mcfg, uncond_init);
        v = cfg_combine(v, out_u.v[0].value, cfg.cfg_scale);
        if (cfg.use_cache) state.uncond_states = std::move(out_u.states);
    }
    if (cfg.use_cache) state.cond_states = std::move(out_c.states);

    state.z = flow_update(state.z, v, t, dt, cfg, rng);
    ++state.step;
    state.t = grid_time(cfg, state.step);
}

template <typename T>
Tensor<T> generate(const ModelParams<T>& params, const ModelConfig& mcfg,
                   int64_t class_id, const SamplerConfig& cfg, RngState& rng) {
    GenState<T> st = init_generation<T>(mcfg, cfg, rng);
    for (int64_t k = 0; k < cfg.steps; ++k)
        step(st, params, mcfg, class_id, cfg, rng);
    return st.z;
}

template <typename T>
Tensor<T> integrate_field(
    const std::function<Tensor<T>(const Tensor<T>&, double)>& field,
    const SamplerConfig& cfg, const Tensor<T>& z0, RngState& rng) {
    cfg.validate();
    ARF_CHECK(static_cast<bool>(field), ErrorKind::contract,
              "integrate_field: empty field");
    const double dt = -(cfg.t_start - cfg.t_end) /
                      static_cast<double>(cfg.steps);
    Tensor<T> z = z0.clone();
    for (int64_t k = 0; k < cfg.steps; ++k) {
        const double t = grid_time(cfg, k);
        Tensor<T> v = field(z, t);
        z = flow_update(z, v, t, dt, cfg, rng);
    }
    return z;
}

#define ARFLOW_INSTANTIATE_SAMPLER(T)                                         \
    template Tensor<T> cfg_combine(const Tensor<T>&, const Tensor<T>&,        \
                                   double);                                   \
    template Tensor<T> flow_update(const Tensor<T>&, const Tensor<T>&,        \
                                   double, double, const SamplerConfig&,      \
                                   RngState&);                                \
    template GenState<T> init_generation(const ModelConfig&,                  \
                                         const SamplerConfig&, RngState&);    \
    template void step(GenState<T>&, const ModelParams<T>&,                   \
                       const ModelConfig&, int64_t, const SamplerConfig&,     \
                       RngState&);                                            \
    template Tensor<T> generate(const ModelParams<T>&, const ModelConfig&,    \
                                int64_t, const SamplerConfig&, RngState&);    \
    template Tensor<T> integrate_field(                                       \
        const std::function<Tensor<T>(const Tensor<T>&, double)>&,            \
        const SamplerConfig&, const Tensor<T>&, RngState&);

ARFLOW_INSTANTIATE_SAMPLER(float)
ARFLOW_INSTANTIATE_SAMPLER(double)

#undef ARFLOW_INSTANTIATE_SAMPLER

} // namespace arflow
