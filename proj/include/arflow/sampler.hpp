#pragma once

// Autoregressive flow generation. Every generation step is one Euler (or
// Euler-Maruyama) update of a full latent, conditioned on cached inter-chunk
// attention states from all previous steps. Classifier-free guidance runs a
// conditional and an unconditional pass, each against its own cache.

#include <functional>

#include "arflow/interpolant.hpp"
#include "arflow/model.hpp"

namespace arflow {

enum class SampleMode {
    ode_euler,
    sde_euler_maruyama,
};

struct SamplerConfig {
    int64_t steps = 32;   // desk default; a few hundred for best quality
    double cfg_scale = 1.0; // guidance strength s >= 1
    SampleMode mode = SampleMode::ode_euler;
    bool use_cache = true; // carry attention states across steps
    double t_start = 1.0;
    double t_end = 0.004; // stays above zero so the SDE's score is finite
    // Multiplies the diffusion coefficient w_t = t. Zero turns the SDE into
    // the ODE, update for update.
    double sde_diffusion_scale = 1.0;
    // Run the unconditional pass even when cfg_scale == 1 (its result is
    // algebraically unused there, so the default skips it).
    bool force_dual_pass = false;

    void validate() const {
        ARF_CHECK(steps >= 1, ErrorKind::config, "steps must be >= 1");
        ARF_CHECK(cfg_scale >= 1.0, ErrorKind::config,
                  "cfg_scale must be >= 1");
        ARF_CHECK(t_end >= 0.0 && t_start > t_end, ErrorKind::config,
                  "need t_start > t_end >= 0, got [" << t_start << ", "
                                                     << t_end << "]");
        ARF_CHECK(t_start <= 1.0, ErrorKind::config, "t_start must be <= 1");
        ARF_CHECK(sde_diffusion_scale >= 0.0, ErrorKind::config,
                  "sde_diffusion_scale must be >= 0");
    }
};

// Everything one in-flight generation carries. The conditional and
// unconditional caches advance in lockstep whenever both passes run; in
// single-pass mode (cfg_scale == 1, not forced) the unconditional cache
// stays empty because nothing ever reads it.
template <typename T>
struct GenState {
    Tensor<T> z;
    double t = 1.0;
    int64_t step = 0;
    std::vector<ChunkState<T>> cond_states;
    std::vector<ChunkState<T>> uncond_states;
};

// v_uncond + s * (v_cond - v_uncond). The endpoints are special-cased so
// s = 1 returns v_cond and s = 0 returns v_uncond bit for bit.
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& v_cond, const Tensor<T>& v_uncond,
                      double s);

// One integrator update from (z, t) along velocity v over signed dt.
// ODE: z + v dt. SDE: z + [v - (w/2) score] dt + sqrt(w |dt|) xi with
// w = sde_diffusion_scale * t; the score term leans the drift toward high
// density to balance the injected noise. w = 0 executes the ODE update
// exactly and draws nothing.
template <typename T>
Tensor<T> flow_update(const Tensor<T>& z, const Tensor<T>& v, double t,
                      double dt, const SamplerConfig& cfg, RngState& rng);

// Draws z ~ N(0, I) at t_start with empty caches.
template <typename T>
GenState<T> init_generation(const ModelConfig& mcfg, const SamplerConfig& cfg,
                            RngState& rng);

// Advances one step: evaluates the model on the current latent at the
// current time (twice when guidance needs both passes), combines, updates z,
// and folds the processed chunk into each live cache. Stepping at or below
// t_end is a contract error.
template <typename T>
void step(GenState<T>& state, const ModelParams<T>& params,
          const ModelConfig& mcfg, int64_t class_id, const SamplerConfig& cfg,
          RngState& rng);

// Full generation: init_generation + cfg.steps steps; returns the latent.
template <typename T>
Tensor<T> generate(const ModelParams<T>& params, const ModelConfig& mcfg,
                   int64_t class_id, const SamplerConfig& cfg, RngState& rng);

// Runs the same time grid and update rule on an arbitrary velocity field
// v(z, t). This is the reference path for integrator tests with fields
// whose exact solution is known.
template <typename T>
Tensor<T> integrate_field(
    const std::function<Tensor<T>(const Tensor<T>&, double)>& field,
    const SamplerConfig& cfg, const Tensor<T>& z0, RngState& rng);

} // namespace arflow
