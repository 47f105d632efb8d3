#pragma once

// Linear-schedule stochastic interpolant: z_t = (1-t) z* + t eps, with
// velocity target d/dt z_t = eps - z*. Time runs from t=0 (clean data) to
// t=1 (pure noise); generation integrates t downward. Only the linear
// schedule exists here — it is a closed form, not a plugin.

#include "arflow/ops.hpp"

namespace arflow {

struct FlowTime {
    double t = 0.0;

    FlowTime() = default;
    explicit FlowTime(double tt) : t(tt) {
        ARF_CHECK(t >= 0.0 && t <= 1.0, ErrorKind::contract,
                  "flow time " << t << " outside [0, 1]");
    }
};

template <typename T>
struct InterpolantSample {
    Tensor<T> z_star;   // clean latent
    Tensor<T> eps;      // the Gaussian draw that corrupted it
    Tensor<T> z_t;      // corrupted latent
    Tensor<T> v_target; // eps - z_star, the regression target
    FlowTime t;
};

template <typename T>
InterpolantSample<T> corrupt(const Tensor<T>& z_star, const Tensor<T>& eps,
                             FlowTime t) {
    ARF_CHECK(same_shape(z_star.shape(), eps.shape()), ErrorKind::dimension,
              "corrupt: latent and noise shapes differ");
    const auto& k = kern::active<T>();
    InterpolantSample<T> s;
    s.z_star = z_star.clone();
    s.eps = eps.clone();
    s.t = t;
    s.z_t = Tensor<T>(z_star.shape());
    const T tt = static_cast<T>(t.t);
    k.scale(z_star.data(), T(1) - tt, s.z_t.data(), s.z_t.size());
    k.axpy(tt, eps.data(), s.z_t.data(), s.z_t.size());
    s.v_target = Tensor<T>(z_star.shape());
    k.sub(eps.data(), z_star.data(), s.v_target.data(), s.v_target.size());
    return s;
}

// Mean squared error against the sample's velocity target; differentiable
// in v_pred when a tape is given.
template <typename T>
Traced<T> velocity_loss_term(Tape<T>* tape, const Traced<T>& v_pred,
                             const InterpolantSample<T>& sample) {
    ARF_CHECK(v_pred.value.size() == sample.v_target.size(),
              ErrorKind::dimension,
              "velocity_loss_term: prediction has "
                  << v_pred.value.size() << " elements, target "
                  << sample.v_target.size());
    auto target =
        constant(sample.v_target.reshaped(v_pred.value.shape()).clone());
    auto d = sub(tape, v_pred, target);
    return mean_all(tape, mul(tape, d, d));
}

// Exact inversion of the corruption for the true velocity: z* = z_t - t v.
template <typename T>
Tensor<T> denoiser_from_velocity(const Tensor<T>& z_t, const Tensor<T>& v,
                                 FlowTime t) {
    ARF_CHECK(same_shape(z_t.shape(), v.shape()), ErrorKind::dimension,
              "denoiser_from_velocity: shape mismatch");
    Tensor<T> out = z_t.clone();
    kern::active<T>().axpy(static_cast<T>(-t.t), v.data(), out.data(),
                           out.size());
    return out;
}

// Noise estimate implied by a velocity: eps = z_t + (1-t) v.
template <typename T>
Tensor<T> noise_from_velocity(const Tensor<T>& z_t, const Tensor<T>& v,
                              FlowTime t) {
    ARF_CHECK(same_shape(z_t.shape(), v.shape()), ErrorKind::dimension,
              "noise_from_velocity: shape mismatch");
    Tensor<T> out = z_t.clone();
    kern::active<T>().axpy(static_cast<T>(1.0 - t.t), v.data(), out.data(),
                           out.size());
    return out;
}

// Score of the marginal at time t: -eps_hat / t. Undefined at t = 0 where
// the marginal collapses onto the data; callers must keep t strictly
// positive (the sampler's final time stays above zero for this reason).
template <typename T>
Tensor<T> score_from_velocity(const Tensor<T>& z_t, const Tensor<T>& v,
                              FlowTime t) {
    ARF_CHECK(t.t > 0.0, ErrorKind::numeric,
              "score_from_velocity: singular at t = 0");
    Tensor<T> eps_hat = noise_from_velocity(z_t, v, t);
    Tensor<T> out(z_t.shape());
    kern::active<T>().scale(eps_hat.data(), static_cast<T>(-1.0 / t.t),
                            out.data(), out.size());
    return out;
}

} // namespace arflow
