#pragma once

// Training loop: per-sequence velocity-matching loss with label dropout for
// classifier-free guidance, AdamW with decoupled weight decay, an EMA copy
// of the weights, and a single-file checkpoint format that resumes training
// bit-exactly.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "arflow/model.hpp"
#include "arflow/sequence.hpp"

namespace arflow {

struct TrainConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int64_t batch_size = 8;
    double ema_decay = 0.9999;
    double label_drop_prob = 0.1;
    int64_t total_steps = 200;
    int64_t checkpoint_every = 0; // 0 = only on request
    double grad_clip = 0.0;       // global max norm; 0 disables
    uint64_t seed = 0;

    void validate() const {
        ARF_CHECK(learning_rate >= 0.0, ErrorKind::config,
                  "learning_rate must be >= 0");
        ARF_CHECK(weight_decay >= 0.0, ErrorKind::config,
                  "weight_decay must be >= 0");
        ARF_CHECK(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
                      adam_beta2 < 1.0,
                  ErrorKind::config, "adam betas must be in [0, 1)");
        ARF_CHECK(adam_eps > 0.0, ErrorKind::config, "adam_eps must be > 0");
        ARF_CHECK(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
        ARF_CHECK(ema_decay >= 0.0 && ema_decay <= 1.0, ErrorKind::config,
                  "ema_decay must be in [0, 1]");
        ARF_CHECK(label_drop_prob >= 0.0 && label_drop_prob < 1.0,
                  ErrorKind::config, "label_drop_prob must be in [0, 1)");
        ARF_CHECK(total_steps >= 0, ErrorKind::config,
                  "total_steps must be >= 0");
        ARF_CHECK(checkpoint_every >= 0, ErrorKind::config,
                  "checkpoint_every must be >= 0");
        ARF_CHECK(grad_clip >= 0.0, ErrorKind::config,
                  "grad_clip must be >= 0");
    }
};

template <typename T>
struct OptimizerState {
    std::vector<Tensor<T>> m, v; // aligned with for_each_param order
    int64_t step = 0;
};

struct StepMetrics {
    int64_t step = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

template <typename T>
struct TrainState {
    ModelParams<T> params;
    ModelParams<T> ema;
    OptimizerState<T> opt;
    RngState rng; // the training stream: batches and label dropout
    int64_t step = 0;
};

// Deep copy: parameter structs copy by sharing storage, so the EMA needs
// its own buffers.
template <typename T>
ModelParams<T> clone_params(const ModelParams<T>& p);

template <typename T>
OptimizerState<T> init_optimizer(const ModelParams<T>& p);

template <typename T>
TrainState<T> init_train_state(const ModelConfig& mcfg, const TrainConfig& tcfg);

// Mean over sequences and chunks of the per-chunk velocity loss. Each
// sequence consumes exactly one uniform draw for label dropout (even when
// the probability is zero) before its forward, in batch order.
template <typename T>
Traced<T> sequence_loss(Tape<T>* tape, const TracedParams<T>& params,
                        const ModelConfig& mcfg,
                        const std::vector<TrainingSequence<T>>& batch,
                        double label_drop_prob, RngState& rng);

// One AdamW update for a single tensor; step_after is the optimizer step
// count including this update (bias correction uses it).
template <typename T>
void adamw_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m,
                  Tensor<T>& v, int64_t step_after, const TrainConfig& cfg);

// Updates every parameter from grads (for_each_param order) and advances
// the step counter once.
template <typename T>
void adamw_step(ModelParams<T>& params, const std::vector<Tensor<T>>& grads,
                OptimizerState<T>& opt, const TrainConfig& cfg);

// ema <- decay * ema + (1 - decay) * params, learned tensors only.
template <typename T>
void ema_update(ModelParams<T>& ema, const ModelParams<T>& params,
                double decay);

// One optimizer step: builds batch_size sequences (per sample: one uniform
// class pick, the sequence draws, then the label-dropout draw), runs
// forward/backward per sample on its own tape, reduces gradients in batch
// order, applies AdamW, then refreshes the EMA.
template <typename T>
StepMetrics train_step(TrainState<T>& st, const CategoryDataset<T>& ds,
                       const ModelConfig& mcfg, const TrainConfig& tcfg);

// Runs until st.step reaches tcfg.total_steps; on_step (if given) sees the
// state after every step. Returns one metrics row per executed step.
template <typename T>
std::vector<StepMetrics> train(
    TrainState<T>& st, const CategoryDataset<T>& ds, const ModelConfig& mcfg,
    const TrainConfig& tcfg,
    const std::function<void(const TrainState<T>&, const StepMetrics&)>&
        on_step = {});

// Checkpoint file: magic "ARFCKPT1", version u32, length-prefixed JSON
// metadata (configs, step, rng, dtype), then named little-endian arrays
// (u64 name length, name, u32 rank, u64 extents, element data) for every
// parameter, EMA, and moment tensor, in a fixed order. Arrays are 32-bit
// floats in the float build; the double build stores 64-bit elements so
// resume stays bit-exact.
template <typename T>
void save_checkpoint(const std::string& path, const TrainState<T>& st,
                     const ModelConfig& mcfg, const TrainConfig& tcfg);

template <typename T>
struct LoadedCheckpoint {
    TrainState<T> state;
    ModelConfig model;
    TrainConfig train;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

// CSV with header step,loss,grad_norm,wall_ms; written atomically.
void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& rows);

} // namespace arflow
