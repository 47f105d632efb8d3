#include "arflow/training.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "arflow/interpolant.hpp"
#include "arflow/io.hpp"

namespace arflow {

namespace {

// Learned tensors in the fixed enumeration order shared by the optimizer,
// the EMA, and the checkpoint layout.
template <typename T>
std::vector<Tensor<T>*> collect(ModelParams<T>& p) {
    std::vector<Tensor<T>*> out;
    for_each_param(p, [&](const auto&, Tensor<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
std::vector<const Tensor<T>*> collect(const ModelParams<T>& p) {
    std::vector<const Tensor<T>*> out;
    for_each_param(p, [&](const auto&, const Tensor<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
std::vector<std::string> param_names(const ModelParams<T>& p) {
    std::vector<std::string> out;
    for_each_param(p, [&](const auto& name, const Tensor<T>&) {
        out.emplace_back(name);
    });
    return out;
}

} // namespace

template <typename T>
ModelParams<T> clone_params(const ModelParams<T>& p) {
    ModelParams<T> out = p; // shares storage field by field
    for_each_param(out, [](const auto&, Tensor<T>& t) { t = t.clone(); });
    out.pos = p.pos.clone();
    return out;
}

template <typename T>
OptimizerState<T> init_optimizer(const ModelParams<T>& p) {
    OptimizerState<T> opt;
    for (const Tensor<T>* t : collect(p)) {
        opt.m.push_back(Tensor<T>::zeros(t->shape()));
        opt.v.push_back(Tensor<T>::zeros(t->shape()));
    }
    return opt;
}

template <typename T>
TrainState<T> init_train_state(const ModelConfig& mcfg, const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    RngState root(tcfg.seed);
    TrainState<T> st;
    RngState init_stream = root.fork(1);
    st.params = init_params<T>(mcfg, init_stream);
    st.ema = clone_params(st.params);
    st.opt = init_optimizer(st.params);
    st.rng = root.fork(2); // batch composition and label dropout
    st.step = 0;
    return st;
}

template <typename T>
Traced<T> sequence_loss(Tape<T>* tape, const TracedParams<T>& params,
                        const ModelConfig& mcfg,
                        const std::vector<TrainingSequence<T>>& batch,
                        double label_drop_prob, RngState& rng) {
    ARF_CHECK(!batch.empty(), ErrorKind::contract, "sequence_loss: empty batch");
    const int64_t n = static_cast<int64_t>(batch[0].chunks.size());
    for (const auto& seq : batch) {
        ARF_CHECK(static_cast<int64_t>(seq.chunks.size()) == n,
                  ErrorKind::dimension,
                  "sequence_loss: sequence with "
                      << seq.chunks.size() << " chunks in a batch of length-"
                      << n << " sequences");
    }

    Traced<T> total;
    bool have_total = false;
    for (const auto& seq : batch) {
        // One dropout draw per sequence, always, so the random stream does
        // not depend on the probability value.
        const double u = rng.next_uniform();
        ConditioningInput cond;
        cond.times = seq.times;
        cond.class_id = (u < label_drop_prob) ? NULL_CLASS : seq.class_id;

        std::vector<Tensor<T>> chunks;
        chunks.reserve(static_cast<size_t>(n));
        for (const auto& s : seq.chunks) chunks.push_back(s.z_t);

        ModelOut<T> out = model_forward(tape, chunks, cond, params, mcfg);
        for (int64_t j = 0; j < n; ++j) {
            Traced<T> term = velocity_loss_term(
                tape, out.v[static_cast<size_t>(j)],
                seq.chunks[static_cast<size_t>(j)]);
            total = have_total ? add(tape, total, term) : term;
            have_total = true;
        }
    }
    const T inv = T(1) / static_cast<T>(batch.size() * static_cast<size_t>(n));
    return scale_by(tape, total, inv);
}

template <typename T>
void adamw_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m,
                  Tensor<T>& v, int64_t step_after, const TrainConfig& cfg) {
    ARF_CHECK(same_shape(param.shape(), grad.shape()) &&
                  same_shape(param.shape(), m.shape()) &&
                  same_shape(param.shape(), v.shape()),
              ErrorKind::dimension, "adamw_update: shape mismatch");
    ARF_CHECK(step_after >= 1, ErrorKind::contract,
              "adamw_update: step count must be >= 1");
    const T b1 = static_cast<T>(cfg.adam_beta1);
    const T b2 = static_cast<T>(cfg.adam_beta2);
    const T eps = static_cast<T>(cfg.adam_eps);
    const T lr = static_cast<T>(cfg.learning_rate);
    const T mc = static_cast<T>(
        1.0 / (1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step_after))));
    const T vc = static_cast<T>(
        1.0 / (1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step_after))));
    const T decay = T(1) - lr * static_cast<T>(cfg.weight_decay);

    T* p = param.data();
    const T* g = grad.data();
    T* mp = m.data();
    T* vp = v.data();
    const int64_t count = param.size();
    for (int64_t i = 0; i < count; ++i) {
        mp[i] = b1 * mp[i] + (T(1) - b1) * g[i];
        vp[i] = b2 * vp[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = mp[i] * mc;
        const T vhat = vp[i] * vc;
        p[i] = p[i] * decay - lr * mhat / (std::sqrt(vhat) + eps);
    }
}

template <typename T>
void adamw_step(ModelParams<T>& params, const std::vector<Tensor<T>>& grads,
                OptimizerState<T>& opt, const TrainConfig& cfg) {
    auto plist = collect(params);
    ARF_CHECK(grads.size() == plist.size() && opt.m.size() == plist.size() &&
                  opt.v.size() == plist.size(),
              ErrorKind::dimension,
              "adamw_step: " << plist.size() << " parameters, " << grads.size()
                             << " gradients, " << opt.m.size() << " moments");
    ++opt.step;
    for (size_t i = 0; i < plist.size(); ++i)
        adamw_update(*plist[i], grads[i], opt.m[i], opt.v[i], opt.step, cfg);
}

template <typename T>
void ema_update(ModelParams<T>& ema, const ModelParams<T>& params,
                double decay) {
    ARF_CHECK(decay >= 0.0 && decay <= 1.0, ErrorKind::contract,
              "ema decay must be in [0, 1]");
    auto elist = collect(ema);
    auto plist = collect(params);
    ARF_CHECK(elist.size() == plist.size(), ErrorKind::dimension,
              "ema_update: parameter lists differ");
    const T d = static_cast<T>(decay);
    for (size_t i = 0; i < elist.size(); ++i) {
        ARF_CHECK(same_shape(elist[i]->shape(), plist[i]->shape()),
                  ErrorKind::dimension, "ema_update: shape mismatch");
        T* e = elist[i]->data();
        const T* p = plist[i]->data();
        const int64_t count = elist[i]->size();
        for (int64_t j = 0; j < count; ++j)
            e[j] = d * e[j] + (T(1) - d) * p[j];
    }
}

template <typename T>
StepMetrics train_step(TrainState<T>& st, const CategoryDataset<T>& ds,
                       const ModelConfig& mcfg, const TrainConfig& tcfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ARF_CHECK(ds.num_classes >= 1, ErrorKind::contract,
              "train_step: dataset has no classes");

    auto plist = collect(st.params);
    std::vector<Tensor<T>> grad_sum;
    grad_sum.reserve(plist.size());
    for (const Tensor<T>* p : plist)
        grad_sum.push_back(Tensor<T>::zeros(p->shape()));

    const auto& k = kern::active<T>();
    double loss_sum = 0.0;

    // Each sample gets its own tape; gradients reduce into grad_sum in batch
    // order so the result is independent of nothing and repeatable bit for
    // bit under a fixed seed.
    for (int64_t b = 0; b < tcfg.batch_size; ++b) {
        const double u = st.rng.next_uniform();
        int64_t cls = static_cast<int64_t>(
            u * static_cast<double>(ds.num_classes));
        if (cls >= ds.num_classes) cls = ds.num_classes - 1;
        TrainingSequence<T> seq =
            build_sequence(ds, cls, mcfg.seq_len_train, st.rng);

        Tape<T> tape;
        TracedParams<T> tp = bind_params(&tape, st.params);
        Traced<T> loss = sequence_loss(&tape, tp, mcfg, {seq},
                                       tcfg.label_drop_prob, st.rng);
        tape.backward(loss.id);
        loss_sum += static_cast<double>(loss.value[0]);

        std::vector<int> ids;
        for_each_param(tp, [&](const auto&, const Traced<T>& t) {
            ids.push_back(t.id);
        });
        for (size_t i = 0; i < grad_sum.size(); ++i) {
            Tensor<T> g = tape.grad_or_zeros(ids[i]);
            k.axpy(T(1), g.data(), grad_sum[i].data(), g.size());
        }
    }

    const T invb = T(1) / static_cast<T>(tcfg.batch_size);
    double sq = 0.0;
    for (auto& g : grad_sum) {
        k.scale(g.data(), invb, g.data(), g.size());
        sq += static_cast<double>(k.dot(g.data(), g.data(), g.size()));
    }
    const double grad_norm = std::sqrt(sq);

    if (tcfg.grad_clip > 0.0 && grad_norm > tcfg.grad_clip) {
        const T s = static_cast<T>(tcfg.grad_clip / grad_norm);
        for (auto& g : grad_sum) k.scale(g.data(), s, g.data(), g.size());
    }

    adamw_step(st.params, grad_sum, st.opt, tcfg);
    ema_update(st.ema, st.params, tcfg.ema_decay);
    ++st.step;

    const auto t1 = std::chrono::steady_clock::now();
    StepMetrics m;
    m.step = st.step;
    m.loss = loss_sum / static_cast<double>(tcfg.batch_size);
    m.grad_norm = grad_norm;
    m.wall_ms =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
    return m;
}

template <typename T>
std::vector<StepMetrics> train(
    TrainState<T>& st, const CategoryDataset<T>& ds, const ModelConfig& mcfg,
    const TrainConfig& tcfg,
    const std::function<void(const TrainState<T>&, const StepMetrics&)>&
        on_step) {
    mcfg.validate();
    tcfg.validate();
    std::vector<StepMetrics> rows;
    while (st.step < tcfg.total_steps) {
        StepMetrics m = train_step(st, ds, mcfg, tcfg);
        rows.push_back(m);
        if (on_step) on_step(st, m);
    }
    return rows;
}

namespace {

constexpr char kMagic[] = "ARFCKPT1";
constexpr uint32_t kVersion = 1;

template <typename T>
const char* dtype_name() {
    return std::is_same_v<T, float> ? "f32" : "f64";
}

template <typename T>
void write_array(io::Writer& w, const std::string& name, const Tensor<T>& t) {
    w.u64(name.size());
    w.str(name);
    w.u32(static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i)
        w.u64(static_cast<uint64_t>(t.dim(i)));
    if constexpr (std::is_same_v<T, float>) {
        w.f32_array(t.data(), static_cast<size_t>(t.size()));
    } else {
        w.f64_array(t.data(), static_cast<size_t>(t.size()));
    }
}

template <typename T>
void read_array(io::Reader& r, const std::string& expect, Tensor<T>& dst) {
    const uint64_t nlen = r.u64();
    const std::string name = r.str(nlen);
    ARF_CHECK(name == expect, ErrorKind::format,
              "checkpoint holds array '" << name << "' where '" << expect
                                         << "' was expected");
    const uint32_t rank = r.u32();
    ARF_CHECK(rank == static_cast<uint32_t>(dst.rank()), ErrorKind::format,
              "checkpoint array '" << name << "' has rank " << rank
                                   << ", expected " << dst.rank());
    for (int i = 0; i < dst.rank(); ++i) {
        const uint64_t e = r.u64();
        ARF_CHECK(e == static_cast<uint64_t>(dst.dim(i)), ErrorKind::format,
                  "checkpoint array '" << name << "' extent " << i << " is "
                                       << e << ", expected " << dst.dim(i));
    }
    if constexpr (std::is_same_v<T, float>) {
        r.f32_array(dst.data(), static_cast<size_t>(dst.size()));
    } else {
        r.f64_array(dst.data(), static_cast<size_t>(dst.size()));
    }
}

nlohmann::json model_to_json(const ModelConfig& c) {
    return nlohmann::json{{"latent_shape", c.latent_shape},
                          {"patch_size", c.patch_size},
                          {"hidden_size", c.hidden_size},
                          {"depth", c.depth},
                          {"num_heads", c.num_heads},
                          {"num_classes", c.num_classes},
                          {"mlp_ratio", c.mlp_ratio},
                          {"seq_len_train", c.seq_len_train},
                          {"gate_temperature", c.gate_temperature},
                          {"use_gate", c.use_gate},
                          {"use_cache", c.use_cache},
                          {"intra_scale", c.intra_scale}};
}

nlohmann::json train_to_json(const TrainConfig& c) {
    return nlohmann::json{{"learning_rate", c.learning_rate},
                          {"weight_decay", c.weight_decay},
                          {"adam_beta1", c.adam_beta1},
                          {"adam_beta2", c.adam_beta2},
                          {"adam_eps", c.adam_eps},
                          {"batch_size", c.batch_size},
                          {"ema_decay", c.ema_decay},
                          {"label_drop_prob", c.label_drop_prob},
                          {"total_steps", c.total_steps},
                          {"checkpoint_every", c.checkpoint_every},
                          {"grad_clip", c.grad_clip},
                          {"seed", c.seed}};
}

ModelConfig model_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.latent_shape = j.at("latent_shape").get<Shape>();
    c.patch_size = j.at("patch_size").get<int64_t>();
    c.hidden_size = j.at("hidden_size").get<int64_t>();
    c.depth = j.at("depth").get<int64_t>();
    c.num_heads = j.at("num_heads").get<int64_t>();
    c.num_classes = j.at("num_classes").get<int64_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<int64_t>();
    c.seq_len_train = j.at("seq_len_train").get<int64_t>();
    c.gate_temperature = j.at("gate_temperature").get<double>();
    c.use_gate = j.at("use_gate").get<bool>();
    c.use_cache = j.at("use_cache").get<bool>();
    c.intra_scale = j.at("intra_scale").get<double>();
    return c;
}

TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.batch_size = j.at("batch_size").get<int64_t>();
    c.ema_decay = j.at("ema_decay").get<double>();
    c.label_drop_prob = j.at("label_drop_prob").get<double>();
    c.total_steps = j.at("total_steps").get<int64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
    c.grad_clip = j.at("grad_clip").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

} // namespace

template <typename T>
void save_checkpoint(const std::string& path, const TrainState<T>& st,
                     const ModelConfig& mcfg, const TrainConfig& tcfg) {
    io::Writer w;
    w.str(kMagic);
    w.u32(kVersion);

    nlohmann::json meta{{"model", model_to_json(mcfg)},
                        {"train", train_to_json(tcfg)},
                        {"step", st.step},
                        {"opt_step", st.opt.step},
                        {"rng",
                         {{"seed", st.rng.seed}, {"counter", st.rng.counter}}},
                        {"dtype", dtype_name<T>()}};
    const std::string js = meta.dump();
    w.u64(js.size());
    w.str(js);

    const auto names = param_names(st.params);
    const auto plist = collect(st.params);
    const auto elist = collect(st.ema);
    ARF_CHECK(st.opt.m.size() == plist.size() && st.opt.v.size() == plist.size(),
              ErrorKind::contract, "save_checkpoint: optimizer is misaligned");
    for (size_t i = 0; i < plist.size(); ++i)
        write_array(w, "param." + names[i], *plist[i]);
    for (size_t i = 0; i < elist.size(); ++i)
        write_array(w, "ema." + names[i], *elist[i]);
    for (size_t i = 0; i < plist.size(); ++i)
        write_array(w, "moment1." + names[i], st.opt.m[i]);
    for (size_t i = 0; i < plist.size(); ++i)
        write_array(w, "moment2." + names[i], st.opt.v[i]);

    io::atomic_save(path, w.buffer());
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    const std::vector<unsigned char> buf = io::slurp(path);
    io::Reader r(buf.data(), buf.size());

    const std::string magic = r.str(8);
    ARF_CHECK(magic == kMagic, ErrorKind::format,
              "not a checkpoint file: bad magic");
    const uint32_t version = r.u32();
    ARF_CHECK(version == kVersion, ErrorKind::format,
              "unsupported checkpoint version " << version);

    const uint64_t jlen = r.u64();
    const std::string js = r.str(jlen);
    const nlohmann::json meta = nlohmann::json::parse(js, nullptr, false);
    ARF_CHECK(!meta.is_discarded(), ErrorKind::format,
              "checkpoint metadata is not valid JSON");

    LoadedCheckpoint<T> out;
    try {
        out.model = model_from_json(meta.at("model"));
        out.train = train_from_json(meta.at("train"));
        out.state.step = meta.at("step").get<int64_t>();
        out.state.opt.step = meta.at("opt_step").get<int64_t>();
        out.state.rng = RngState(meta.at("rng").at("seed").get<uint64_t>(),
                                 meta.at("rng").at("counter").get<uint64_t>());
        const std::string dtype = meta.at("dtype").get<std::string>();
        ARF_CHECK(dtype == dtype_name<T>(), ErrorKind::format,
                  "checkpoint holds " << dtype << " arrays, this build expects "
                                      << dtype_name<T>());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::format,
             std::string("checkpoint metadata is incomplete: ") + e.what());
    }
    out.model.validate();
    out.train.validate();

    // Allocate tensors with the architecture's shapes, then overwrite them
    // from the file; any mismatch is a format error.
    RngState scratch(0);
    out.state.params = init_params<T>(out.model, scratch);
    out.state.ema = clone_params(out.state.params);
    const int64_t opt_step = out.state.opt.step;
    out.state.opt = init_optimizer(out.state.params);
    out.state.opt.step = opt_step;

    const auto names = param_names(out.state.params);
    const auto plist = collect(out.state.params);
    const auto elist = collect(out.state.ema);
    for (size_t i = 0; i < plist.size(); ++i)
        read_array(r, "param." + names[i], *plist[i]);
    for (size_t i = 0; i < elist.size(); ++i)
        read_array(r, "ema." + names[i], *elist[i]);
    for (size_t i = 0; i < plist.size(); ++i)
        read_array(r, "moment1." + names[i], out.state.opt.m[i]);
    for (size_t i = 0; i < plist.size(); ++i)
        read_array(r, "moment2." + names[i], out.state.opt.v[i]);
    ARF_CHECK(r.exhausted(), ErrorKind::format,
              "checkpoint has " << r.remaining() << " trailing bytes");
    return out;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<StepMetrics>& rows) {
    std::ostringstream os;
    os << "step,loss,grad_norm,wall_ms\n";
    os << std::setprecision(10);
    for (const StepMetrics& m : rows)
        os << m.step << ',' << m.loss << ',' << m.grad_norm << ','
           << m.wall_ms << '\n';
    const std::string s = os.str();
    io::atomic_save(path,
                    std::vector<unsigned char>(s.begin(), s.end()));
}

#define ARFLOW_INSTANTIATE_TRAINING(T)                                        \
    template ModelParams<T> clone_params(const ModelParams<T>&);              \
    template OptimizerState<T> init_optimizer(const ModelParams<T>&);         \
    template TrainState<T> init_train_state(const ModelConfig&,               \
                                            const TrainConfig&);              \
    template Traced<T> sequence_loss(Tape<T>*, const TracedParams<T>&,        \
                                     const ModelConfig&,                      \
                                     const std::vector<TrainingSequence<T>>&, \
                                     double, RngState&);                      \
    template void adamw_update(Tensor<T>&, const Tensor<T>&, Tensor<T>&,      \
                               Tensor<T>&, int64_t, const TrainConfig&);      \
    template void adamw_step(ModelParams<T>&, const std::vector<Tensor<T>>&,  \
                             OptimizerState<T>&, const TrainConfig&);         \
    template void ema_update(ModelParams<T>&, const ModelParams<T>&, double); \
    template StepMetrics train_step(TrainState<T>&, const CategoryDataset<T>&,\
                                    const ModelConfig&, const TrainConfig&);  \
    template std::vector<StepMetrics> train(                                  \
        TrainState<T>&, const CategoryDataset<T>&, const ModelConfig&,        \
        const TrainConfig&,                                                   \
        const std::function<void(const TrainState<T>&, const StepMetrics&)>&);\
    template void save_checkpoint(const std::string&, const TrainState<T>&,   \
                                  const ModelConfig&, const TrainConfig&);    \
    template LoadedCheckpoint<T> load_checkpoint(const std::string&);

ARFLOW_INSTANTIATE_TRAINING(float)
ARFLOW_INSTANTIATE_TRAINING(double)

#undef ARFLOW_INSTANTIATE_TRAINING

} // namespace arflow
