#include "arflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "arflow/bench.hpp"
#include "arflow/eval.hpp"
#include "arflow/io.hpp"
#include "arflow/sequence.hpp"

namespace arflow {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Run configuration <-> JSON. Absent keys keep defaults; unknown keys are
// config errors with the offending path in the message.

[[noreturn]] void bad_value(const std::string& where, const std::string& key) {
    throw Error(ErrorKind::config,
                "bad value for " + where + "." + key + " in run config");
}

template <typename F>
void walk_object(const json& j, const std::string& where, F&& on_key) {
    ARF_CHECK(j.is_object(), ErrorKind::config,
              "\"" << where << "\" must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            ARF_CHECK(on_key(key, value), ErrorKind::config,
                      "unknown key \"" << key << "\" in \"" << where
                                       << "\" section of run config");
        } catch (const json::exception&) {
            bad_value(where, key);
        }
    }
}

void apply_model(const json& j, ModelConfig& c) {
    walk_object(j, "model", [&](const std::string& k, const json& v) {
        if (k == "latent_shape") c.latent_shape = v.get<Shape>();
        else if (k == "patch_size") c.patch_size = v.get<int64_t>();
        else if (k == "hidden_size") c.hidden_size = v.get<int64_t>();
        else if (k == "depth") c.depth = v.get<int64_t>();
        else if (k == "num_heads") c.num_heads = v.get<int64_t>();
        else if (k == "num_classes") c.num_classes = v.get<int64_t>();
        else if (k == "mlp_ratio") c.mlp_ratio = v.get<int64_t>();
        else if (k == "seq_len_train") c.seq_len_train = v.get<int64_t>();
        else if (k == "gate_temperature") c.gate_temperature = v.get<double>();
        else if (k == "use_gate") c.use_gate = v.get<bool>();
        else if (k == "use_cache") c.use_cache = v.get<bool>();
        else if (k == "intra_scale") c.intra_scale = v.get<double>();
        else return false;
        return true;
    });
}

void apply_train(const json& j, TrainConfig& c) {
    walk_object(j, "train", [&](const std::string& k, const json& v) {
        ARF_CHECK(k != "seed", ErrorKind::config,
                  "\"seed\" belongs at the top level of the run config, not "
                  "in the train section");
        if (k == "learning_rate") c.learning_rate = v.get<double>();
        else if (k == "weight_decay") c.weight_decay = v.get<double>();
        else if (k == "adam_beta1") c.adam_beta1 = v.get<double>();
        else if (k == "adam_beta2") c.adam_beta2 = v.get<double>();
        else if (k == "adam_eps") c.adam_eps = v.get<double>();
        else if (k == "batch_size") c.batch_size = v.get<int64_t>();
        else if (k == "ema_decay") c.ema_decay = v.get<double>();
        else if (k == "label_drop_prob") c.label_drop_prob = v.get<double>();
        else if (k == "total_steps") c.total_steps = v.get<int64_t>();
        else if (k == "checkpoint_every") c.checkpoint_every = v.get<int64_t>();
        else if (k == "grad_clip") c.grad_clip = v.get<double>();
        else return false;
        return true;
    });
}

SampleMode mode_from_string(const std::string& s) {
    if (s == "ode") return SampleMode::ode_euler;
    if (s == "sde") return SampleMode::sde_euler_maruyama;
    throw Error(ErrorKind::config,
                "sampler mode must be \"ode\" or \"sde\", got \"" + s + "\"");
}

const char* mode_to_string(SampleMode m) {
    return m == SampleMode::ode_euler ? "ode" : "sde";
}

void apply_sampler(const json& j, SamplerConfig& c) {
    walk_object(j, "sampler", [&](const std::string& k, const json& v) {
        if (k == "steps") c.steps = v.get<int64_t>();
        else if (k == "cfg_scale") c.cfg_scale = v.get<double>();
        else if (k == "mode") c.mode = mode_from_string(v.get<std::string>());
        else if (k == "use_cache") c.use_cache = v.get<bool>();
        else if (k == "t_start") c.t_start = v.get<double>();
        else if (k == "t_end") c.t_end = v.get<double>();
        else if (k == "sde_diffusion_scale")
            c.sde_diffusion_scale = v.get<double>();
        else if (k == "force_dual_pass") c.force_dual_pass = v.get<bool>();
        else return false;
        return true;
    });
}

void apply_data(const json& j, DataSpec& c) {
    walk_object(j, "data", [&](const std::string& k, const json& v) {
        if (k == "kind") c.kind = v.get<std::string>();
        else if (k == "items_per_class") c.items_per_class = v.get<int64_t>();
        else if (k == "spread") c.spread = v.get<double>();
        else return false;
        return true;
    });
}

// ---------------------------------------------------------------------------
// Shared plumbing.

bool f64_mode() {
    const char* v = std::getenv("ARFLOW_F64");
    return v != nullptr && std::string(v) == "1";
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    ARF_CHECK(!ec, ErrorKind::io,
              "cannot create output directory " << dir << ": "
                                                << ec.message());
}

template <typename T>
CategoryDataset<T> build_dataset(const RunConfig& run) {
    RngState rng(run.seed);
    const auto& m = run.model;
    if (run.data.kind == "mixture")
        return make_gaussian_mixture_dataset<T>(m.num_classes,
                                                run.data.items_per_class,
                                                m.latent_shape,
                                                static_cast<T>(run.data.spread),
                                                rng);
    return make_pattern_image_dataset<T>(m.num_classes,
                                         run.data.items_per_class,
                                         m.latent_shape,
                                         static_cast<T>(run.data.spread), rng);
}

template <typename T>
int64_t count_params(const ModelParams<T>& p) {
    int64_t n = 0;
    for_each_param(p, [&](const std::string&, const Tensor<T>& t) {
        n += t.size();
    });
    return n;
}

std::string shape_string(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i)
        os << (i ? ", " : "") << s[i];
    os << ")";
    return os.str();
}

// ---------------------------------------------------------------------------
// Commands. Each cmd_* is templated on the element type and returns 0; all
// failures are exceptions mapped to exit codes at the top level.

template <typename T>
int cmd_make_data(const RunConfig& run, std::ostream& out) {
    ensure_out_dir(run.out_dir);
    auto ds = build_dataset<T>(run);
    const std::string path = join_path(run.out_dir, "dataset.arfds");
    save_dataset(ds, path);
    out << "wrote " << path << ": " << ds.num_classes << " classes x "
        << ds.items_in_class(0) << " items, latent "
        << shape_string(ds.latent_shape) << "\n";
    return 0;
}

template <typename T>
int cmd_train(const RunConfig& run, const std::string& data_path,
              const std::string& resume_path, int64_t print_every,
              std::ostream& out) {
    ensure_out_dir(run.out_dir);
    const std::string dp =
        data_path.empty() ? join_path(run.out_dir, "dataset.arfds")
                          : data_path;
    auto ds = load_dataset<T>(dp);
    ARF_CHECK(ds.num_classes == run.model.num_classes, ErrorKind::config,
              "dataset has " << ds.num_classes << " classes, model expects "
                             << run.model.num_classes);
    ARF_CHECK(same_shape(ds.latent_shape, run.model.latent_shape),
              ErrorKind::config,
              "dataset latent shape " << shape_string(ds.latent_shape)
                                      << " differs from model "
                                      << shape_string(run.model.latent_shape));

    ModelConfig mcfg = run.model;
    TrainConfig tcfg = run.train;
    TrainState<T> st;
    if (!resume_path.empty()) {
        auto ck = load_checkpoint<T>(resume_path);
        // The file's configs win: resuming under different hyperparameters
        // would silently change the run halfway through.
        mcfg = ck.model;
        tcfg = ck.train;
        tcfg.total_steps = run.train.total_steps;
        st = std::move(ck.state);
        out << "resumed " << resume_path << " at step " << st.step << "\n";
    } else {
        st = init_train_state<T>(mcfg, tcfg);
    }

    std::vector<StepMetrics> rows;
    const auto t = train<T>(
        st, ds, mcfg, tcfg,
        [&](const TrainState<T>&, const StepMetrics& m) {
            ARF_CHECK(std::isfinite(m.loss) && std::isfinite(m.grad_norm),
                      ErrorKind::numeric,
                      "non-finite loss at step " << m.step);
            if (print_every > 0 && (m.step % print_every == 0 ||
                                    m.step == tcfg.total_steps))
                out << "step " << m.step << " loss " << m.loss
                    << " grad_norm " << m.grad_norm << "\n";
            if (tcfg.checkpoint_every > 0 &&
                m.step % tcfg.checkpoint_every == 0)
                save_checkpoint(join_path(run.out_dir,
                                          "ckpt_step" +
                                              std::to_string(m.step) +
                                              ".arfckpt"),
                                st, mcfg, tcfg);
        });
    rows.insert(rows.end(), t.begin(), t.end());

    const std::string ckpt = join_path(run.out_dir, "ckpt_final.arfckpt");
    save_checkpoint(ckpt, st, mcfg, tcfg);
    write_metrics_csv(join_path(run.out_dir, "metrics.csv"), rows);
    out << "wrote " << ckpt << " (step " << st.step << ") and "
        << join_path(run.out_dir, "metrics.csv") << "\n";
    return 0;
}

template <typename T>
int cmd_sample(const RunConfig& run, const std::string& ckpt_path,
               int64_t class_id, int64_t count, std::ostream& out) {
    ensure_out_dir(run.out_dir);
    auto ck = load_checkpoint<T>(ckpt_path);
    const SamplerConfig& scfg = run.sampler;

    RngState rng(run.seed);
    std::vector<Tensor<T>> latents;
    latents.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        // Reported results come from the EMA weights.
        Tensor<T> z = generate(ck.state.ema, ck.model, class_id, scfg, rng);
        for (int64_t e = 0; e < z.size(); ++e)
            ARF_CHECK(std::isfinite(static_cast<double>(z[e])),
                      ErrorKind::numeric,
                      "non-finite value in sample " << i);
        latents.push_back(std::move(z));
    }

    CategoryDataset<T> payload;
    payload.num_classes = 1;
    payload.latent_shape = ck.model.latent_shape;
    payload.items.push_back(latents);
    const std::string path = join_path(run.out_dir, "samples.arfds");
    save_dataset(payload, path);
    out << "wrote " << path << ": " << count << " samples of class "
        << class_id << "\n";

    for (int64_t ch = 0; count > 0 && ch < ck.model.latent_shape[0]; ++ch) {
        const std::string pgm = join_path(
            run.out_dir, "samples_c" + std::to_string(ch) + ".pgm");
        write_pgm_grid(pgm, latents, ch);
        out << "wrote " << pgm << "\n";
    }
    return 0;
}

template <typename T>
int cmd_eval(const RunConfig& run, const std::string& samples_path,
             const std::string& ref_path, int64_t class_id,
             std::ostream& out) {
    ensure_out_dir(run.out_dir);
    auto sds = load_dataset<T>(samples_path);
    auto rds = load_dataset<T>(ref_path);
    ARF_CHECK(class_id >= 0 && class_id < rds.num_classes, ErrorKind::config,
              "class " << class_id << " not in reference dataset (0.."
                       << rds.num_classes - 1 << ")");
    ARF_CHECK(same_shape(sds.latent_shape, rds.latent_shape),
              ErrorKind::config,
              "samples and reference latent shapes differ");

    std::vector<Tensor<T>> samples;
    for (const auto& bucket : sds.items)
        for (const auto& item : bucket) samples.push_back(item);
    const auto& reference = rds.items[static_cast<size_t>(class_id)];
    ARF_CHECK(samples.size() >= 2 && reference.size() >= 2, ErrorKind::config,
              "need at least 2 samples and 2 reference items, got "
                  << samples.size() << " and " << reference.size());

    const EvalReport report = evaluate_samples(samples, reference, run.seed);
    const std::string path = join_path(run.out_dir, "eval.csv");
    write_eval_csv(path, report);
    out << "mmd2 " << report.mmd2 << " mean_err " << report.mean_err
        << " cov_err " << report.cov_err << " (n=" << report.num_samples
        << ")\n"
        << "wrote " << path << "\n";
    return 0;
}

int cmd_bench(const RunConfig& run, const std::string& mechanism,
              std::vector<int64_t> t_list, int64_t chunk, int64_t head_dim,
              int64_t heads, int64_t repeats, std::ostream& out) {
    ensure_out_dir(run.out_dir);
    std::vector<Mechanism> ms;
    if (mechanism == "all")
        ms = {Mechanism::hybrid, Mechanism::softmax_full,
              Mechanism::linear_causal};
    else if (mechanism == "hybrid") ms = {Mechanism::hybrid};
    else if (mechanism == "softmax") ms = {Mechanism::softmax_full};
    else if (mechanism == "linear") ms = {Mechanism::linear_causal};
    else
        throw Error(ErrorKind::config,
                    "mechanism must be hybrid, softmax, linear, or all");

    std::vector<BenchPoint> all;
    for (Mechanism m : ms) {
        auto pts = sweep(m, t_list, chunk, head_dim, heads, repeats);
        for (const auto& p : pts)
            out << mechanism_name(p.mechanism) << " T=" << p.tokens
                << " median_ns=" << p.median_ns << " flops=" << p.flops
                << "\n";
        if (pts.size() >= 2) {
            const auto fit = fit_scaling_exponent(pts);
            out << mechanism_name(m) << " wall-clock scaling exponent "
                << std::setprecision(3) << fit.slope << std::setprecision(6)
                << " (r2 " << fit.r2 << ")\n";
        }
        all.insert(all.end(), pts.begin(), pts.end());
    }
    const std::string path = join_path(run.out_dir, "bench.csv");
    write_bench_csv(path, all);
    out << "wrote " << path << "\n";
    return 0;
}

template <typename T>
int cmd_inspect(const std::string& ckpt_path, std::ostream& out) {
    auto ck = load_checkpoint<T>(ckpt_path);
    out << "checkpoint " << ckpt_path << "\n";
    out << "  dtype " << (std::is_same_v<T, double> ? "f64" : "f32")
        << ", step " << ck.state.step << ", opt step " << ck.state.opt.step
        << "\n";
    RunConfig probe;
    probe.model = ck.model;
    probe.train = ck.train;
    const json rc = run_config_to_json(probe);
    out << "  model " << rc["model"].dump() << "\n";
    out << "  train " << rc["train"].dump() << "\n";
    out << "  parameters " << count_params(ck.state.params) << " elements\n";
    for_each_param(ck.state.params,
                   [&](const std::string& name, const Tensor<T>& t) {
                       out << "    " << name << " "
                           << shape_string(t.shape()) << "\n";
                   });
    return 0;
}

// ---------------------------------------------------------------------------
// Dispatch.

template <typename T>
int dispatch(const CLI::App& app, const RunConfig& run,
             const std::string& data_path, const std::string& resume_path,
             int64_t print_every, const std::string& ckpt_path,
             int64_t class_id, int64_t count, const std::string& samples_path,
             const std::string& ref_path, const std::string& mechanism,
             const std::vector<int64_t>& t_list, int64_t chunk,
             int64_t head_dim, int64_t heads, int64_t repeats,
             std::ostream& out) {
    if (app.got_subcommand("make-data")) return cmd_make_data<T>(run, out);
    if (app.got_subcommand("train"))
        return cmd_train<T>(run, data_path, resume_path, print_every, out);
    if (app.got_subcommand("sample"))
        return cmd_sample<T>(run, ckpt_path, class_id, count, out);
    if (app.got_subcommand("eval"))
        return cmd_eval<T>(run, samples_path, ref_path, class_id, out);
    if (app.got_subcommand("bench"))
        return cmd_bench(run, mechanism, t_list, chunk, head_dim, heads,
                         repeats, out);
    if (app.got_subcommand("inspect")) return cmd_inspect<T>(ckpt_path, out);
    throw Error(ErrorKind::contract, "no subcommand parsed");
}

} // namespace

void DataSpec::validate() const {
    ARF_CHECK(kind == "mixture" || kind == "patterns", ErrorKind::config,
              "data kind must be \"mixture\" or \"patterns\", got \"" << kind
                                                                      << "\"");
    ARF_CHECK(items_per_class >= 1, ErrorKind::config,
              "items_per_class must be >= 1");
    ARF_CHECK(spread >= 0.0, ErrorKind::config, "spread must be >= 0");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    sampler.validate();
    data.validate();
    ARF_CHECK(!out_dir.empty(), ErrorKind::config, "out_dir must be set");
    ARF_CHECK(threads >= 1, ErrorKind::config, "threads must be >= 1");
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    walk_object(j, "run config", [&](const std::string& k, const json& v) {
        if (k == "model") apply_model(v, c.model);
        else if (k == "train") apply_train(v, c.train);
        else if (k == "sampler") apply_sampler(v, c.sampler);
        else if (k == "data") apply_data(v, c.data);
        else if (k == "out_dir") c.out_dir = v.get<std::string>();
        else if (k == "seed") c.seed = v.get<uint64_t>();
        else if (k == "threads") c.threads = v.get<int64_t>();
        else return false;
        return true;
    });
    c.train.seed = c.seed;
    return c;
}

json run_config_to_json(const RunConfig& c) {
    return json{
        {"model",
         {{"latent_shape", c.model.latent_shape},
          {"patch_size", c.model.patch_size},
          {"hidden_size", c.model.hidden_size},
          {"depth", c.model.depth},
          {"num_heads", c.model.num_heads},
          {"num_classes", c.model.num_classes},
          {"mlp_ratio", c.model.mlp_ratio},
          {"seq_len_train", c.model.seq_len_train},
          {"gate_temperature", c.model.gate_temperature},
          {"use_gate", c.model.use_gate},
          {"use_cache", c.model.use_cache},
          {"intra_scale", c.model.intra_scale}}},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"weight_decay", c.train.weight_decay},
          {"adam_beta1", c.train.adam_beta1},
          {"adam_beta2", c.train.adam_beta2},
          {"adam_eps", c.train.adam_eps},
          {"batch_size", c.train.batch_size},
          {"ema_decay", c.train.ema_decay},
          {"label_drop_prob", c.train.label_drop_prob},
          {"total_steps", c.train.total_steps},
          {"checkpoint_every", c.train.checkpoint_every},
          {"grad_clip", c.train.grad_clip}}},
        {"sampler",
         {{"steps", c.sampler.steps},
          {"cfg_scale", c.sampler.cfg_scale},
          {"mode", mode_to_string(c.sampler.mode)},
          {"use_cache", c.sampler.use_cache},
          {"t_start", c.sampler.t_start},
          {"t_end", c.sampler.t_end},
          {"sde_diffusion_scale", c.sampler.sde_diffusion_scale},
          {"force_dual_pass", c.sampler.force_dual_pass}}},
        {"data",
         {{"kind", c.data.kind},
          {"items_per_class", c.data.items_per_class},
          {"spread", c.data.spread}}},
        {"out_dir", c.out_dir},
        {"seed", c.seed},
        {"threads", c.threads}};
}

RunConfig load_run_config(const std::string& path) {
    const auto buf = io::slurp(path);
    const json j = json::parse(buf.begin(), buf.end(), nullptr, false);
    ARF_CHECK(!j.is_discarded(), ErrorKind::config,
              path << " is not valid JSON");
    return run_config_from_json(j);
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::format: return 3;
    case ErrorKind::numeric: return 4;
    default: return 1;
    }
}

template <typename T>
void write_pgm_grid(const std::string& path,
                    const std::vector<Tensor<T>>& latents, int64_t channel) {
    ARF_CHECK(!latents.empty(), ErrorKind::contract, "no latents to render");
    const Shape& s = latents[0].shape();
    ARF_CHECK(s.size() == 3 && channel >= 0 && channel < s[0],
              ErrorKind::contract, "channel out of range");
    const int64_t h = s[1], w = s[2];
    const int64_t count = static_cast<int64_t>(latents.size());
    const int64_t cols = static_cast<int64_t>(
        std::ceil(std::sqrt(static_cast<double>(count))));
    const int64_t rows = (count + cols - 1) / cols;

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& z : latents)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double v = static_cast<double>(z.at(channel, y, x));
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;

    const int64_t W = cols * w, H = rows * h;
    std::ostringstream header;
    header << "P5\n" << W << " " << H << "\n255\n";
    const std::string hs = header.str();
    std::vector<unsigned char> buf(hs.begin(), hs.end());
    buf.resize(hs.size() + static_cast<size_t>(W * H), 0);
    unsigned char* pix = buf.data() + hs.size();
    for (int64_t i = 0; i < count; ++i) {
        const int64_t r0 = (i / cols) * h, c0 = (i % cols) * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double v = static_cast<double>(
                    latents[static_cast<size_t>(i)].at(channel, y, x));
                const double u = (v - lo) * scale;
                pix[(r0 + y) * W + (c0 + x)] = static_cast<unsigned char>(
                    std::clamp(u, 0.0, 255.0) + 0.5);
            }
    }
    io::atomic_save(path, buf);
}

template void write_pgm_grid<float>(const std::string&,
                                    const std::vector<Tensor<float>>&,
                                    int64_t);
template void write_pgm_grid<double>(const std::string&,
                                     const std::vector<Tensor<double>>&,
                                     int64_t);

int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
    CLI::App app{"arflow: causally-ordered flow matching at desk scale"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    uint64_t seed = 0;
    int64_t threads = 1;
    auto* config_opt =
        app.add_option("--config", config_path, "JSON run configuration");
    auto* seed_opt = app.add_option("--seed", seed, "master seed (u64)");
    auto* out_opt = app.add_option("--out", out_dir, "output directory");
    auto* threads_opt = app.add_option(
        "--threads", threads, "reserved; this build is single-threaded");

    app.add_subcommand("make-data", "generate a synthetic dataset file");

    auto* sc_train = app.add_subcommand("train", "train a model");
    std::string data_path, resume_path;
    int64_t print_every = 10;
    sc_train->add_option("--data", data_path,
                         "dataset file (default <out>/dataset.arfds)");
    sc_train->add_option("--resume", resume_path, "checkpoint to resume");
    sc_train->add_option("--print-every", print_every,
                         "steps between progress lines (0 = silent)");

    auto* sc_sample = app.add_subcommand("sample", "generate latents");
    std::string ckpt_path;
    int64_t class_id = 0, count = 16;
    sc_sample->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    sc_sample->add_option("--class", class_id, "class to condition on");
    sc_sample->add_option("--count", count, "number of samples")
        ->check(CLI::NonNegativeNumber);
    int64_t steps = 0;
    double cfg_scale = 0, t_start = 0, t_end = 0, diffusion = 0;
    std::string mode;
    auto* steps_opt = sc_sample->add_option("--steps", steps, "Euler steps");
    auto* cfg_opt =
        sc_sample->add_option("--cfg-scale", cfg_scale, "guidance strength");
    auto* mode_opt =
        sc_sample->add_option("--mode", mode, "integrator: ode or sde");
    auto* nocache_flag = sc_sample->add_flag(
        "--no-cache", "drop inter-image attention state between steps");
    auto* tstart_opt = sc_sample->add_option("--t-start", t_start, "");
    auto* tend_opt = sc_sample->add_option("--t-end", t_end, "");
    auto* diff_opt = sc_sample->add_option("--diffusion", diffusion,
                                           "SDE diffusion scale");
    auto* dual_flag = sc_sample->add_flag(
        "--force-dual-pass", "run the unconditional pass even at scale 1");

    auto* sc_eval = app.add_subcommand("eval", "compare samples to data");
    std::string samples_path, ref_path;
    sc_eval->add_option("--samples", samples_path, "generated latents file")
        ->required();
    sc_eval->add_option("--ref", ref_path, "reference dataset file")
        ->required();
    sc_eval->add_option("--class", class_id, "reference class");

    auto* sc_bench = app.add_subcommand("bench", "time attention mechanisms");
    std::string mechanism = "all";
    std::vector<int64_t> t_list{256, 512, 1024, 2048};
    int64_t chunk = 64, head_dim = 64, heads = 1, repeats = 5;
    sc_bench->add_option("--mechanism", mechanism,
                         "hybrid, softmax, linear, or all");
    sc_bench->add_option("--t-list", t_list, "token counts, ascending")
        ->delimiter(',');
    sc_bench->add_option("--chunk", chunk, "chunk size");
    sc_bench->add_option("--head-dim", head_dim, "per-head dimension");
    sc_bench->add_option("--heads", heads, "head count");
    sc_bench->add_option("--repeats", repeats, "timed repeats per point");

    auto* sc_inspect =
        app.add_subcommand("inspect", "summarize a checkpoint");
    sc_inspect->add_option("--ckpt", ckpt_path, "checkpoint file")
        ->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig run;
        if (config_opt->count() > 0) run = load_run_config(config_path);
        if (seed_opt->count() > 0) run.seed = seed;
        if (out_opt->count() > 0) run.out_dir = out_dir;
        if (threads_opt->count() > 0) run.threads = threads;
        run.train.seed = run.seed;

        if (steps_opt->count() > 0) run.sampler.steps = steps;
        if (cfg_opt->count() > 0) run.sampler.cfg_scale = cfg_scale;
        if (mode_opt->count() > 0) run.sampler.mode = mode_from_string(mode);
        if (nocache_flag->count() > 0) run.sampler.use_cache = false;
        if (tstart_opt->count() > 0) run.sampler.t_start = t_start;
        if (tend_opt->count() > 0) run.sampler.t_end = t_end;
        if (diff_opt->count() > 0) run.sampler.sde_diffusion_scale = diffusion;
        if (dual_flag->count() > 0) run.sampler.force_dual_pass = true;

        run.validate();

        if (f64_mode())
            return dispatch<double>(app, run, data_path, resume_path,
                                    print_every, ckpt_path, class_id, count,
                                    samples_path, ref_path, mechanism, t_list,
                                    chunk, head_dim, heads, repeats, out);
        return dispatch<float>(app, run, data_path, resume_path, print_every,
                               ckpt_path, class_id, count, samples_path,
                               ref_path, mechanism, t_list, chunk, head_dim,
                               heads, repeats, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace arflow
