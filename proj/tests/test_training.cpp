#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "arflow/training.hpp"

using namespace arflow;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<unsigned char>& b) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out.write(reinterpret_cast<const char*>(b.data()),
              static_cast<std::streamsize>(b.size()));
}

// Small enough to train in milliseconds, big enough to exercise every
// parameter tensor (one block, gated attention, class conditioning).
ModelConfig toy_model() {
    ModelConfig cfg;
    cfg.latent_shape = {2, 4, 4};
    cfg.patch_size = 2;
    cfg.hidden_size = 16;
    cfg.depth = 1;
    cfg.num_heads = 2;
    cfg.num_classes = 2;
    cfg.mlp_ratio = 2;
    cfg.seq_len_train = 2;
    return cfg;
}

template <typename T>
CategoryDataset<T> toy_dataset(uint64_t seed) {
    RngState rng(seed);
    return make_gaussian_mixture_dataset<T>(2, 8, {2, 4, 4}, T(0.25), rng);
}

template <typename T>
double max_abs_diff_params(const ModelParams<T>& a, const ModelParams<T>& b) {
    double worst = 0.0;
    std::vector<const Tensor<T>*> la, lb;
    for_each_param(a, [&](const auto&, const Tensor<T>& t) { la.push_back(&t); });
    for_each_param(b, [&](const auto&, const Tensor<T>& t) { lb.push_back(&t); });
    REQUIRE(la.size() == lb.size());
    for (size_t i = 0; i < la.size(); ++i) {
        REQUIRE(same_shape(la[i]->shape(), lb[i]->shape()));
        for (int64_t j = 0; j < la[i]->size(); ++j) {
            const double d = std::abs(static_cast<double>((*la[i])[j]) -
                                      static_cast<double>((*lb[i])[j]));
            worst = std::max(worst, d);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("adamw first step moves a unit weight by almost the learning rate") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;

    auto x = Tensor<double>::scalar(1.0);
    auto g = Tensor<double>::scalar(1.0);
    auto m = Tensor<double>::zeros({1});
    auto v = Tensor<double>::zeros({1});
    adamw_update(x, g, m, v, 1, cfg);

    // Bias correction makes mhat = g and vhat = g*g on step one, so the
    // update is lr * g / (|g| + eps), a hair under lr.
    CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(x[0] > 0.9);
    CHECK(x[0] < 0.9 + 1e-8);
    CHECK(m[0] == doctest::Approx(0.1 * 1.0));
    CHECK(v[0] == doctest::Approx(0.001 * 1.0));
}

TEST_CASE("adamw matches a scalar reimplementation over several steps") {
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.weight_decay = 0.01;

    auto x = Tensor<double>::scalar(0.7);
    auto m = Tensor<double>::zeros({1});
    auto v = Tensor<double>::zeros({1});

    double xs = 0.7, ms = 0.0, vs = 0.0;
    RngState rng(11);
    for (int64_t step = 1; step <= 7; ++step) {
        const double gg = rng.next_uniform() * 2.0 - 1.0;
        auto g = Tensor<double>::scalar(gg);
        adamw_update(x, g, m, v, step, cfg);

        ms = cfg.adam_beta1 * ms + (1.0 - cfg.adam_beta1) * gg;
        vs = cfg.adam_beta2 * vs + (1.0 - cfg.adam_beta2) * gg * gg;
        const double mhat = ms / (1.0 - std::pow(cfg.adam_beta1, double(step)));
        const double vhat = vs / (1.0 - std::pow(cfg.adam_beta2, double(step)));
        xs = xs * (1.0 - cfg.learning_rate * cfg.weight_decay) -
             cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);

        CHECK(x[0] == doctest::Approx(xs).epsilon(1e-14));
    }
}

TEST_CASE("adamw with a zero gradient leaves moments alone and only decays") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;

    auto x = Tensor<double>::scalar(2.0);
    auto g = Tensor<double>::zeros({1});
    auto m = Tensor<double>::zeros({1});
    auto v = Tensor<double>::zeros({1});

    SUBCASE("no weight decay: the weight does not move") {
        cfg.weight_decay = 0.0;
        adamw_update(x, g, m, v, 1, cfg);
        CHECK(x[0] == 2.0);
        CHECK(m[0] == 0.0);
        CHECK(v[0] == 0.0);
    }
    SUBCASE("decay is decoupled: shrink factor applies even with zero grad") {
        cfg.weight_decay = 0.5;
        adamw_update(x, g, m, v, 1, cfg);
        CHECK(x[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-15));
    }
}

TEST_CASE("adamw_step advances the shared counter once per call") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    RngState rng(3);
    auto params = init_params<double>(mcfg, rng);
    auto opt = init_optimizer(params);

    std::vector<Tensor<double>> grads;
    for_each_param(params, [&](const auto&, const Tensor<double>& t) {
        grads.push_back(Tensor<double>::zeros(t.shape()));
    });
    adamw_step(params, grads, opt, tcfg);
    CHECK(opt.step == 1);
    adamw_step(params, grads, opt, tcfg);
    CHECK(opt.step == 2);

    grads.pop_back();
    CHECK_THROWS_AS(adamw_step(params, grads, opt, tcfg), Error);
}

TEST_CASE("ema follows its closed form") {
    auto mcfg = toy_model();
    RngState rng(5);
    auto params = init_params<double>(mcfg, rng);
    RngState rng2(6);
    auto target = init_params<double>(mcfg, rng2);
    // Make every tensor (including the zero-initialized ones) distinct.
    for_each_param(target, [&](const auto&, Tensor<double>& t) {
        for (int64_t i = 0; i < t.size(); ++i) t[i] += 0.01 * double(i % 7 + 1);
    });

    SUBCASE("decay zero copies the parameters") {
        auto ema = clone_params(params);
        ema_update(ema, target, 0.0);
        CHECK(max_abs_diff_params(ema, target) == 0.0);
    }
    SUBCASE("decay one freezes the average") {
        auto ema = clone_params(params);
        ema_update(ema, target, 1.0);
        CHECK(max_abs_diff_params(ema, params) == 0.0);
    }
    SUBCASE("k updates toward a fixed target: p + d^k (e0 - p)") {
        const double d = 0.9;
        const int k = 5;
        auto ema = clone_params(params);
        for (int i = 0; i < k; ++i) ema_update(ema, target, d);

        auto expect = clone_params(target);
        std::vector<Tensor<double>*> le, l0, lt;
        for_each_param(expect, [&](const auto&, Tensor<double>& t) { le.push_back(&t); });
        for_each_param(params, [&](const auto&, Tensor<double>& t) { l0.push_back(&t); });
        for_each_param(target, [&](const auto&, Tensor<double>& t) { lt.push_back(&t); });
        const double dk = std::pow(d, k);
        for (size_t i = 0; i < le.size(); ++i)
            for (int64_t j = 0; j < le[i]->size(); ++j)
                (*le[i])[j] = (*lt[i])[j] + dk * ((*l0[i])[j] - (*lt[i])[j]);
        CHECK(max_abs_diff_params(ema, expect) < 1e-14);
    }
}

TEST_CASE("clone_params detaches storage") {
    auto mcfg = toy_model();
    RngState rng(7);
    auto params = init_params<double>(mcfg, rng);
    auto copy = clone_params(params);
    CHECK(max_abs_diff_params(copy, params) == 0.0);
    params.patch_w[0] += 1.0;
    CHECK(copy.patch_w[0] != params.patch_w[0]);
}

TEST_CASE("sequence loss of the zero-initialized model is the target power") {
    auto mcfg = toy_model();
    RngState prng(21);
    auto params = init_params<double>(mcfg, prng);
    auto ds = toy_dataset<double>(22);

    RngState srng(23);
    std::vector<TrainingSequence<double>> batch;
    for (int b = 0; b < 3; ++b)
        batch.push_back(build_sequence(ds, b % 2, mcfg.seq_len_train, srng));

    auto tp = bind_params<double>(nullptr, params);
    RngState drop_rng(24);
    auto loss = sequence_loss<double>(nullptr, tp, mcfg, batch, 0.0, drop_rng);

    // The velocity head is zero-initialized, so the prediction is exactly
    // zero and the loss reduces to the mean squared velocity target.
    double acc = 0.0;
    int64_t terms = 0;
    for (const auto& seq : batch)
        for (const auto& chunk : seq.chunks) {
            double s = 0.0;
            for (int64_t i = 0; i < chunk.v_target.size(); ++i)
                s += chunk.v_target[i] * chunk.v_target[i];
            acc += s / double(chunk.v_target.size());
            ++terms;
        }
    CHECK(loss.value[0] ==
          doctest::Approx(acc / double(terms)).epsilon(1e-12));
    CHECK(loss.value[0] > 0.0);
}

TEST_CASE("sequence loss handles a single one-chunk sequence") {
    auto mcfg = toy_model();
    mcfg.seq_len_train = 1;
    RngState prng(31);
    auto params = init_params<double>(mcfg, prng);
    auto ds = toy_dataset<double>(32);

    RngState srng(33);
    std::vector<TrainingSequence<double>> batch{
        build_sequence(ds, 0, 1, srng)};
    auto tp = bind_params<double>(nullptr, params);
    RngState drop_rng(34);
    auto loss = sequence_loss<double>(nullptr, tp, mcfg, batch, 0.0, drop_rng);

    const auto& chunk = batch[0].chunks[0];
    double s = 0.0;
    for (int64_t i = 0; i < chunk.v_target.size(); ++i)
        s += chunk.v_target[i] * chunk.v_target[i];
    CHECK(loss.value[0] ==
          doctest::Approx(s / double(chunk.v_target.size())).epsilon(1e-12));
}

TEST_CASE("sequence loss rejects mixed sequence lengths") {
    auto mcfg = toy_model();
    RngState prng(41);
    auto params = init_params<double>(mcfg, prng);
    auto ds = toy_dataset<double>(42);

    RngState srng(43);
    std::vector<TrainingSequence<double>> batch;
    batch.push_back(build_sequence(ds, 0, 2, srng));
    batch.push_back(build_sequence(ds, 1, 3, srng));

    auto tp = bind_params<double>(nullptr, params);
    RngState drop_rng(44);
    try {
        sequence_loss<double>(nullptr, tp, mcfg, batch, 0.0, drop_rng);
        FAIL("mixed lengths accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::dimension);
    }
}

TEST_CASE("sequence loss consumes one dropout draw per sequence") {
    auto mcfg = toy_model();
    RngState prng(51);
    auto params = init_params<double>(mcfg, prng);
    auto ds = toy_dataset<double>(52);

    RngState srng(53);
    std::vector<TrainingSequence<double>> batch;
    for (int b = 0; b < 4; ++b)
        batch.push_back(build_sequence(ds, b % 2, mcfg.seq_len_train, srng));

    auto tp = bind_params<double>(nullptr, params);
    RngState drop_rng(54);
    const uint64_t before = drop_rng.counter;
    sequence_loss<double>(nullptr, tp, mcfg, batch, 0.0, drop_rng);
    CHECK(drop_rng.counter == before + 4);

    // The probability value changes decisions, not stream consumption.
    RngState drop_rng2(54);
    sequence_loss<double>(nullptr, tp, mcfg, batch, 0.9, drop_rng2);
    CHECK(drop_rng2.counter == before + 4);
}

TEST_CASE("label dropout hits the null class at the configured rate") {
    // Make the conditioning path visible in the loss: jitter the zero-
    // initialized head and final modulation so class identity changes the
    // output, then count which of the two possible loss values appears.
    ModelConfig mcfg;
    mcfg.latent_shape = {1, 2, 2};
    mcfg.patch_size = 1;
    mcfg.hidden_size = 4;
    mcfg.depth = 0;
    mcfg.num_heads = 1;
    mcfg.num_classes = 2;
    mcfg.mlp_ratio = 1;
    mcfg.seq_len_train = 1;

    RngState prng(61);
    auto params = init_params<double>(mcfg, prng);
    RngState jrng(62);
    for (auto* t : {&params.head_w, &params.head_b, &params.final_mod_w,
                    &params.final_mod_b}) {
        Tensor<double> noise = randn<double>(t->shape(), jrng);
        for (int64_t i = 0; i < t->size(); ++i) (*t)[i] += 0.3 * noise[i];
    }

    auto ds = toy_dataset<double>(63);
    // One fixed sequence reused throughout; only the dropout decision varies.
    RngState srng(64);
    CategoryDataset<double> tiny;
    tiny.num_classes = 2;
    tiny.items.resize(2);
    RngState item_rng(65);
    tiny.items[0].push_back(randn<double>({1, 2, 2}, item_rng));
    tiny.items[1].push_back(randn<double>({1, 2, 2}, item_rng));
    std::vector<TrainingSequence<double>> batch{
        build_sequence(tiny, 1, 1, srng)};

    auto tp = bind_params<double>(nullptr, params);
    RngState cond_rng(1);
    const double loss_cond =
        sequence_loss<double>(nullptr, tp, mcfg, batch, 0.0, cond_rng)
            .value[0];
    // Forcing every draw below the threshold gives the dropped value.
    RngState null_rng(1);
    const double loss_null =
        sequence_loss<double>(nullptr, tp, mcfg, batch, 0.999999, null_rng)
            .value[0];
    REQUIRE(loss_cond != loss_null);

    const int trials = 10000;
    RngState drop_rng(66);
    int dropped = 0;
    for (int i = 0; i < trials; ++i) {
        const double L =
            sequence_loss<double>(nullptr, tp, mcfg, batch, 0.1, drop_rng)
                .value[0];
        if (L == loss_null) {
            ++dropped;
        } else {
            REQUIRE(L == loss_cond);
        }
    }
    const double rate = double(dropped) / double(trials);
    CHECK(rate > 0.09);
    CHECK(rate < 0.11);
}

TEST_CASE("training is deterministic under a fixed seed") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.total_steps = 5;
    tcfg.learning_rate = 1e-3;
    tcfg.seed = 77;
    auto ds = toy_dataset<float>(78);

    auto a = init_train_state<float>(mcfg, tcfg);
    auto b = init_train_state<float>(mcfg, tcfg);
    CHECK(max_abs_diff_params(a.params, b.params) == 0.0);

    auto ra = train(a, ds, mcfg, tcfg);
    auto rb = train(b, ds, mcfg, tcfg);
    REQUIRE(ra.size() == 5);
    REQUIRE(rb.size() == 5);
    for (size_t i = 0; i < ra.size(); ++i) {
        CHECK(ra[i].loss == rb[i].loss);
        CHECK(ra[i].grad_norm == rb[i].grad_norm);
        CHECK(ra[i].step == int64_t(i) + 1);
    }
    CHECK(max_abs_diff_params(a.params, b.params) == 0.0);
    CHECK(max_abs_diff_params(a.ema, b.ema) == 0.0);
}

TEST_CASE("a zero-initialized head picks up weight after one step") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.seed = 91;
    auto ds = toy_dataset<float>(92);

    auto st = init_train_state<float>(mcfg, tcfg);
    double before = 0.0;
    for (int64_t i = 0; i < st.params.head_w.size(); ++i)
        before += std::abs(double(st.params.head_w[i]));
    REQUIRE(before == 0.0);

    auto m = train_step(st, ds, mcfg, tcfg);
    CHECK(std::isfinite(m.loss));
    CHECK(std::isfinite(m.grad_norm));
    CHECK(m.grad_norm > 0.0);
    CHECK(m.wall_ms >= 0.0);

    double after = 0.0;
    for (int64_t i = 0; i < st.params.head_w.size(); ++i)
        after += std::abs(double(st.params.head_w[i]));
    CHECK(after > 0.0);

    // The EMA trails the parameters but must have moved off the zero head.
    double ema_after = 0.0;
    for (int64_t i = 0; i < st.ema.head_w.size(); ++i)
        ema_after += std::abs(double(st.ema.head_w[i]));
    CHECK(ema_after > 0.0);
    CHECK(ema_after < after);

    for_each_param(st.params, [&](const auto&, const Tensor<float>& t) {
        for (int64_t i = 0; i < t.size(); ++i)
            CHECK(std::isfinite(double(t[i])));
    });
}

TEST_CASE("an inactive gradient clip changes nothing") {
    auto mcfg = toy_model();
    TrainConfig base;
    base.batch_size = 2;
    base.total_steps = 3;
    base.learning_rate = 1e-3;
    base.seed = 101;
    auto ds = toy_dataset<float>(102);

    TrainConfig huge = base;
    huge.grad_clip = 1e18; // never binds

    auto a = init_train_state<float>(mcfg, base);
    auto b = init_train_state<float>(mcfg, huge);
    auto ra = train(a, ds, mcfg, base);
    auto rb = train(b, ds, mcfg, huge);
    for (size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].loss == rb[i].loss);
    CHECK(max_abs_diff_params(a.params, b.params) == 0.0);

    TrainConfig tight = base;
    tight.grad_clip = 1e-3; // always binds on this toy problem
    auto c = init_train_state<float>(mcfg, tight);
    auto rc = train(c, ds, mcfg, tight);
    CHECK(rc[0].grad_norm == ra[0].grad_norm); // reported norm is pre-clip
    CHECK(max_abs_diff_params(a.params, c.params) > 0.0);
}

TEST_CASE("two hundred steps improve the toy loss") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.batch_size = 4;
    tcfg.total_steps = 200;
    tcfg.learning_rate = 3e-3;
    tcfg.seed = 111;
    auto ds = toy_dataset<float>(112);

    auto st = init_train_state<float>(mcfg, tcfg);
    auto rows = train(st, ds, mcfg, tcfg);
    REQUIRE(rows.size() == 200);

    auto mean_range = [&](size_t lo, size_t hi) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += rows[i].loss;
        return s / double(hi - lo);
    };
    const double head = mean_range(0, 50);
    const double tail = mean_range(150, 200);
    INFO("first-50 mean " << head << ", last-50 mean " << tail);
    CHECK(tail < head);
    CHECK(tail < 0.9 * head);
}

TEST_CASE("checkpoints round-trip byte for byte") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.total_steps = 3;
    tcfg.seed = 121;
    auto ds = toy_dataset<float>(122);

    auto st = init_train_state<float>(mcfg, tcfg);
    train(st, ds, mcfg, tcfg);

    const std::string p1 = temp_path("arfckpt_rt_a.bin");
    const std::string p2 = temp_path("arfckpt_rt_b.bin");
    save_checkpoint(p1, st, mcfg, tcfg);
    auto loaded = load_checkpoint<float>(p1);
    save_checkpoint(p2, loaded.state, loaded.model, loaded.train);

    CHECK(read_file(p1) == read_file(p2));
    CHECK(loaded.state.step == st.step);
    CHECK(loaded.state.opt.step == st.opt.step);
    CHECK(loaded.state.rng.seed == st.rng.seed);
    CHECK(loaded.state.rng.counter == st.rng.counter);
    CHECK(loaded.model.hidden_size == mcfg.hidden_size);
    CHECK(loaded.train.seed == tcfg.seed);
    CHECK(max_abs_diff_params(loaded.state.params, st.params) == 0.0);
    CHECK(max_abs_diff_params(loaded.state.ema, st.ema) == 0.0);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.batch_size = 2;
    tcfg.total_steps = 6;
    tcfg.learning_rate = 1e-3;
    tcfg.seed = 131;
    auto ds = toy_dataset<float>(132);

    // Uninterrupted: six straight steps.
    auto full = init_train_state<float>(mcfg, tcfg);
    auto full_rows = train(full, ds, mcfg, tcfg);

    // Interrupted: three steps, checkpoint, reload, three more.
    TrainConfig half = tcfg;
    half.total_steps = 3;
    auto st = init_train_state<float>(mcfg, half);
    train(st, ds, mcfg, half);

    const std::string p = temp_path("arfckpt_resume.bin");
    save_checkpoint(p, st, mcfg, tcfg);
    auto loaded = load_checkpoint<float>(p);
    std::remove(p.c_str());

    auto tail_rows = train(loaded.state, ds, loaded.model, loaded.train);
    REQUIRE(tail_rows.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(tail_rows[i].step == full_rows[i + 3].step);
        CHECK(tail_rows[i].loss == full_rows[i + 3].loss);
        CHECK(tail_rows[i].grad_norm == full_rows[i + 3].grad_norm);
    }
    CHECK(max_abs_diff_params(loaded.state.params, full.params) == 0.0);
    CHECK(max_abs_diff_params(loaded.state.ema, full.ema) == 0.0);
}

TEST_CASE("malformed checkpoints are format errors") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.seed = 141;
    auto st = init_train_state<float>(mcfg, tcfg);

    const std::string good_path = temp_path("arfckpt_good.bin");
    save_checkpoint(good_path, st, mcfg, tcfg);
    const auto good = read_file(good_path);
    std::remove(good_path.c_str());

    const std::string bad_path = temp_path("arfckpt_bad.bin");
    auto expect_format = [&](std::vector<unsigned char> bytes) {
        write_file(bad_path, bytes);
        try {
            load_checkpoint<float>(bad_path);
            FAIL("malformed checkpoint accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::format);
        }
    };

    SUBCASE("wrong magic") {
        auto bytes = good;
        bytes[0] = 'X';
        expect_format(bytes);
    }
    SUBCASE("unsupported version") {
        auto bytes = good;
        bytes[8] = 99;
        expect_format(bytes);
    }
    SUBCASE("truncated mid-array") {
        auto bytes = good;
        bytes.resize(bytes.size() - bytes.size() / 3);
        expect_format(bytes);
    }
    SUBCASE("truncated inside the header") {
        auto bytes = good;
        bytes.resize(10);
        expect_format(bytes);
    }
    SUBCASE("corrupted metadata JSON") {
        auto bytes = good;
        // The JSON text starts right after magic(8) + version(4) + len(8).
        bytes[21] = '#';
        expect_format(bytes);
    }
    SUBCASE("renamed array") {
        auto bytes = good;
        const std::string needle = "param.patch_w";
        auto it = std::search(bytes.begin(), bytes.end(), needle.begin(),
                              needle.end());
        REQUIRE(it != bytes.end());
        *it = 'q';
        expect_format(bytes);
    }
    SUBCASE("wrong dtype for the build") {
        write_file(bad_path, good);
        try {
            load_checkpoint<double>(bad_path);
            FAIL("f32 checkpoint accepted by f64 loader");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::format);
        }
    }
    std::remove(bad_path.c_str());
}

TEST_CASE("double-precision checkpoints resume bit-exactly too") {
    auto mcfg = toy_model();
    TrainConfig tcfg;
    tcfg.batch_size = 1;
    tcfg.total_steps = 2;
    tcfg.learning_rate = 1e-3;
    tcfg.seed = 151;
    auto ds = toy_dataset<double>(152);

    auto full = init_train_state<double>(mcfg, tcfg);
    auto full_rows = train(full, ds, mcfg, tcfg);

    TrainConfig half = tcfg;
    half.total_steps = 1;
    auto st = init_train_state<double>(mcfg, half);
    train(st, ds, mcfg, half);

    const std::string p = temp_path("arfckpt_f64.bin");
    save_checkpoint(p, st, mcfg, tcfg);
    auto loaded = load_checkpoint<double>(p);
    std::remove(p.c_str());

    auto tail = train(loaded.state, ds, loaded.model, loaded.train);
    REQUIRE(tail.size() == 1);
    CHECK(tail[0].loss == full_rows[1].loss);
    CHECK(max_abs_diff_params(loaded.state.params, full.params) == 0.0);
}

TEST_CASE("metrics files carry the expected header and rows") {
    std::vector<StepMetrics> rows;
    for (int i = 1; i <= 3; ++i) {
        StepMetrics m;
        m.step = i;
        m.loss = 1.0 / double(i);
        m.grad_norm = 0.5 * double(i);
        m.wall_ms = 12.25;
        rows.push_back(m);
    }
    const std::string p = temp_path("arfmetrics_test.csv");
    write_metrics_csv(p, rows);

    std::ifstream in(p);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,loss,grad_norm,wall_ms");
    int count = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++count;
        if (count == 2) {
            CHECK(line.substr(0, 2) == "2,");
            CHECK(line.find("0.5,") != std::string::npos);
        }
    }
    CHECK(count == 3);
    std::remove(p.c_str());
}

TEST_CASE("train config validation rejects nonsense") {
    TrainConfig cfg;
    cfg.validate();

    auto expect_config = [](TrainConfig c) {
        try {
            c.validate();
            FAIL("invalid config accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::config);
        }
    };
    TrainConfig c = cfg;
    c.learning_rate = -1.0;
    expect_config(c);
    c = cfg;
    c.adam_beta1 = 1.0;
    expect_config(c);
    c = cfg;
    c.adam_eps = 0.0;
    expect_config(c);
    c = cfg;
    c.batch_size = 0;
    expect_config(c);
    c = cfg;
    c.ema_decay = 1.5;
    expect_config(c);
    c = cfg;
    c.label_drop_prob = 1.0;
    expect_config(c);
    c = cfg;
    c.grad_clip = -0.1;
    expect_config(c);
}
