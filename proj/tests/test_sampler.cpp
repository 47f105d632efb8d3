#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "arflow/sampler.hpp"

using namespace arflow;

namespace {

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (int64_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) -
                                         static_cast<double>(b[i])));
    return worst;
}

template <typename T>
void jitter(Tensor<T>& t, RngState& rng, T s) {
    Tensor<T> noise = randn<T>(t.shape(), rng);
    kern::active<T>().axpy(s, noise.data(), t.data(), t.size());
}

// Depth-2 model with the zero-initialized pieces nudged so conditioning,
// attention, and caches all influence the output.
ModelConfig sampler_model() {
    ModelConfig cfg;
    cfg.latent_shape = {2, 4, 4};
    cfg.patch_size = 2;
    cfg.hidden_size = 16;
    cfg.depth = 2;
    cfg.num_heads = 2;
    cfg.num_classes = 3;
    cfg.mlp_ratio = 2;
    cfg.seq_len_train = 2;
    return cfg;
}

template <typename T>
ModelParams<T> live_params(const ModelConfig& cfg, RngState& rng) {
    ModelParams<T> p = init_params<T>(cfg, rng);
    jitter(p.head_w, rng, T(0.05));
    jitter(p.head_b, rng, T(0.05));
    jitter(p.final_mod_w, rng, T(0.05));
    jitter(p.final_mod_b, rng, T(0.05));
    for (auto& blk : p.blocks) {
        jitter(blk.mod_w, rng, T(0.05));
        jitter(blk.mod_b, rng, T(0.05));
    }
    return p;
}

// Velocity field whose flow lines are straight: the interpolant between a
// fixed target and whatever noise the trajectory started from. Euler steps
// stay on the line, so the integrator should be exact up to rounding.
template <typename T>
std::function<Tensor<T>(const Tensor<T>&, double)> point_target_field(
    const Tensor<T>& z_star) {
    return [z_star](const Tensor<T>& z, double t) {
        Tensor<T> v(z.shape());
        const auto& k = kern::active<T>();
        k.sub(z.data(), z_star.data(), v.data(), v.size());
        k.scale(v.data(), static_cast<T>(1.0 / t), v.data(), v.size());
        return v;
    };
}

} // namespace

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    cfg.validate();

    auto expect_config = [](SamplerConfig c) {
        try {
            c.validate();
            FAIL("invalid sampler config accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::config);
        }
    };
    SamplerConfig c = cfg;
    c.steps = 0;
    expect_config(c);
    c = cfg;
    c.cfg_scale = 0.5;
    expect_config(c);
    c = cfg;
    c.t_end = -0.1;
    expect_config(c);
    c = cfg;
    c.t_start = 0.004;
    c.t_end = 0.004;
    expect_config(c);
    c = cfg;
    c.t_start = 1.5;
    expect_config(c);
    c = cfg;
    c.sde_diffusion_scale = -1.0;
    expect_config(c);
}

TEST_CASE("guidance combination algebra") {
    RngState rng(7);
    auto a = randn<double>({3, 5}, rng);
    auto b = randn<double>({3, 5}, rng);

    SUBCASE("s = 1 returns the conditional velocity bit for bit") {
        auto out = cfg_combine(a, b, 1.0);
        CHECK(max_abs_diff(out, a) == 0.0);
    }
    SUBCASE("s = 0 returns the unconditional velocity bit for bit") {
        auto out = cfg_combine(a, b, 0.0);
        CHECK(max_abs_diff(out, b) == 0.0);
    }
    SUBCASE("general strength matches the formula elementwise") {
        auto out = cfg_combine(a, b, 3.0);
        for (int64_t i = 0; i < out.size(); ++i)
            CHECK(out[i] ==
                  doctest::Approx(b[i] + 3.0 * (a[i] - b[i])).epsilon(1e-14));
    }
    SUBCASE("linearity: combine(a,b,2) - combine(a,b,1) = a - b") {
        auto two = cfg_combine(a, b, 2.0);
        auto one = cfg_combine(a, b, 1.0);
        for (int64_t i = 0; i < a.size(); ++i)
            CHECK(two[i] - one[i] ==
                  doctest::Approx(a[i] - b[i]).epsilon(1e-12));
    }
    SUBCASE("shape mismatch is rejected") {
        auto c = randn<double>({5, 3}, rng);
        CHECK_THROWS_AS(cfg_combine(a, c, 2.0), Error);
    }
}

TEST_CASE("euler on the point-target field lands on the target") {
    RngState rng(11);
    auto z_star = randn<double>({2, 3, 3}, rng);
    auto field = point_target_field(z_star);

    SUBCASE("integrating all the way to zero is exact for any step count") {
        for (int64_t k : {int64_t(1), int64_t(8), int64_t(32)}) {
            SamplerConfig cfg;
            cfg.steps = k;
            cfg.t_end = 0.0;
            RngState zrng(100 + static_cast<uint64_t>(k));
            auto z0 = randn<double>({2, 3, 3}, zrng);
            RngState dummy(0);
            auto z = integrate_field<double>(field, cfg, z0, dummy);
            INFO("steps = " << k);
            CHECK(max_abs_diff(z, z_star) < 1e-10);
        }
    }
    SUBCASE("stopping at t_end leaves exactly the interpolant gap") {
        SamplerConfig cfg;
        cfg.steps = 16; // default t_end = 0.004
        RngState zrng(200);
        auto z0 = randn<double>({2, 3, 3}, zrng);
        RngState dummy(0);
        auto z = integrate_field<double>(field, cfg, z0, dummy);
        // Each Euler step is exact on this field, so the endpoint is the
        // true interpolant state at t_end: z* + t_end (z0 - z*).
        for (int64_t i = 0; i < z.size(); ++i)
            CHECK(z[i] == doctest::Approx(z_star[i] +
                                          cfg.t_end * (z0[i] - z_star[i]))
                              .epsilon(1e-10));
    }
}

TEST_CASE("sde with zero diffusion is the ode bit for bit") {
    RngState rng(21);
    auto z_star = randn<double>({2, 2, 2}, rng);
    auto z0 = randn<double>({2, 2, 2}, rng);
    auto field = point_target_field(z_star);

    SamplerConfig ode;
    ode.steps = 12;
    SamplerConfig sde = ode;
    sde.mode = SampleMode::sde_euler_maruyama;
    sde.sde_diffusion_scale = 0.0;

    RngState r1(5), r2(5);
    auto za = integrate_field<double>(field, ode, z0, r1);
    auto zb = integrate_field<double>(field, sde, z0, r2);
    CHECK(max_abs_diff(za, zb) == 0.0);
    // Neither run touched the random stream.
    CHECK(r1.counter == 0);
    CHECK(r2.counter == 0);
}

TEST_CASE("sde updates inject noise and pull back toward the target") {
    RngState rng(31);
    auto z_star = randn<double>({2, 2, 2}, rng);
    auto field = point_target_field(z_star);

    SamplerConfig sde;
    sde.mode = SampleMode::sde_euler_maruyama;
    sde.steps = 64;

    RngState za_rng(41), zb_rng(42);
    auto z0 = randn<double>({2, 2, 2}, rng);
    auto za = integrate_field<double>(field, sde, z0, za_rng);
    auto zb = integrate_field<double>(field, sde, z0, zb_rng);

    // Different noise streams give different paths...
    CHECK(max_abs_diff(za, zb) > 0.0);
    // ...but the score drift keeps both near the target: the point-target
    // marginal at t has standard deviation t around z*, and t_end is tiny.
    CHECK(max_abs_diff(za, z_star) < 0.5);
    CHECK(max_abs_diff(zb, z_star) < 0.5);
    // Same stream, same path.
    RngState zc_rng(41);
    auto zc = integrate_field<double>(field, sde, z0, zc_rng);
    CHECK(max_abs_diff(za, zc) == 0.0);

    SUBCASE("a single sde update differs from the ode update") {
        SamplerConfig ode;
        RngState r(1);
        auto vu = field(z0, 1.0);
        auto step_ode = flow_update(z0, vu, 1.0, -0.1, ode, r);
        auto step_sde = flow_update(z0, vu, 1.0, -0.1, sde, r);
        CHECK(max_abs_diff(step_ode, step_sde) > 0.0);
    }
}

TEST_CASE("generation is deterministic and caches grow by one per step") {
    auto mcfg = sampler_model();
    RngState prng(51);
    auto params = live_params<double>(mcfg, prng);

    SamplerConfig cfg;
    cfg.steps = 5;

    RngState r1(61), r2(61);
    auto z1 = generate(params, mcfg, 1, cfg, r1);
    auto z2 = generate(params, mcfg, 1, cfg, r2);
    CHECK(max_abs_diff(z1, z2) == 0.0);

    RngState r3(61);
    GenState<double> st = init_generation<double>(mcfg, cfg, r3);
    for (int64_t k = 0; k < cfg.steps; ++k) {
        step(st, params, mcfg, 1, cfg, r3);
        REQUIRE(st.cond_states.size() == size_t(mcfg.depth));
        for (const auto& cs : st.cond_states) {
            CHECK(cs.chunk_index == k + 1);
            REQUIRE(cs.s.size() == size_t(mcfg.num_heads));
            const int64_t d = mcfg.hidden_size / mcfg.num_heads;
            for (const auto& s : cs.s) {
                CHECK(s.value.dim(0) == d);
                CHECK(s.value.dim(1) == d);
            }
        }
        // Single-pass mode: the unconditional cache is never populated.
        CHECK(st.uncond_states.empty());
        CHECK(st.step == k + 1);
    }
    CHECK(st.t == cfg.t_end);
    CHECK(max_abs_diff(st.z, z1) == 0.0);

    SUBCASE("stepping past the terminal time is a contract error") {
        try {
            step(st, params, mcfg, 1, cfg, r3);
            FAIL("step past t_end accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::contract);
        }
    }
}

TEST_CASE("guidance strength one equals conditional-only generation") {
    auto mcfg = sampler_model();
    RngState prng(71);
    auto params = live_params<double>(mcfg, prng);

    SamplerConfig single;
    single.steps = 4;
    SamplerConfig dual = single;
    dual.force_dual_pass = true;

    RngState r1(81), r2(81);
    auto z_single = generate(params, mcfg, 2, single, r1);
    auto z_dual = generate(params, mcfg, 2, dual, r2);
    CHECK(max_abs_diff(z_single, z_dual) == 0.0);

    SUBCASE("the dual run advanced its unconditional cache in lockstep") {
        RngState r3(81);
        GenState<double> st = init_generation<double>(mcfg, dual, r3);
        step(st, params, mcfg, 2, dual, r3);
        REQUIRE(st.uncond_states.size() == size_t(mcfg.depth));
        CHECK(st.uncond_states[0].chunk_index == 1);
        CHECK(st.cond_states[0].chunk_index == 1);
        // The caches hold different histories: the unconditional pass saw
        // null-class modulation, so its folded K,V differ.
        CHECK(max_abs_diff(st.cond_states[0].s[0].value,
                           st.uncond_states[0].s[0].value) > 0.0);
    }
}

TEST_CASE("stronger guidance changes the output") {
    auto mcfg = sampler_model();
    RngState prng(91);
    auto params = live_params<double>(mcfg, prng);

    SamplerConfig s1;
    s1.steps = 4;
    SamplerConfig s3 = s1;
    s3.cfg_scale = 3.0;

    RngState r1(101), r2(101);
    auto a = generate(params, mcfg, 0, s1, r1);
    auto b = generate(params, mcfg, 0, s3, r2);
    CHECK(max_abs_diff(a, b) > 0.0);
}

TEST_CASE("cache off reproduces a memoryless step-by-step run") {
    auto mcfg = sampler_model();
    RngState prng(111);
    auto params = live_params<double>(mcfg, prng);

    SamplerConfig cfg;
    cfg.steps = 4;
    cfg.use_cache = false;

    RngState r1(121);
    auto z_nocache = generate(params, mcfg, 1, cfg, r1);

    // Hand-rolled memoryless flow: fresh zero states on every evaluation.
    RngState r2(121);
    auto z = randn<double>(mcfg.latent_shape, r2);
    auto tp = bind_params<double>(nullptr, params);
    const double dt = -(cfg.t_start - cfg.t_end) / double(cfg.steps);
    for (int64_t k = 0; k < cfg.steps; ++k) {
        const double t =
            cfg.t_start - (cfg.t_start - cfg.t_end) * (double(k) / double(cfg.steps));
        ConditioningInput cond;
        cond.times = {FlowTime(t)};
        cond.class_id = 1;
        auto out = model_forward<double>(nullptr, {z}, cond, tp, mcfg);
        RngState unused(0);
        z = flow_update(z, out.v[0].value, t, dt, cfg, unused);
    }
    CHECK(max_abs_diff(z_nocache, z) == 0.0);

    SUBCASE("carrying the cache changes the trajectory") {
        SamplerConfig cached = cfg;
        cached.use_cache = true;
        RngState r3(121);
        auto z_cached = generate(params, mcfg, 1, cached, r3);
        CHECK(max_abs_diff(z_cached, z_nocache) > 0.0);
    }
    SUBCASE("cache-off states stay empty") {
        RngState r4(121);
        GenState<double> st = init_generation<double>(mcfg, cfg, r4);
        step(st, params, mcfg, 1, cfg, r4);
        step(st, params, mcfg, 1, cfg, r4);
        CHECK(st.cond_states.empty());
        CHECK(st.uncond_states.empty());
    }
}

TEST_CASE("class identity steers generation") {
    auto mcfg = sampler_model();
    RngState prng(131);
    auto params = live_params<double>(mcfg, prng);

    SamplerConfig cfg;
    cfg.steps = 3;
    RngState r1(141), r2(141);
    auto a = generate(params, mcfg, 0, cfg, r1);
    auto b = generate(params, mcfg, 2, cfg, r2);
    CHECK(max_abs_diff(a, b) > 0.0);

    SUBCASE("an out-of-range class is rejected") {
        RngState r3(141);
        CHECK_THROWS_AS(generate(params, mcfg, 99, cfg, r3), Error);
    }
}

TEST_CASE("float generation follows the same contracts") {
    auto mcfg = sampler_model();
    RngState prng(151);
    auto params = live_params<float>(mcfg, prng);

    SamplerConfig cfg;
    cfg.steps = 6;
    cfg.cfg_scale = 2.0;
    cfg.mode = SampleMode::sde_euler_maruyama;

    RngState r1(161), r2(161);
    auto a = generate(params, mcfg, 1, cfg, r1);
    auto b = generate(params, mcfg, 1, cfg, r2);
    CHECK(max_abs_diff(a, b) == 0.0);
    for (int64_t i = 0; i < a.size(); ++i)
        CHECK(std::isfinite(double(a[i])));
}
