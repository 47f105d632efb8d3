#include "arflow/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "arflow/io.hpp"
#include "arflow/rng.hpp"

namespace arflow {

const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::hybrid: return "hybrid";
        case Mechanism::softmax_full: return "softmax_full";
        case Mechanism::linear_causal: return "linear_causal";
    }
    fail(ErrorKind::contract, "unknown mechanism");
}

namespace {

// q/k/v/o projections shared by every mechanism: four (T,h)x(h,h) matmuls.
int64_t flops_projections(int64_t tokens, int64_t hidden) {
    return 2 * 4 * tokens * hidden * hidden;
}

} // namespace

int64_t flops_hybrid(int64_t tokens, int64_t chunk, int64_t head_dim,
                     int64_t heads) {
    const int64_t hidden = heads * head_dim;
    const int64_t n = tokens / chunk;
    // Per head and chunk: intra-chunk scores and their value product
    // (2 C^2 d MACs), the inter-chunk readout Q S and the state fold K^T V
    // (2 C d^2 MACs); plus the gate projection over all tokens.
    const int64_t per_head =
        n * (2 * chunk * chunk * head_dim +
             2 * chunk * head_dim * head_dim);
    return flops_projections(tokens, hidden) + 2 * tokens * hidden * heads +
           2 * heads * per_head;
}

int64_t flops_softmax_full(int64_t tokens, int64_t head_dim, int64_t heads) {
    const int64_t hidden = heads * head_dim;
    // Per head: T^2 d for the scores, T^2 d for the value product.
    return flops_projections(tokens, hidden) +
           2 * heads * 2 * tokens * tokens * head_dim;
}

int64_t flops_linear_causal(int64_t tokens, int64_t head_dim, int64_t heads) {
    const int64_t hidden = heads * head_dim;
    // Masked parallel form: scores, one mask multiply per entry, values.
    return flops_projections(tokens, hidden) +
           2 * heads * (2 * tokens * tokens * head_dim + tokens * tokens);
}

int64_t flops_for(Mechanism m, int64_t tokens, int64_t chunk,
                  int64_t head_dim, int64_t heads) {
    switch (m) {
        case Mechanism::hybrid:
            return flops_hybrid(tokens, chunk, head_dim, heads);
        case Mechanism::softmax_full:
            return flops_softmax_full(tokens, head_dim, heads);
        case Mechanism::linear_causal:
            return flops_linear_causal(tokens, head_dim, heads);
    }
    fail(ErrorKind::contract, "unknown mechanism");
}

int64_t peak_live_elements(Mechanism m, int64_t tokens, int64_t chunk,
                           int64_t head_dim, int64_t heads) {
    const int64_t hidden = heads * head_dim;
    const int64_t proj = 5 * tokens * hidden; // x plus q,k,v and the output
    switch (m) {
        case Mechanism::hybrid:
            // Gates, per-head output accumulation, two d x d states, and one
            // C x C score block plus its probabilities at a time.
            return proj + tokens * heads + tokens * hidden +
                   2 * heads * head_dim * head_dim + 2 * chunk * chunk;
        case Mechanism::softmax_full:
            // The scores and their row-softmax coexist.
            return proj + 2 * tokens * tokens;
        case Mechanism::linear_causal:
            // Scores, mask, and masked scores coexist.
            return proj + 3 * tokens * tokens;
    }
    fail(ErrorKind::contract, "unknown mechanism");
}

namespace {

template <typename F>
double median_run_ns(F&& run, int64_t repeats) {
    run(); // warmup, excluded
    std::vector<double> ns;
    ns.reserve(static_cast<size_t>(repeats));
    for (int64_t i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        run();
        const auto t1 = std::chrono::steady_clock::now();
        ns.push_back(
            std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    std::sort(ns.begin(), ns.end());
    return ns[ns.size() / 2];
}

} // namespace

std::vector<BenchPoint> sweep(Mechanism m, const std::vector<int64_t>& t_list,
                              int64_t chunk, int64_t head_dim, int64_t heads,
                              int64_t repeats) {
    ARF_CHECK(!t_list.empty(), ErrorKind::config, "sweep: empty T list");
    ARF_CHECK(repeats >= 5, ErrorKind::config,
              "sweep: need at least 5 repeats for a stable median");
    for (size_t i = 0; i < t_list.size(); ++i) {
        ARF_CHECK(t_list[i] % chunk == 0, ErrorKind::config,
                  "sweep: T " << t_list[i] << " is not a multiple of C "
                              << chunk);
        ARF_CHECK(i == 0 || t_list[i] > t_list[i - 1], ErrorKind::config,
                  "sweep: T list must be ascending");
    }

    HybridAttnConfig cfg;
    cfg.num_heads = heads;
    cfg.head_dim = head_dim;
    cfg.chunk_size = chunk;
    cfg.validate();
    const int64_t hidden = heads * head_dim;

    RngState rng(0x5EED);
    AttentionParams<float> p;
    const float scale = 0.5f / std::sqrt(static_cast<float>(hidden));
    auto w = [&](Shape shape, float s) {
        Tensor<float> t = randn<float>(std::move(shape), rng);
        kern::active<float>().scale(t.data(), s, t.data(), t.size());
        return constant(std::move(t));
    };
    p.w_q = w({hidden, hidden}, scale);
    p.w_k = w({hidden, hidden}, scale);
    p.w_v = w({hidden, hidden}, scale);
    p.w_o = w({hidden, hidden}, scale);
    p.w_gamma = w({hidden, heads}, 1.0f);

    std::vector<BenchPoint> out;
    for (int64_t t : t_list) {
        Traced<float> tokens = constant(randn<float>({t, hidden}, rng));
        auto run = [&] {
            switch (m) {
                case Mechanism::hybrid:
                    hybrid_forward_chunkwise<float>(nullptr, tokens, cfg, p);
                    return;
                case Mechanism::softmax_full:
                    softmax_attention_full<float>(nullptr, tokens, true, cfg,
                                                  p);
                    return;
                case Mechanism::linear_causal:
                    linear_attention_causal<float>(nullptr, tokens, cfg, p);
                    return;
            }
        };
        BenchPoint pt;
        pt.mechanism = m;
        pt.tokens = t;
        pt.chunk = chunk;
        pt.head_dim = head_dim;
        pt.heads = heads;
        pt.median_ns = median_run_ns(run, repeats);
        pt.flops = flops_for(m, t, chunk, head_dim, heads);
        out.push_back(pt);
    }
    return out;
}

PowerFit fit_power_law(const std::vector<double>& x,
                       const std::vector<double>& y) {
    ARF_CHECK(x.size() == y.size(), ErrorKind::dimension,
              "fit_power_law: " << x.size() << " x values, " << y.size()
                                << " y values");
    ARF_CHECK(x.size() >= 2, ErrorKind::contract,
              "fit_power_law: need at least two points");
    const size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (size_t i = 0; i < n; ++i) {
        ARF_CHECK(x[i] > 0.0 && y[i] > 0.0, ErrorKind::numeric,
                  "fit_power_law: log of non-positive value");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    ARF_CHECK(sxx > 0.0, ErrorKind::contract,
              "fit_power_law: all x values identical");
    PowerFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (syy == 0.0) {
        f.r2 = 1.0; // constant data: the fitted constant line is exact
    } else {
        const double ss_res = syy - f.slope * sxy;
        f.r2 = 1.0 - ss_res / syy;
    }
    return f;
}

PowerFit fit_scaling_exponent(const std::vector<BenchPoint>& points) {
    std::vector<double> x, y;
    for (const auto& p : points) {
        x.push_back(static_cast<double>(p.tokens));
        y.push_back(p.median_ns);
    }
    return fit_power_law(x, y);
}

void write_bench_csv(const std::string& path,
                     const std::vector<BenchPoint>& points) {
    std::ostringstream os;
    os << "mechanism,T,C,d,heads,median_ns,flops\n";
    os << std::setprecision(10);
    for (const auto& p : points)
        os << mechanism_name(p.mechanism) << ',' << p.tokens << ',' << p.chunk
           << ',' << p.head_dim << ',' << p.heads << ',' << p.median_ns << ','
           << p.flops << '\n';
    const std::string s = os.str();
    io::atomic_save(path, std::vector<unsigned char>(s.begin(), s.end()));
}

} // namespace arflow
