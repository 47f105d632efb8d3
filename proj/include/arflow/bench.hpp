#pragma once

// Empirical complexity checks for the attention mechanisms: closed-form
// FLOP/peak-memory counters next to wall-clock measurements, plus the
// log-log least-squares fit that turns timings into a scaling exponent.

#include <cstdint>
#include <string>
#include <vector>

#include "arflow/attention.hpp"

namespace arflow {

enum class Mechanism {
    hybrid,        // chunkwise gated linear + intra-chunk softmax
    softmax_full,  // causal softmax over the whole sequence
    linear_causal, // token-causal linear attention, masked parallel form
};

const char* mechanism_name(Mechanism m);

struct BenchPoint {
    Mechanism mechanism = Mechanism::hybrid;
    int64_t tokens = 0;   // T
    int64_t chunk = 0;    // C
    int64_t head_dim = 0; // d
    int64_t heads = 0;
    double median_ns = 0.0;
    int64_t flops = 0;
};

// Closed-form FLOP counts (2 FLOPs per multiply-accumulate) for a forward
// pass including the q/k/v/o projections, hidden = heads * d. The hybrid
// count is the steady-state form: every chunk pays the inter-chunk term, so
// the total is exactly linear in T for fixed C and d.
int64_t flops_hybrid(int64_t tokens, int64_t chunk, int64_t head_dim,
                     int64_t heads);
int64_t flops_softmax_full(int64_t tokens, int64_t head_dim, int64_t heads);
int64_t flops_linear_causal(int64_t tokens, int64_t head_dim, int64_t heads);
int64_t flops_for(Mechanism m, int64_t tokens, int64_t chunk,
                  int64_t head_dim, int64_t heads);

// Peak simultaneously-live buffer elements of each algorithm, counted from
// its data flow rather than probed from the OS: softmax holds two T x T
// score matrices, the linear forms hold only projections plus d x d states
// and one C x C block.
int64_t peak_live_elements(Mechanism m, int64_t tokens, int64_t chunk,
                           int64_t head_dim, int64_t heads);

// Forward-only timings on random inputs (one warmup run discarded, median
// of `repeats`). T values must be ascending multiples of the chunk size.
std::vector<BenchPoint> sweep(Mechanism m, const std::vector<int64_t>& t_list,
                              int64_t chunk, int64_t head_dim, int64_t heads,
                              int64_t repeats = 5);

struct PowerFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Ordinary least squares on (log x, log y); constant y gives slope 0 and
// r2 = 1 (the constant line is an exact fit).
PowerFit fit_power_law(const std::vector<double>& x,
                       const std::vector<double>& y);
PowerFit fit_scaling_exponent(const std::vector<BenchPoint>& points);

// CSV with header mechanism,T,C,d,heads,median_ns,flops. Atomic write.
void write_bench_csv(const std::string& path,
                     const std::vector<BenchPoint>& points);

} // namespace arflow
