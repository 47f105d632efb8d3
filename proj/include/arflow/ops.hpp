#pragma once

#include <cstdint>
#include <vector>

#include "arflow/rng.hpp"
#include "arflow/tape.hpp"
#include "arflow/tensor.hpp"

// Differentiable tensor operations. Every op takes the tape first; passing
// nullptr (or only untraced inputs) runs the same forward math without
// recording, which is the inference path. Ops never mutate their inputs.
namespace arflow {

// ---- elementwise arithmetic -------------------------------------------

template <typename T>
Traced<T> add(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b);

template <typename T>
Traced<T> sub(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b);

template <typename T>
Traced<T> mul(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b);

// out = a * c for a plain (untraced) scalar c.
template <typename T>
Traced<T> scale_by(Tape<T>* tape, const Traced<T>& a, T c);

// out = a + c elementwise.
template <typename T>
Traced<T> add_scalar(Tape<T>* tape, const Traced<T>& a, T c);

// out = a * s where s is a traced single-element tensor.
template <typename T>
Traced<T> mul_scalar(Tape<T>* tape, const Traced<T>& a, const Traced<T>& s);

// ---- broadcasts over rows ---------------------------------------------
// a is (m, n), v is (n,): v applies to every row.

template <typename T>
Traced<T> mul_rows(Tape<T>* tape, const Traced<T>& a, const Traced<T>& v);

template <typename T>
Traced<T> add_rows(Tape<T>* tape, const Traced<T>& a, const Traced<T>& v);

// Chunked row broadcast: x is (N*rows_per_chunk, n), v is (N, n); row i
// uses v row i / rows_per_chunk. Used for per-chunk conditioning applied
// to a flattened token sequence.
template <typename T>
Traced<T> mul_chunk_rows(Tape<T>* tape, const Traced<T>& x, const Traced<T>& v,
                         int64_t rows_per_chunk);

template <typename T>
Traced<T> add_chunk_rows(Tape<T>* tape, const Traced<T>& x, const Traced<T>& v,
                         int64_t rows_per_chunk);

// ---- matrix ops ---------------------------------------------------------

// C = op(a) * op(b) with op transposing when the flag is set; 2-D only.
template <typename T>
Traced<T> matmul(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b,
                 bool ta = false, bool tb = false);

template <typename T>
Traced<T> transpose(Tape<T>* tape, const Traced<T>& a);

// ---- shape and data movement -------------------------------------------

template <typename T>
Traced<T> reshape(Tape<T>* tape, const Traced<T>& a, Shape shape);

// Copies rows [r0, r1) of a 2-D tensor.
template <typename T>
Traced<T> slice_rows(Tape<T>* tape, const Traced<T>& a, int64_t r0, int64_t r1);

// Copies columns [c0, c1) of a 2-D tensor.
template <typename T>
Traced<T> slice_cols(Tape<T>* tape, const Traced<T>& a, int64_t c0, int64_t c1);

// Stacks 2-D tensors with equal column counts along rows.
template <typename T>
Traced<T> concat_rows(Tape<T>* tape, const std::vector<Traced<T>>& parts);

// Stacks 2-D tensors with equal row counts along columns.
template <typename T>
Traced<T> concat_cols(Tape<T>* tape, const std::vector<Traced<T>>& parts);

// out.flat[i] = a.flat[perm[i]]; duplicate sources accumulate in the
// gradient. Patchify/unpatchify are built on this with bijective maps.
template <typename T>
Traced<T> gather_permute(Tape<T>* tape, const Traced<T>& a,
                         std::vector<int64_t> perm, Shape out_shape);

// Single element as a {1}-shaped traced scalar.
template <typename T>
Traced<T> select_element(Tape<T>* tape, const Traced<T>& a, int64_t index);

// Row lookup: out (B, n) with out[i] = table[idx[i]]; gradient scatter-adds
// into the table rows.
template <typename T>
Traced<T> embedding_rows(Tape<T>* tape, const Traced<T>& table,
                         std::vector<int64_t> idx);

// ---- nonlinearities ------------------------------------------------------

template <typename T>
Traced<T> sigmoid(Tape<T>* tape, const Traced<T>& a);

template <typename T>
Traced<T> exp_elem(Tape<T>* tape, const Traced<T>& a);

// Elementwise natural log; non-positive entries are a contract error.
template <typename T>
Traced<T> log_elem(Tape<T>* tape, const Traced<T>& a);

template <typename T>
Traced<T> silu(Tape<T>* tape, const Traced<T>& a);

// Numerically stable log(sigmoid(x)).
template <typename T>
Traced<T> log_sigmoid(Tape<T>* tape, const Traced<T>& a);

// Row-wise softmax of (scale * a) for a 2-D tensor.
template <typename T>
Traced<T> softmax_rows(Tape<T>* tape, const Traced<T>& a, T scale);

// Causal variant for square score matrices: row i normalizes over columns
// 0..i and is exactly zero beyond. Avoids materializing an additive mask.
template <typename T>
Traced<T> softmax_rows_causal(Tape<T>* tape, const Traced<T>& a, T scale);

// Row-wise standardization (x - mean) / sqrt(var + eps), no learned affine.
template <typename T>
Traced<T> layer_norm(Tape<T>* tape, const Traced<T>& a, T eps);

// ---- reductions ----------------------------------------------------------

template <typename T>
Traced<T> sum_all(Tape<T>* tape, const Traced<T>& a);

template <typename T>
Traced<T> mean_all(Tape<T>* tape, const Traced<T>& a);

// Column means of a 2-D tensor: (m, n) -> (n,).
template <typename T>
Traced<T> mean_axis0(Tape<T>* tape, const Traced<T>& a);

// ---- untraced utilities --------------------------------------------------

template <typename T>
Tensor<T> randn(Shape shape, RngState& rng);

template <typename T>
Tensor<T> rand_uniform(Shape shape, RngState& rng);

} // namespace arflow
