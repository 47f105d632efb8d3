#include "arflow/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace arflow {

namespace {

template <typename T>
const kern::Funcs<T>& K() {
    return kern::active<T>();
}

template <typename T>
bool want(Tape<T>* tape, std::initializer_list<int> ids) {
    if (!tape) return false;
    for (int id : ids)
        if (id >= 0) return true;
    return false;
}

template <typename T>
void check_rank2(const Tensor<T>& t, const char* what) {
    ARF_CHECK(t.rank() == 2, ErrorKind::dimension,
              what << " must be 2-D, has rank " << t.rank());
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* what) {
    ARF_CHECK(same_shape(a.shape(), b.shape()), ErrorKind::dimension,
              what << ": shape mismatch");
}

} // namespace

// ---- elementwise arithmetic -------------------------------------------

template <typename T>
Traced<T> add(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b) {
    check_same_shape(a.value, b.value, "add");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().add(a.value.data(), b.value.data(), out.value.data(),
               out.value.size());
    if (want(tape, {a.id, b.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, bid = b.id](Tape<T>& tp, const Tensor<T>& g) {
                tp.accumulate(aid, g);
                tp.accumulate(bid, g);
            });
    }
    return out;
}

template <typename T>
Traced<T> sub(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b) {
    check_same_shape(a.value, b.value, "sub");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().sub(a.value.data(), b.value.data(), out.value.data(),
               out.value.size());
    if (want(tape, {a.id, b.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, bid = b.id](Tape<T>& tp, const Tensor<T>& g) {
                tp.accumulate(aid, g);
                if (bid >= 0) {
                    Tensor<T> ng(g.shape());
                    K<T>().scale(g.data(), T(-1), ng.data(), ng.size());
                    tp.accumulate(bid, ng);
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> mul(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b) {
    check_same_shape(a.value, b.value, "mul");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().mul(a.value.data(), b.value.data(), out.value.data(),
               out.value.size());
    if (want(tape, {a.id, b.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, bid = b.id, av = a.value,
             bv = b.value](Tape<T>& tp, const Tensor<T>& g) {
                if (aid >= 0) {
                    Tensor<T> da(av.shape());
                    K<T>().mul(g.data(), bv.data(), da.data(), da.size());
                    tp.accumulate(aid, da);
                }
                if (bid >= 0) {
                    Tensor<T> db(bv.shape());
                    K<T>().mul(g.data(), av.data(), db.data(), db.size());
                    tp.accumulate(bid, db);
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> scale_by(Tape<T>* tape, const Traced<T>& a, T c) {
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().scale(a.value.data(), c, out.value.data(), out.value.size());
    if (want(tape, {a.id})) {
        out.id = tape->push(out.value.shape(),
                            [aid = a.id, c](Tape<T>& tp, const Tensor<T>& g) {
                                Tensor<T> da(g.shape());
                                K<T>().scale(g.data(), c, da.data(), da.size());
                                tp.accumulate(aid, da);
                            });
    }
    return out;
}

template <typename T>
Traced<T> add_scalar(Tape<T>* tape, const Traced<T>& a, T c) {
    Traced<T> out{a.value.clone(), -1};
    T* p = out.value.data();
    for (int64_t i = 0; i < out.value.size(); ++i) p[i] += c;
    if (want(tape, {a.id})) {
        out.id = tape->push(out.value.shape(),
                            [aid = a.id](Tape<T>& tp, const Tensor<T>& g) {
                                tp.accumulate(aid, g);
                            });
    }
    return out;
}

template <typename T>
Traced<T> mul_scalar(Tape<T>* tape, const Traced<T>& a, const Traced<T>& s) {
    ARF_CHECK(s.value.size() == 1, ErrorKind::dimension,
              "mul_scalar: scalar operand has " << s.value.size()
                                                << " elements");
    const T sv = s.value[0];
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().scale(a.value.data(), sv, out.value.data(), out.value.size());
    if (want(tape, {a.id, s.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, sid = s.id, sv, av = a.value,
             sshape = s.value.shape()](Tape<T>& tp, const Tensor<T>& g) {
                if (aid >= 0) {
                    Tensor<T> da(g.shape());
                    K<T>().scale(g.data(), sv, da.data(), da.size());
                    tp.accumulate(aid, da);
                }
                if (sid >= 0) {
                    Tensor<T> ds(sshape);
                    ds[0] = K<T>().dot(g.data(), av.data(), g.size());
                    tp.accumulate(sid, ds);
                }
            });
    }
    return out;
}

// ---- broadcasts over rows ---------------------------------------------

template <typename T>
Traced<T> mul_rows(Tape<T>* tape, const Traced<T>& a, const Traced<T>& v) {
    check_rank2(a.value, "mul_rows input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(v.value.size() == n, ErrorKind::dimension,
              "mul_rows: vector of " << v.value.size() << " for " << n
                                     << " columns");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    for (int64_t i = 0; i < m; ++i)
        K<T>().mul(a.value.data() + i * n, v.value.data(),
                   out.value.data() + i * n, n);
    if (want(tape, {a.id, v.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, vid = v.id, av = a.value, vv = v.value, m,
             n](Tape<T>& tp, const Tensor<T>& g) {
                if (aid >= 0) {
                    Tensor<T> da(av.shape());
                    for (int64_t i = 0; i < m; ++i)
                        K<T>().mul(g.data() + i * n, vv.data(),
                                   da.data() + i * n, n);
                    tp.accumulate(aid, da);
                }
                if (vid >= 0) {
                    Tensor<T> dv(vv.shape());
                    for (int64_t i = 0; i < m; ++i)
                        K<T>().mul_acc(g.data() + i * n, av.data() + i * n,
                                       dv.data(), n);
                    tp.accumulate(vid, dv);
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> add_rows(Tape<T>* tape, const Traced<T>& a, const Traced<T>& v) {
    check_rank2(a.value, "add_rows input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(v.value.size() == n, ErrorKind::dimension,
              "add_rows: vector of " << v.value.size() << " for " << n
                                     << " columns");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    for (int64_t i = 0; i < m; ++i)
        K<T>().add(a.value.data() + i * n, v.value.data(),
                   out.value.data() + i * n, n);
    if (want(tape, {a.id, v.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, vid = v.id, vshape = v.value.shape(), m,
             n](Tape<T>& tp, const Tensor<T>& g) {
                tp.accumulate(aid, g);
                if (vid >= 0) {
                    Tensor<T> dv(vshape);
                    for (int64_t i = 0; i < m; ++i)
                        K<T>().axpy(T(1), g.data() + i * n, dv.data(), n);
                    tp.accumulate(vid, dv);
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> mul_chunk_rows(Tape<T>* tape, const Traced<T>& x, const Traced<T>& v,
                         int64_t rows_per_chunk) {
    check_rank2(x.value, "mul_chunk_rows input");
    check_rank2(v.value, "mul_chunk_rows factors");
    const int64_t rows = x.value.dim(0), n = x.value.dim(1);
    const int64_t chunks = v.value.dim(0);
    ARF_CHECK(rows_per_chunk > 0 && rows == chunks * rows_per_chunk,
              ErrorKind::dimension,
              "mul_chunk_rows: " << rows << " rows != " << chunks << " x "
                                 << rows_per_chunk);
    ARF_CHECK(v.value.dim(1) == n, ErrorKind::dimension,
              "mul_chunk_rows: column mismatch");
    Traced<T> out{Tensor<T>(x.value.shape()), -1};
    for (int64_t i = 0; i < rows; ++i)
        K<T>().mul(x.value.data() + i * n,
                   v.value.data() + (i / rows_per_chunk) * n,
                   out.value.data() + i * n, n);
    if (want(tape, {x.id, v.id})) {
        out.id = tape->push(
            out.value.shape(),
            [xid = x.id, vid = v.id, xv = x.value, vv = v.value, rows, n,
             rows_per_chunk](Tape<T>& tp, const Tensor<T>& g) {
                if (xid >= 0) {
                    Tensor<T> dx(xv.shape());
                    for (int64_t i = 0; i < rows; ++i)
                        K<T>().mul(g.data() + i * n,
                                   vv.data() + (i / rows_per_chunk) * n,
                                   dx.data() + i * n, n);
                    tp.accumulate(xid, dx);
                }
                if (vid >= 0) {
                    Tensor<T> dv(vv.shape());
                    for (int64_t i = 0; i < rows; ++i)
                        K<T>().mul_acc(g.data() + i * n, xv.data() + i * n,
                                       dv.data() + (i / rows_per_chunk) * n,
                                       n);
                    tp.accumulate(vid, dv);
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> add_chunk_rows(Tape<T>* tape, const Traced<T>& x, const Traced<T>& v,
                         int64_t rows_per_chunk) {
    check_rank2(x.value, "add_chunk_rows input");
    check_rank2(v.value, "add_chunk_rows offsets");
    const int64_t rows = x.value.dim(0), n = x.value.dim(1);
    const int64_t chunks = v.value.dim(0);
    ARF_CHECK(rows_per_chunk > 0 && rows == chunks * rows_per_chunk,
              ErrorKind::dimension,
              "add_chunk_rows: " << rows << " rows != " << chunks << " x "
                                 << rows_per_chunk);
    ARF_CHECK(v.value.dim(1) == n, ErrorKind::dimension,
              "add_chunk_rows: column mismatch");
    Traced<T> out{Tensor<T>(x.value.shape()), -1};
    for (int64_t i = 0; i < rows; ++i)
        K<T>().add(x.value.data() + i * n,
                   v.value.data() + (i / rows_per_chunk) * n,
                   out.value.data() + i * n, n);
    if (want(tape, {x.id, v.id})) {
        out.id = tape->push(
            out.value.shape(),
            [xid = x.id, vid = v.id, vshape = v.value.shape(), rows, n,
             rows_per_chunk](Tape<T>& tp, const Tensor<T>& g) {
                tp.accumulate(xid, g);
                if (vid >= 0) {
                    Tensor<T> dv(vshape);
                    for (int64_t i = 0; i < rows; ++i)
                        K<T>().axpy(T(1), g.data() + i * n,
                                    dv.data() + (i / rows_per_chunk) * n, n);
                    tp.accumulate(vid, dv);
                }
            });
    }
    return out;
}

// ---- matrix ops ---------------------------------------------------------

template <typename T>
Traced<T> matmul(Tape<T>* tape, const Traced<T>& a, const Traced<T>& b,
                 bool ta, bool tb) {
    check_rank2(a.value, "matmul lhs");
    check_rank2(b.value, "matmul rhs");
    const int64_t m = ta ? a.value.dim(1) : a.value.dim(0);
    const int64_t k = ta ? a.value.dim(0) : a.value.dim(1);
    const int64_t kb = tb ? b.value.dim(1) : b.value.dim(0);
    const int64_t n = tb ? b.value.dim(0) : b.value.dim(1);
    ARF_CHECK(k == kb, ErrorKind::dimension,
              "matmul: inner dims " << k << " vs " << kb);
    Traced<T> out{Tensor<T>(Shape{m, n}), -1};
    K<T>().matmul(a.value.data(), b.value.data(), out.value.data(), m, k, n,
                  ta, tb, T(0));
    if (want(tape, {a.id, b.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, bid = b.id, av = a.value, bv = b.value, m, k, n, ta,
             tb](Tape<T>& tp, const Tensor<T>& g) {
                if (aid >= 0) {
                    Tensor<T> da(av.shape());
                    if (!ta) {
                        // da (m,k) = g * op(b)^T
                        K<T>().matmul(g.data(), bv.data(), da.data(), m, n, k,
                                      false, !tb, T(0));
                    } else if (!tb) {
                        // da (k,m) = b * g^T
                        K<T>().matmul(bv.data(), g.data(), da.data(), k, n, m,
                                      false, true, T(0));
                    } else {
                        // da (k,m) = b^T * g^T
                        K<T>().matmul(bv.data(), g.data(), da.data(), k, n, m,
                                      true, true, T(0));
                    }
                    tp.accumulate(aid, da);
                }
                if (bid >= 0) {
                    Tensor<T> db(bv.shape());
                    if (!tb) {
                        // db (k,n) = op(a)^T * g
                        K<T>().matmul(av.data(), g.data(), db.data(), k, m, n,
                                      !ta, false, T(0));
                    } else if (!ta) {
                        // db (n,k) = g^T * a
                        K<T>().matmul(g.data(), av.data(), db.data(), n, m, k,
                                      true, false, T(0));
                    } else {
                        // db (n,k) = g^T * a^T
                        K<T>().matmul(g.data(), av.data(), db.data(), n, m, k,
                                      true, true, T(0));
                    }
                    tp.accumulate(bid, db);
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> transpose(Tape<T>* tape, const Traced<T>& a) {
    check_rank2(a.value, "transpose input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    Traced<T> out{Tensor<T>(Shape{n, m}), -1};
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.value.at(j, i) = a.value.at(i, j);
    if (want(tape, {a.id})) {
        out.id = tape->push(out.value.shape(),
                            [aid = a.id, m, n](Tape<T>& tp, const Tensor<T>& g) {
                                Tensor<T> da(Shape{m, n});
                                for (int64_t j = 0; j < n; ++j)
                                    for (int64_t i = 0; i < m; ++i)
                                        da.at(i, j) = g.at(j, i);
                                tp.accumulate(aid, da);
                            });
    }
    return out;
}

// ---- shape and data movement -------------------------------------------

template <typename T>
Traced<T> reshape(Tape<T>* tape, const Traced<T>& a, Shape shape) {
    Traced<T> out{a.value.reshaped(std::move(shape)), -1};
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape()](Tape<T>& tp,
                                                   const Tensor<T>& g) {
                tp.accumulate(aid, g.reshaped(ashape));
            });
    }
    return out;
}

template <typename T>
Traced<T> slice_rows(Tape<T>* tape, const Traced<T>& a, int64_t r0,
                     int64_t r1) {
    check_rank2(a.value, "slice_rows input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(0 <= r0 && r0 <= r1 && r1 <= m, ErrorKind::dimension,
              "slice_rows [" << r0 << "," << r1 << ") of " << m << " rows");
    Traced<T> out{Tensor<T>(Shape{r1 - r0, n}), -1};
    std::memcpy(out.value.data(), a.value.data() + r0 * n,
                static_cast<size_t>((r1 - r0) * n) * sizeof(T));
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape(), r0, r1,
             n](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(ashape);
                std::memcpy(da.data() + r0 * n, g.data(),
                            static_cast<size_t>((r1 - r0) * n) * sizeof(T));
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> slice_cols(Tape<T>* tape, const Traced<T>& a, int64_t c0,
                     int64_t c1) {
    check_rank2(a.value, "slice_cols input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(0 <= c0 && c0 <= c1 && c1 <= n, ErrorKind::dimension,
              "slice_cols [" << c0 << "," << c1 << ") of " << n << " cols");
    const int64_t w = c1 - c0;
    Traced<T> out{Tensor<T>(Shape{m, w}), -1};
    for (int64_t i = 0; i < m; ++i)
        std::memcpy(out.value.data() + i * w, a.value.data() + i * n + c0,
                    static_cast<size_t>(w) * sizeof(T));
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape(), m, n, c0,
             w](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(ashape);
                for (int64_t i = 0; i < m; ++i)
                    std::memcpy(da.data() + i * n + c0, g.data() + i * w,
                                static_cast<size_t>(w) * sizeof(T));
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> concat_rows(Tape<T>* tape, const std::vector<Traced<T>>& parts) {
    ARF_CHECK(!parts.empty(), ErrorKind::contract, "concat_rows of nothing");
    const int64_t n = parts[0].value.dim(1);
    int64_t rows = 0;
    bool traced = false;
    for (const auto& p : parts) {
        check_rank2(p.value, "concat_rows part");
        ARF_CHECK(p.value.dim(1) == n, ErrorKind::dimension,
                  "concat_rows: column mismatch " << p.value.dim(1) << " vs "
                                                  << n);
        rows += p.value.dim(0);
        traced = traced || p.id >= 0;
    }
    Traced<T> out{Tensor<T>(Shape{rows, n}), -1};
    int64_t r = 0;
    for (const auto& p : parts) {
        std::memcpy(out.value.data() + r * n, p.value.data(),
                    static_cast<size_t>(p.value.size()) * sizeof(T));
        r += p.value.dim(0);
    }
    if (tape && traced) {
        std::vector<int> ids;
        std::vector<int64_t> part_rows;
        for (const auto& p : parts) {
            ids.push_back(p.id);
            part_rows.push_back(p.value.dim(0));
        }
        out.id = tape->push(
            out.value.shape(),
            [ids, part_rows, n](Tape<T>& tp, const Tensor<T>& g) {
                int64_t r0 = 0;
                for (size_t p = 0; p < ids.size(); ++p) {
                    if (ids[p] >= 0) {
                        Tensor<T> dp(Shape{part_rows[p], n});
                        std::memcpy(
                            dp.data(), g.data() + r0 * n,
                            static_cast<size_t>(dp.size()) * sizeof(T));
                        tp.accumulate(ids[p], dp);
                    }
                    r0 += part_rows[p];
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> concat_cols(Tape<T>* tape, const std::vector<Traced<T>>& parts) {
    ARF_CHECK(!parts.empty(), ErrorKind::contract, "concat_cols of nothing");
    const int64_t m = parts[0].value.dim(0);
    int64_t cols = 0;
    bool traced = false;
    for (const auto& p : parts) {
        check_rank2(p.value, "concat_cols part");
        ARF_CHECK(p.value.dim(0) == m, ErrorKind::dimension,
                  "concat_cols: row mismatch " << p.value.dim(0) << " vs "
                                               << m);
        cols += p.value.dim(1);
        traced = traced || p.id >= 0;
    }
    Traced<T> out{Tensor<T>(Shape{m, cols}), -1};
    int64_t c = 0;
    for (const auto& p : parts) {
        const int64_t w = p.value.dim(1);
        for (int64_t i = 0; i < m; ++i)
            std::memcpy(out.value.data() + i * cols + c,
                        p.value.data() + i * w,
                        static_cast<size_t>(w) * sizeof(T));
        c += w;
    }
    if (tape && traced) {
        std::vector<int> ids;
        std::vector<int64_t> widths;
        for (const auto& p : parts) {
            ids.push_back(p.id);
            widths.push_back(p.value.dim(1));
        }
        out.id = tape->push(
            out.value.shape(),
            [ids, widths, m, cols](Tape<T>& tp, const Tensor<T>& g) {
                int64_t c0 = 0;
                for (size_t p = 0; p < ids.size(); ++p) {
                    if (ids[p] >= 0) {
                        Tensor<T> dp(Shape{m, widths[p]});
                        for (int64_t i = 0; i < m; ++i)
                            std::memcpy(
                                dp.data() + i * widths[p],
                                g.data() + i * cols + c0,
                                static_cast<size_t>(widths[p]) * sizeof(T));
                        tp.accumulate(ids[p], dp);
                    }
                    c0 += widths[p];
                }
            });
    }
    return out;
}

template <typename T>
Traced<T> gather_permute(Tape<T>* tape, const Traced<T>& a,
                         std::vector<int64_t> perm, Shape out_shape) {
    ARF_CHECK(static_cast<int64_t>(perm.size()) == numel(out_shape),
              ErrorKind::dimension,
              "gather_permute: " << perm.size() << " indices for "
                                 << numel(out_shape) << " outputs");
    const int64_t an = a.value.size();
    Traced<T> out{Tensor<T>(std::move(out_shape)), -1};
    for (size_t i = 0; i < perm.size(); ++i) {
        ARF_CHECK(perm[i] >= 0 && perm[i] < an, ErrorKind::dimension,
                  "gather_permute: index " << perm[i] << " out of " << an);
        out.value[static_cast<int64_t>(i)] = a.value[perm[i]];
    }
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape(),
             perm = std::move(perm)](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(ashape);
                for (size_t i = 0; i < perm.size(); ++i)
                    da[perm[i]] += g[static_cast<int64_t>(i)];
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> select_element(Tape<T>* tape, const Traced<T>& a, int64_t index) {
    ARF_CHECK(index >= 0 && index < a.value.size(), ErrorKind::dimension,
              "select_element: index " << index << " out of "
                                       << a.value.size());
    Traced<T> out{Tensor<T>::scalar(a.value[index]), -1};
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape(),
             index](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(ashape);
                da[index] = g[0];
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> embedding_rows(Tape<T>* tape, const Traced<T>& table,
                         std::vector<int64_t> idx) {
    check_rank2(table.value, "embedding table");
    const int64_t v = table.value.dim(0), h = table.value.dim(1);
    const int64_t b = static_cast<int64_t>(idx.size());
    Traced<T> out{Tensor<T>(Shape{b, h}), -1};
    for (int64_t i = 0; i < b; ++i) {
        ARF_CHECK(idx[static_cast<size_t>(i)] >= 0 &&
                      idx[static_cast<size_t>(i)] < v,
                  ErrorKind::dimension,
                  "embedding_rows: index " << idx[static_cast<size_t>(i)]
                                           << " out of " << v << " rows");
        std::memcpy(out.value.data() + i * h,
                    table.value.data() + idx[static_cast<size_t>(i)] * h,
                    static_cast<size_t>(h) * sizeof(T));
    }
    if (want(tape, {table.id})) {
        out.id = tape->push(
            out.value.shape(),
            [tid = table.id, tshape = table.value.shape(), h,
             idx = std::move(idx)](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> dt(tshape);
                for (size_t i = 0; i < idx.size(); ++i)
                    K<T>().axpy(T(1), g.data() + static_cast<int64_t>(i) * h,
                                dt.data() + idx[i] * h, h);
                tp.accumulate(tid, dt);
            });
    }
    return out;
}

// ---- nonlinearities ------------------------------------------------------

template <typename T>
Traced<T> sigmoid(Tape<T>* tape, const Traced<T>& a) {
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().vsigmoid(a.value.data(), out.value.data(), out.value.size());
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, y = out.value](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(y.shape());
                const T* yp = y.data();
                const T* gp = g.data();
                T* dp = da.data();
                for (int64_t i = 0; i < da.size(); ++i)
                    dp[i] = gp[i] * yp[i] * (T(1) - yp[i]);
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> exp_elem(Tape<T>* tape, const Traced<T>& a) {
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().vexp(a.value.data(), out.value.data(), out.value.size());
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, y = out.value](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(y.shape());
                K<T>().mul(g.data(), y.data(), da.data(), da.size());
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> log_elem(Tape<T>* tape, const Traced<T>& a) {
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    const T* xp = a.value.data();
    T* op = out.value.data();
    for (int64_t i = 0; i < out.value.size(); ++i) {
        ARF_CHECK(xp[i] > T(0), ErrorKind::contract,
                  "log of non-positive value " << xp[i] << " at " << i);
        op[i] = std::log(xp[i]);
    }
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, x = a.value](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(x.shape());
                const T* xp2 = x.data();
                const T* gp = g.data();
                T* dp = da.data();
                for (int64_t i = 0; i < da.size(); ++i)
                    dp[i] = gp[i] / xp2[i];
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> silu(Tape<T>* tape, const Traced<T>& a) {
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    K<T>().vsilu(a.value.data(), out.value.data(), out.value.size());
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, x = a.value](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(x.shape());
                Tensor<T> s(x.shape());
                K<T>().vsigmoid(x.data(), s.data(), s.size());
                const T* xp = x.data();
                const T* sp = s.data();
                const T* gp = g.data();
                T* dp = da.data();
                for (int64_t i = 0; i < da.size(); ++i)
                    dp[i] = gp[i] * sp[i] *
                            (T(1) + xp[i] * (T(1) - sp[i]));
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> log_sigmoid(Tape<T>* tape, const Traced<T>& a) {
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    const T* xp = a.value.data();
    T* op = out.value.data();
    for (int64_t i = 0; i < out.value.size(); ++i) {
        const T x = xp[i];
        // log sigmoid(x) = -softplus(-x), split by sign for stability
        op[i] = x >= T(0) ? -std::log1p(std::exp(-x))
                          : x - std::log1p(std::exp(x));
    }
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, x = a.value](Tape<T>& tp, const Tensor<T>& g) {
                // d/dx log sigmoid(x) = sigmoid(-x)
                Tensor<T> da(x.shape());
                const T* xp2 = x.data();
                const T* gp = g.data();
                T* dp = da.data();
                for (int64_t i = 0; i < da.size(); ++i)
                    dp[i] = gp[i] / (T(1) + std::exp(xp2[i]));
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> softmax_rows(Tape<T>* tape, const Traced<T>& a, T scale) {
    check_rank2(a.value, "softmax_rows input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(n > 0, ErrorKind::dimension, "softmax_rows over zero columns");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    for (int64_t i = 0; i < m; ++i) {
        const T* x = a.value.data() + i * n;
        T* y = out.value.data() + i * n;
        K<T>().scale(x, scale, y, n);
        T mx = y[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, y[j]);
        for (int64_t j = 0; j < n; ++j) y[j] -= mx;
        K<T>().vexp(y, y, n);
        const T z = K<T>().sum(y, n);
        K<T>().scale(y, T(1) / z, y, n);
    }
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, y = out.value, scale, m,
             n](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(y.shape());
                for (int64_t i = 0; i < m; ++i) {
                    const T* yr = y.data() + i * n;
                    const T* gr = g.data() + i * n;
                    T* dr = da.data() + i * n;
                    const T d = K<T>().dot(gr, yr, n);
                    for (int64_t j = 0; j < n; ++j)
                        dr[j] = scale * yr[j] * (gr[j] - d);
                }
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> softmax_rows_causal(Tape<T>* tape, const Traced<T>& a, T scale) {
    check_rank2(a.value, "softmax_rows_causal input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(m == n, ErrorKind::dimension,
              "softmax_rows_causal needs a square matrix, got " << m << "x"
                                                                << n);
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    for (int64_t i = 0; i < m; ++i) {
        const T* x = a.value.data() + i * n;
        T* y = out.value.data() + i * n;
        const int64_t w = i + 1; // active prefix
        K<T>().scale(x, scale, y, w);
        T mx = y[0];
        for (int64_t j = 1; j < w; ++j) mx = std::max(mx, y[j]);
        for (int64_t j = 0; j < w; ++j) y[j] -= mx;
        K<T>().vexp(y, y, w);
        const T z = K<T>().sum(y, w);
        K<T>().scale(y, T(1) / z, y, w);
        for (int64_t j = w; j < n; ++j) y[j] = T(0);
    }
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, y = out.value, scale, m,
             n](Tape<T>& tp, const Tensor<T>& g) {
                // masked entries have y = 0, so the usual rule already
                // produces zero gradient there
                Tensor<T> da(y.shape());
                for (int64_t i = 0; i < m; ++i) {
                    const T* yr = y.data() + i * n;
                    const T* gr = g.data() + i * n;
                    T* dr = da.data() + i * n;
                    const int64_t w = i + 1;
                    const T d = K<T>().dot(gr, yr, w);
                    for (int64_t j = 0; j < w; ++j)
                        dr[j] = scale * yr[j] * (gr[j] - d);
                }
                tp.accumulate(aid, da);
            });
    }
    return out;
}

template <typename T>
Traced<T> layer_norm(Tape<T>* tape, const Traced<T>& a, T eps) {
    check_rank2(a.value, "layer_norm input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(n > 0, ErrorKind::dimension, "layer_norm over zero columns");
    Traced<T> out{Tensor<T>(a.value.shape()), -1};
    std::vector<T> inv(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        const T* x = a.value.data() + i * n;
        T* y = out.value.data() + i * n;
        const T mu = K<T>().sum(x, n) / static_cast<T>(n);
        T var = T(0);
        for (int64_t j = 0; j < n; ++j) {
            const T d = x[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(n);
        const T s = T(1) / std::sqrt(var + eps);
        inv[static_cast<size_t>(i)] = s;
        for (int64_t j = 0; j < n; ++j) y[j] = (x[j] - mu) * s;
    }
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, y = out.value, inv = std::move(inv), m,
             n](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(y.shape());
                for (int64_t i = 0; i < m; ++i) {
                    const T* yr = y.data() + i * n;
                    const T* gr = g.data() + i * n;
                    T* dr = da.data() + i * n;
                    const T gm = K<T>().sum(gr, n) / static_cast<T>(n);
                    const T gym = K<T>().dot(gr, yr, n) / static_cast<T>(n);
                    const T s = inv[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < n; ++j)
                        dr[j] = s * (gr[j] - gm - yr[j] * gym);
                }
                tp.accumulate(aid, da);
            });
    }
    return out;
}

// ---- reductions ----------------------------------------------------------

template <typename T>
Traced<T> sum_all(Tape<T>* tape, const Traced<T>& a) {
    Traced<T> out{Tensor<T>::scalar(K<T>().sum(a.value.data(), a.value.size())),
                  -1};
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape()](Tape<T>& tp,
                                                   const Tensor<T>& g) {
                tp.accumulate(aid, Tensor<T>::full(ashape, g[0]));
            });
    }
    return out;
}

template <typename T>
Traced<T> mean_all(Tape<T>* tape, const Traced<T>& a) {
    const int64_t cnt = a.value.size();
    ARF_CHECK(cnt > 0, ErrorKind::dimension, "mean_all of empty tensor");
    Traced<T> out{Tensor<T>::scalar(K<T>().sum(a.value.data(), cnt) /
                                    static_cast<T>(cnt)),
                  -1};
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, ashape = a.value.shape(),
             cnt](Tape<T>& tp, const Tensor<T>& g) {
                tp.accumulate(aid,
                              Tensor<T>::full(ashape, g[0] / static_cast<T>(cnt)));
            });
    }
    return out;
}

template <typename T>
Traced<T> mean_axis0(Tape<T>* tape, const Traced<T>& a) {
    check_rank2(a.value, "mean_axis0 input");
    const int64_t m = a.value.dim(0), n = a.value.dim(1);
    ARF_CHECK(m > 0, ErrorKind::dimension, "mean_axis0 over zero rows");
    Traced<T> out{Tensor<T>(Shape{n}), -1};
    for (int64_t i = 0; i < m; ++i)
        K<T>().axpy(T(1) / static_cast<T>(m), a.value.data() + i * n,
                    out.value.data(), n);
    if (want(tape, {a.id})) {
        out.id = tape->push(
            out.value.shape(),
            [aid = a.id, m, n](Tape<T>& tp, const Tensor<T>& g) {
                Tensor<T> da(Shape{m, n});
                for (int64_t i = 0; i < m; ++i)
                    K<T>().axpy(T(1) / static_cast<T>(m), g.data(),
                                da.data() + i * n, n);
                tp.accumulate(aid, da);
            });
    }
    return out;
}

// ---- untraced utilities --------------------------------------------------

template <typename T>
Tensor<T> randn(Shape shape, RngState& rng) {
    Tensor<T> t(std::move(shape));
    T* p = t.data();
    const int64_t n = t.size();
    double g0 = 0.0, g1 = 0.0;
    int64_t i = 0;
    for (; i + 1 < n; i += 2) {
        gaussian_pair(rng, g0, g1);
        p[i] = static_cast<T>(g0);
        p[i + 1] = static_cast<T>(g1);
    }
    if (i < n) {
        gaussian_pair(rng, g0, g1);
        p[i] = static_cast<T>(g0);
    }
    return t;
}

template <typename T>
Tensor<T> rand_uniform(Shape shape, RngState& rng) {
    Tensor<T> t(std::move(shape));
    T* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i)
        p[i] = static_cast<T>(rng.next_uniform());
    return t;
}

// ---- explicit instantiations ----------------------------------------------

#define ARFLOW_INSTANTIATE_OPS(T)                                             \
    template Traced<T> add(Tape<T>*, const Traced<T>&, const Traced<T>&);     \
    template Traced<T> sub(Tape<T>*, const Traced<T>&, const Traced<T>&);     \
    template Traced<T> mul(Tape<T>*, const Traced<T>&, const Traced<T>&);     \
    template Traced<T> scale_by(Tape<T>*, const Traced<T>&, T);               \
    template Traced<T> add_scalar(Tape<T>*, const Traced<T>&, T);             \
    template Traced<T> mul_scalar(Tape<T>*, const Traced<T>&,                 \
                                  const Traced<T>&);                          \
    template Traced<T> mul_rows(Tape<T>*, const Traced<T>&, const Traced<T>&);\
    template Traced<T> add_rows(Tape<T>*, const Traced<T>&, const Traced<T>&);\
    template Traced<T> mul_chunk_rows(Tape<T>*, const Traced<T>&,             \
                                      const Traced<T>&, int64_t);             \
    template Traced<T> add_chunk_rows(Tape<T>*, const Traced<T>&,             \
                                      const Traced<T>&, int64_t);             \
    template Traced<T> matmul(Tape<T>*, const Traced<T>&, const Traced<T>&,   \
                              bool, bool);                                    \
    template Traced<T> transpose(Tape<T>*, const Traced<T>&);                 \
    template Traced<T> reshape(Tape<T>*, const Traced<T>&, Shape);            \
    template Traced<T> slice_rows(Tape<T>*, const Traced<T>&, int64_t,        \
                                  int64_t);                                   \
    template Traced<T> slice_cols(Tape<T>*, const Traced<T>&, int64_t,        \
                                  int64_t);                                   \
    template Traced<T> concat_rows(Tape<T>*, const std::vector<Traced<T>>&);  \
    template Traced<T> concat_cols(Tape<T>*, const std::vector<Traced<T>>&);  \
    template Traced<T> gather_permute(Tape<T>*, const Traced<T>&,             \
                                      std::vector<int64_t>, Shape);           \
    template Traced<T> select_element(Tape<T>*, const Traced<T>&, int64_t);   \
    template Traced<T> embedding_rows(Tape<T>*, const Traced<T>&,             \
                                      std::vector<int64_t>);                  \
    template Traced<T> sigmoid(Tape<T>*, const Traced<T>&);                   \
    template Traced<T> exp_elem(Tape<T>*, const Traced<T>&);                  \
    template Traced<T> log_elem(Tape<T>*, const Traced<T>&);                  \
    template Traced<T> silu(Tape<T>*, const Traced<T>&);                      \
    template Traced<T> log_sigmoid(Tape<T>*, const Traced<T>&);               \
    template Traced<T> softmax_rows(Tape<T>*, const Traced<T>&, T);           \
    template Traced<T> softmax_rows_causal(Tape<T>*, const Traced<T>&, T);    \
    template Traced<T> layer_norm(Tape<T>*, const Traced<T>&, T);             \
    template Traced<T> sum_all(Tape<T>*, const Traced<T>&);                   \
    template Traced<T> mean_all(Tape<T>*, const Traced<T>&);                  \
    template Traced<T> mean_axis0(Tape<T>*, const Traced<T>&);                \
    template Tensor<T> randn(Shape, RngState&);                               \
    template Tensor<T> rand_uniform(Shape, RngState&);

ARFLOW_INSTANTIATE_OPS(float)
ARFLOW_INSTANTIATE_OPS(double)

#undef ARFLOW_INSTANTIATE_OPS

} // namespace arflow
