#include "cnav/ad/ops.hpp"

#include <algorithm>
#include <cmath>

namespace cnav::ad {

namespace {

constexpr double kLayerNormEps = 1e-5;

// Row kernels over a half-open row range so the parallel wrappers can
// split work without touching the inner loops. Four output rows share
// each loaded B row, which cuts the store-forwarding pressure of the
// accumulate-into-C pattern.
inline void gemm_nn_rows(const double* A, const double* B, double* C, int i0, int i1, int k,
                         int n) {
  int i = i0;
  for (; i + 4 <= i1; i += 4) {
    const double* a0 = A + static_cast<int64_t>(i) * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* __restrict c0 = C + static_cast<int64_t>(i) * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    for (int p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      const double* __restrict b = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        const double bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < i1; ++i) {
    const double* a = A + static_cast<int64_t>(i) * k;
    double* c = C + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

inline void gemm_nt_rows(const double* A, const double* B, double* C, int i0, int i1, int k,
                         int n) {
  int i = i0;
  for (; i + 4 <= i1; i += 4) {
    const double* a0 = A + static_cast<int64_t>(i) * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    double* c = C + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* __restrict b = B + static_cast<int64_t>(j) * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (int p = 0; p < k; ++p) {
        const double bp = b[p];
        s0 += a0[p] * bp;
        s1 += a1[p] * bp;
        s2 += a2[p] * bp;
        s3 += a3[p] * bp;
      }
      c[j] += s0;
      c[n + j] += s1;
      c[2 * n + j] += s2;
      c[3 * n + j] += s3;
    }
  }
  for (; i < i1; ++i) {
    const double* a = A + static_cast<int64_t>(i) * k;
    double* c = C + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<int64_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[p] * b[p];
      c[j] += s;
    }
  }
}

inline void gemm_tn_rows(const double* A, const double* B, double* C, int i0, int i1, int m,
                         int k, int n) {
  int i = i0;
  for (; i + 4 <= i1; i += 4) {
    double* __restrict c0 = C + static_cast<int64_t>(i) * n;
    double* __restrict c1 = c0 + n;
    double* __restrict c2 = c1 + n;
    double* __restrict c3 = c2 + n;
    for (int p = 0; p < k; ++p) {
      const double* ap = A + static_cast<int64_t>(p) * m + i;
      const double v0 = ap[0], v1 = ap[1], v2 = ap[2], v3 = ap[3];
      const double* __restrict b = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        const double bj = b[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < i1; ++i) {
    double* c = C + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = A[static_cast<int64_t>(p) * m + i];
      const double* b = B + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

constexpr int64_t kParallelCutoff = 1 << 16;

// Contiguous row chunks, aligned to the 4-row blocking.
inline std::pair<int, int> row_chunk(int m, int chunk_index, int chunk_count) {
  const int per = ((m + chunk_count - 1) / chunk_count + 3) / 4 * 4;
  const int lo = std::min(m, chunk_index * per);
  return {lo, std::min(m, lo + per)};
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  const int t = threads();
  if (t > 1 && static_cast<int64_t>(m) * k * n > kParallelCutoff) {
#pragma omp parallel for schedule(static) num_threads(t)
    for (int c = 0; c < t; ++c) {
      const auto [lo, hi] = row_chunk(m, c, t);
      gemm_nn_rows(A, B, C, lo, hi, k, n);
    }
  } else {
    gemm_nn_rows(A, B, C, 0, m, k, n);
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* A, const double* B, double* C, int m, int k, int n) {
  const int t = threads();
  if (t > 1 && static_cast<int64_t>(m) * k * n > kParallelCutoff) {
#pragma omp parallel for schedule(static) num_threads(t)
    for (int c = 0; c < t; ++c) {
      const auto [lo, hi] = row_chunk(m, c, t);
      gemm_nt_rows(A, B, C, lo, hi, k, n);
    }
  } else {
    gemm_nt_rows(A, B, C, 0, m, k, n);
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* A, const double* B, double* C, int m, int k, int n) {
  const int t = threads();
  if (t > 1 && static_cast<int64_t>(m) * k * n > kParallelCutoff) {
#pragma omp parallel for schedule(static) num_threads(t)
    for (int c = 0; c < t; ++c) {
      const auto [lo, hi] = row_chunk(m, c, t);
      gemm_tn_rows(A, B, C, lo, hi, m, k, n);
    }
  } else {
    gemm_tn_rows(A, B, C, 0, m, m, k, n);
  }
}

enum class Broadcast { Same, Scalar, Suffix };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::Same;
  if (shape_size(b) == 1) return Broadcast::Scalar;
  if (b.size() < a.size() &&
      std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size())))
    return Broadcast::Suffix;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

// Splits a shape at `axis` into (outer, len, inner) strides.
struct AxisSplit {
  int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Tensor unary_map(const Tensor& a, double (*fwd)(double),
                 void (*bwd)(const Node&, Node&)) {
  Tensor out = make_node(a.shape(), {a}, [bwd](Node& self) { bwd(self, *self.parents[0]); });
  const auto& x = a.values();
  auto& y = out.values();
  for (size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(sa) +
                     " and " + shape_str(sb));
  const int m = sa[sa.size() - 2];
  const int k = sa[sa.size() - 1];
  const int n = sb[sb.size() - 1];
  const bool shared_rhs = sb.size() == 2;
  if (shared_rhs) {
    if (sb[0] != k)
      throw ShapeError("matmul: inner dimensions disagree: " + shape_str(sa) +
                       " x " + shape_str(sb));
  } else {
    if (sb.size() != sa.size() || sb[sb.size() - 2] != k ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin()))
      throw ShapeError("matmul: incompatible batched shapes " + shape_str(sa) +
                       " x " + shape_str(sb));
  }

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  int64_t batches = 1;
  for (size_t i = 0; i + 2 < sa.size(); ++i) batches *= sa[i];

  Tensor out = make_node(out_shape, {a, b}, [m, k, n, batches, shared_rhs](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* dc = self.grad.data();
    if (shared_rhs) {
      const int64_t rows = batches * m;
      if (pa.requires_grad)
        gemm_nt(dc, pb.value.data(), pa.grad.data(), static_cast<int>(rows), n, k);
      if (pb.requires_grad)
        gemm_tn(pa.value.data(), dc, pb.grad.data(), k, static_cast<int>(rows), n);
    } else {
      auto batch_range = [&](int64_t t0, int64_t t1) {
        for (int64_t t = t0; t < t1; ++t) {
          const double* dct = dc + t * m * n;
          if (pa.requires_grad)
            gemm_nt_rows(dct, pb.value.data() + t * k * n, pa.grad.data() + t * m * k, 0, m, n,
                         k);
          if (pb.requires_grad)
            gemm_tn_rows(pa.value.data() + t * m * k, dct, pb.grad.data() + t * k * n, 0, k, k,
                         m, n);
        }
      };
      if (threads() > 1 && batches * m * k * n > kParallelCutoff) {
#pragma omp parallel for schedule(static) num_threads(threads())
        for (int64_t t = 0; t < batches; ++t) batch_range(t, t + 1);
      } else {
        batch_range(0, batches);
      }
    }
  });

  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* cv = out.values().data();
  if (shared_rhs) {
    gemm_nn(av, bv, cv, static_cast<int>(batches * m), k, n);
  } else if (threads() > 1 && batches * m * k * n > kParallelCutoff) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t t = 0; t < batches; ++t)
      gemm_nn_rows(av + t * m * k, bv + t * k * n, cv + t * m * n, 0, m, k, n);
  } else {
    for (int64_t t = 0; t < batches; ++t)
      gemm_nn_rows(av + t * m * k, bv + t * k * n, cv + t * m * n, 0, m, k, n);
  }
  return out;
}

namespace {

// Walks (row, lane) so the broadcast index needs no per-element modulo:
// Same iterates one row of length total, Scalar one lane, Suffix rows of
// the small operand's length.
template <typename Fn>
inline void broadcast_walk(Broadcast kind, int64_t total, int64_t bn, Fn&& fn) {
  switch (kind) {
    case Broadcast::Same:
      for (int64_t i = 0; i < total; ++i) fn(i, i);
      break;
    case Broadcast::Scalar:
      for (int64_t i = 0; i < total; ++i) fn(i, 0);
      break;
    case Broadcast::Suffix:
      for (int64_t base = 0; base < total; base += bn)
        for (int64_t j = 0; j < bn; ++j) fn(base + j, j);
      break;
  }
}

Tensor elementwise_binary(const Tensor& a, const Tensor& b, bool is_mul, bool negate_b,
                          const char* name) {
  Broadcast kind = broadcast_kind(a.shape(), b.shape(), name);
  const int64_t bn = shape_size(b.shape());
  Tensor out = make_node(a.shape(), {a, b}, [kind, bn, is_mul, negate_b](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double sign = negate_b ? -1.0 : 1.0;
    if (is_mul) {
      broadcast_walk(kind, self.size(), bn, [&](int64_t i, int64_t j) {
        const double g = self.grad[i];
        if (pa.requires_grad) pa.grad[i] += g * pb.value[j] * sign;
        if (pb.requires_grad) pb.grad[j] += g * pa.value[i] * sign;
      });
    } else {
      broadcast_walk(kind, self.size(), bn, [&](int64_t i, int64_t j) {
        if (pa.requires_grad) pa.grad[i] += self.grad[i];
        if (pb.requires_grad) pb.grad[j] += self.grad[i] * sign;
      });
    }
  });
  const double* xa = a.values().data();
  const double* xb = b.values().data();
  double* y = out.values().data();
  const double sign = negate_b ? -1.0 : 1.0;
  if (is_mul)
    broadcast_walk(kind, out.size(), bn,
                   [&](int64_t i, int64_t j) { y[i] = xa[i] * (sign * xb[j]); });
  else
    broadcast_walk(kind, out.size(), bn,
                   [&](int64_t i, int64_t j) { y[i] = xa[i] + sign * xb[j]; });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, false, false, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, false, true, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, true, false, "mul");
}

Tensor scalar_mul(const Tensor& a, double s) {
  Tensor out = make_node(a.shape(), {a}, [s](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t i = 0; i < self.size(); ++i) p.grad[i] += s * self.grad[i];
  });
  const auto& x = a.values();
  auto& y = out.values();
  for (size_t i = 0; i < x.size(); ++i) y[i] = s * x[i];
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = make_node(a.shape(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
  });
  const auto& x = a.values();
  auto& y = out.values();
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] + s;
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make_node(a.shape(), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t i = 0; i < self.size(); ++i)
      if (self.value[i] > 0.0) p.grad[i] += self.grad[i];
  });
  const auto& x = a.values();
  auto& y = out.values();
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor exp(const Tensor& a) {
  return unary_map(
      a, [](double x) { return std::exp(x); },
      [](const Node& self, Node& p) {
        if (!p.requires_grad) return;
        for (size_t i = 0; i < p.value.size(); ++i) p.grad[i] += self.grad[i] * self.value[i];
      });
}

Tensor log(const Tensor& a) {
  return unary_map(
      a, [](double x) { return std::log(x); },
      [](const Node& self, Node& p) {
        if (!p.requires_grad) return;
        for (size_t i = 0; i < p.value.size(); ++i) p.grad[i] += self.grad[i] / p.value[i];
      });
}

Tensor square(const Tensor& a) {
  return unary_map(
      a, [](double x) { return x * x; },
      [](const Node& self, Node& p) {
        if (!p.requires_grad) return;
        for (size_t i = 0; i < p.value.size(); ++i)
          p.grad[i] += self.grad[i] * 2.0 * p.value[i];
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out = make_node(a.shape(), {a}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t i = 0; i < self.size(); ++i)
      if (p.value[i] >= lo && p.value[i] <= hi) p.grad[i] += self.grad[i];
  });
  const auto& x = a.values();
  auto& y = out.values();
  for (size_t i = 0; i < x.size(); ++i) y[i] = std::min(std::max(x[i], lo), hi);
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  Shape out_shape = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(out_shape.size()))
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(out_shape));
  int total_axis = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size())
      throw ShapeError("concat: rank mismatch " + shape_str(out_shape) + " vs " + shape_str(s));
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != out_shape[i])
        throw ShapeError("concat: shapes " + shape_str(out_shape) + " and " + shape_str(s) +
                         " differ off-axis");
    total_axis += s[axis];
  }
  out_shape[axis] = total_axis;

  AxisSplit out_split = split_axis(out_shape, axis, "concat");
  std::vector<int64_t> part_block(parts.size());
  for (size_t p = 0; p < parts.size(); ++p)
    part_block[p] = static_cast<int64_t>(parts[p].shape()[axis]) * out_split.inner;
  const int64_t out_block = out_split.len * out_split.inner;

  Tensor out = make_node(out_shape, parts, [part_block, out_block, outer = out_split.outer](Node& self) {
    int64_t offset = 0;
    for (size_t p = 0; p < self.parents.size(); ++p) {
      Node& pp = *self.parents[p];
      if (pp.requires_grad) {
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = self.grad.data() + o * out_block + offset;
          double* dst = pp.grad.data() + o * part_block[p];
          for (int64_t i = 0; i < part_block[p]; ++i) dst[i] += src[i];
        }
      }
      offset += part_block[p];
    }
  });

  int64_t offset = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].values().data();
    for (int64_t o = 0; o < out_split.outer; ++o)
      std::copy(src + o * part_block[p], src + (o + 1) * part_block[p],
                out.values().data() + o * out_block + offset);
    offset += part_block[p];
  }
  return out;
}

Tensor slice_last(const Tensor& a, int from, int to) {
  const Shape& s = a.shape();
  const int last = s.back();
  if (from < 0 || to > last || from >= to)
    throw ShapeError("slice_last: [" + std::to_string(from) + "," + std::to_string(to) +
                     ") invalid for " + shape_str(s));
  Shape out_shape = s;
  out_shape.back() = to - from;
  const int64_t rows = shape_size(s) / last;
  const int width = to - from;

  Tensor out = make_node(out_shape, {a}, [rows, last, from, width](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * width;
      double* pg = p.grad.data() + r * last + from;
      for (int j = 0; j < width; ++j) pg[j] += g[j];
    }
  });
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = a.values().data() + r * last + from;
    std::copy(src, src + width, out.values().data() + r * width);
  }
  return out;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_size(shape) != a.size())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape) +
                     " changes element count");
  Tensor out = make_node(shape, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
  });
  out.values() = a.values();
  return out;
}

namespace {

// dst[i] (+)= src[perm_map(i)] for an axis permutation.
void permute_copy(const double* src, double* dst, const Shape& in_shape,
                  const std::vector<int>& perm, bool accumulate) {
  const int rank = static_cast<int>(in_shape.size());
  Shape out_shape(rank);
  for (int i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
  std::vector<int64_t> in_strides(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  std::vector<int64_t> step(rank);
  for (int i = 0; i < rank; ++i) step[i] = in_strides[perm[i]];

  const int64_t total = shape_size(in_shape);
  std::vector<int64_t> coord(rank, 0);
  int64_t src_idx = 0;
  for (int64_t out_idx = 0; out_idx < total; ++out_idx) {
    if (accumulate)
      dst[out_idx] += src[src_idx];
    else
      dst[out_idx] = src[src_idx];
    for (int d = rank - 1; d >= 0; --d) {
      src_idx += step[d];
      if (++coord[d] < out_shape[d]) break;
      coord[d] = 0;
      src_idx -= step[d] * out_shape[d];
    }
  }
}

}  // namespace

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
  const Shape& s = a.shape();
  const int rank = static_cast<int>(s.size());
  if (static_cast<int>(perm.size()) != rank)
    throw ShapeError("transpose: permutation size " + std::to_string(perm.size()) +
                     " does not match rank of " + shape_str(s));
  std::vector<bool> used(rank, false);
  for (int p : perm) {
    if (p < 0 || p >= rank || used[p]) throw ShapeError("transpose: invalid permutation");
    used[p] = true;
  }
  Shape out_shape(rank);
  for (int i = 0; i < rank; ++i) out_shape[i] = s[perm[i]];

  std::vector<int> inv(rank);
  for (int i = 0; i < rank; ++i) inv[perm[i]] = i;

  Tensor out = make_node(out_shape, {a}, [inv, out_shape](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    permute_copy(self.grad.data(), p.grad.data(), out_shape, inv, true);
  });
  permute_copy(a.values().data(), out.values().data(), s, perm, false);
  return out;
}

Tensor transpose_last2(const Tensor& a) {
  std::vector<int> perm(a.rank());
  for (int i = 0; i < a.rank(); ++i) perm[i] = i;
  std::swap(perm[a.rank() - 1], perm[a.rank() - 2]);
  return transpose(a, perm);
}

namespace {

Tensor reduce_axis(const Tensor& a, int axis, bool take_mean, const char* name) {
  AxisSplit sp = split_axis(a.shape(), axis, name);
  Shape out_shape;
  for (int i = 0; i < static_cast<int>(a.shape().size()); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape = {1};
  const double scale = take_mean ? 1.0 / static_cast<double>(sp.len) : 1.0;

  Tensor out = make_node(out_shape, {a}, [sp, scale](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t l = 0; l < sp.len; ++l) {
        double* pg = p.grad.data() + (o * sp.len + l) * sp.inner;
        const double* g = self.grad.data() + o * sp.inner;
        for (int64_t i = 0; i < sp.inner; ++i) pg[i] += scale * g[i];
      }
  });
  auto& y = out.values();
  const auto& x = a.values();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t l = 0; l < sp.len; ++l) {
      const double* xs = x.data() + (o * sp.len + l) * sp.inner;
      double* ys = y.data() + o * sp.inner;
      for (int64_t i = 0; i < sp.inner; ++i) ys[i] += scale * xs[i];
    }
  return out;
}

}  // namespace

Tensor sum(const Tensor& a, int axis) { return reduce_axis(a, axis, false, "sum"); }
Tensor mean(const Tensor& a, int axis) { return reduce_axis(a, axis, true, "mean"); }

Tensor sum_all(const Tensor& a) {
  Tensor out = make_node({1}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0];
    for (auto& pg : p.grad) pg += g;
  });
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.values()[0] = s;
  return out;
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = make_node({1}, {a}, [inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const double g = self.grad[0] * inv;
    for (auto& pg : p.grad) pg += g;
  });
  double s = 0.0;
  for (double v : a.values()) s += v;
  out.values()[0] = s * inv;
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  AxisSplit sp = split_axis(a.shape(), axis, "softmax");
  Tensor out = make_node(a.shape(), {a}, [sp](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (int64_t o = 0; o < sp.outer; ++o)
      for (int64_t i = 0; i < sp.inner; ++i) {
        const int64_t base = o * sp.len * sp.inner + i;
        double dot = 0.0;
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t idx = base + l * sp.inner;
          dot += self.grad[idx] * self.value[idx];
        }
        for (int64_t l = 0; l < sp.len; ++l) {
          const int64_t idx = base + l * sp.inner;
          p.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
  });
  const auto& x = a.values();
  auto& y = out.values();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      const int64_t base = o * sp.len * sp.inner + i;
      double mx = x[base];
      for (int64_t l = 1; l < sp.len; ++l) mx = std::max(mx, x[base + l * sp.inner]);
      double z = 0.0;
      for (int64_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(x[base + l * sp.inner] - mx);
        y[base + l * sp.inner] = e;
        z += e;
      }
      for (int64_t l = 0; l < sp.len; ++l) y[base + l * sp.inner] /= z;
    }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const Shape& s = x.shape();
  const int n = s.back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
    throw ShapeError("layer_norm: affine shapes " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match last axis of " + shape_str(s));
  const int64_t rows = shape_size(s) / n;

  auto mu = std::make_shared<std::vector<double>>(rows);
  auto inv_sd = std::make_shared<std::vector<double>>(rows);

  Tensor out = make_node(s, {x, gain, bias}, [rows, n, mu, inv_sd](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    for (int64_t r = 0; r < rows; ++r) {
      const double* xv = px.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      const double m = (*mu)[r];
      const double is = (*inv_sd)[r];
      double sum1 = 0.0, sum2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double xhat = (xv[j] - m) * is;
        const double dxhat = dy[j] * pg.value[j];
        sum1 += dxhat;
        sum2 += dxhat * xhat;
        if (pg.requires_grad) pg.grad[j] += dy[j] * xhat;
        if (pb.requires_grad) pb.grad[j] += dy[j];
      }
      if (px.requires_grad) {
        double* dx = px.grad.data() + r * n;
        for (int j = 0; j < n; ++j) {
          const double xhat = (xv[j] - m) * is;
          const double dxhat = dy[j] * pg.value[j];
          dx[j] += is * (dxhat - sum1 / n - xhat * sum2 / n);
        }
      }
    }
  });

  const auto& xv = x.values();
  auto& y = out.values();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double m = 0.0;
    for (int j = 0; j < n; ++j) m += row[j];
    m /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - m) * (row[j] - m);
    var /= n;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*mu)[r] = m;
    (*inv_sd)[r] = is;
    for (int j = 0; j < n; ++j)
      y[r * n + j] = (row[j] - m) * is * gain.values()[j] + bias.values()[j];
  }
  return out;
}

}  // namespace cnav::ad
