#include "irmae/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace irmae::kern {

namespace {

constexpr std::size_t kReduceChunk = 4096;

inline std::ptrdiff_t sp(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

template <class T>
inline T apply_unary(Unary op, T x) {
  switch (op) {
    case Unary::relu: return x > T(0) ? x : T(0);
    case Unary::tanh: return std::tanh(x);
    case Unary::sigmoid: return T(1) / (T(1) + std::exp(-x));
    case Unary::exp: return std::exp(x);
  }
  return T(0);
}

template <class T>
inline T apply_binary(Binary op, T a, T b) {
  switch (op) {
    case Binary::add: return a + b;
    case Binary::sub: return a - b;
    case Binary::mul: return a * b;
  }
  return T(0);
}

}  // namespace

ConvDims conv_dims(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t o,
                   std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("conv: stride must be positive");
  if (h + 2 * pad < kh || w + 2 * pad < kw)
    throw ShapeError("conv: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + std::to_string(h) + "x" + std::to_string(w));
  if ((h + 2 * pad - kh) % stride != 0 || (w + 2 * pad - kw) % stride != 0)
    throw ShapeError("conv: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " with pad " + std::to_string(pad) + " is not a whole number of stride-" +
                     std::to_string(stride) + " steps for a " + std::to_string(kh) + "x" +
                     std::to_string(kw) + " kernel");
  ConvDims d;
  d.n = n;
  d.c = c;
  d.h = h;
  d.w = w;
  d.o = o;
  d.kh = kh;
  d.kw = kw;
  d.stride = stride;
  d.pad = pad;
  d.oh = (h + 2 * pad - kh) / stride + 1;
  d.ow = (w + 2 * pad - kw) / stride + 1;
  return d;
}

template <class T>
void matmul_nn(const T* a, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sp(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    T* drow = dst + i * n;
    if (!acc)
      for (std::size_t j = 0; j < n; ++j) drow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) drow[j] += aip * brow[j];
    }
  }
}

template <class T>
void matmul_nt(const T* a, const T* bt, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sp(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = bt + j * k;
      T s = acc ? dst[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      dst[i * n + j] = s;
    }
  }
}

template <class T>
void matmul_tn(const T* at, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < sp(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    T* drow = dst + i * n;
    if (!acc)
      for (std::size_t j = 0; j < n; ++j) drow[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T api = at[p * m + i];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) drow[j] += api * brow[j];
    }
  }
}

namespace {

// The convolution kernels lower onto the matmul primitives through im2col
// buffers. Column layouts mirror the reference loop nests exactly — (c,u,v)
// for the forward pass, (o,u,v) for the input gradient, with zeros standing
// in for skipped out-of-range taps — so every dot product accumulates in the
// same order as the serial reference and stays bit-comparable to it.
constexpr std::size_t kColsBudget = std::size_t(1) << 22;

template <class T>
void fill_cols_fwd(const T* x, T* cols, const ConvDims& d, std::size_t n0, std::size_t rows) {
  const std::size_t pq = d.oh * d.ow;
  const std::size_t k = d.c * d.kh * d.kw;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
    const std::size_t n = n0 + r / pq;
    const std::size_t p = (r % pq) / d.ow;
    const std::size_t q = r % d.ow;
    T* crow = cols + r * k;
    std::size_t idx = 0;
    for (std::size_t c = 0; c < d.c; ++c) {
      const T* xc = x + (n * d.c + c) * d.h * d.w;
      for (std::size_t u = 0; u < d.kh; ++u) {
        const std::ptrdiff_t i = sp(p * d.stride + u) - sp(d.pad);
        if (i < 0 || i >= sp(d.h)) {
          for (std::size_t v = 0; v < d.kw; ++v) crow[idx++] = T(0);
          continue;
        }
        const T* xrow = xc + static_cast<std::size_t>(i) * d.w;
        for (std::size_t v = 0; v < d.kw; ++v) {
          const std::ptrdiff_t j = sp(q * d.stride + v) - sp(d.pad);
          crow[idx++] = (j < 0 || j >= sp(d.w)) ? T(0) : xrow[static_cast<std::size_t>(j)];
        }
      }
    }
  }
}

template <class T>
void fill_cols_grad_x(const T* gy, T* cols, const ConvDims& d, std::size_t n0, std::size_t rows) {
  const std::size_t hw = d.h * d.w;
  const std::size_t k = d.o * d.kh * d.kw;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
    const std::size_t n = n0 + r / hw;
    const std::size_t i = (r % hw) / d.w;
    const std::size_t j = r % d.w;
    T* crow = cols + r * k;
    std::size_t idx = 0;
    for (std::size_t o = 0; o < d.o; ++o) {
      const T* gyo = gy + (n * d.o + o) * d.oh * d.ow;
      for (std::size_t u = 0; u < d.kh; ++u) {
        const std::ptrdiff_t ps = sp(i + d.pad) - sp(u);
        const bool prow = ps >= 0 && ps % sp(d.stride) == 0 &&
                          static_cast<std::size_t>(ps) / d.stride < d.oh;
        if (!prow) {
          for (std::size_t v = 0; v < d.kw; ++v) crow[idx++] = T(0);
          continue;
        }
        const std::size_t p = static_cast<std::size_t>(ps) / d.stride;
        for (std::size_t v = 0; v < d.kw; ++v) {
          const std::ptrdiff_t qs = sp(j + d.pad) - sp(v);
          const bool qcol = qs >= 0 && qs % sp(d.stride) == 0 &&
                            static_cast<std::size_t>(qs) / d.stride < d.ow;
          crow[idx++] = qcol ? gyo[p * d.ow + static_cast<std::size_t>(qs) / d.stride] : T(0);
        }
      }
    }
  }
}

}  // namespace

template <class T>
void conv_fwd(const T* x, const T* w, const T* bias, T* y, const ConvDims& d, bool acc) {
  const std::size_t pq = d.oh * d.ow;
  const std::size_t k = d.c * d.kh * d.kw;
  const std::size_t per_sample = pq * k;
  std::vector<T> wt(k * d.o);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pp = 0; pp < sp(k); ++pp) {
    const std::size_t p = static_cast<std::size_t>(pp);
    for (std::size_t o = 0; o < d.o; ++o) wt[p * d.o + o] = w[o * k + p];
  }
  const std::size_t block = per_sample == 0 ? d.n
                                            : (kColsBudget / per_sample > 0
                                                   ? (kColsBudget / per_sample < d.n
                                                          ? kColsBudget / per_sample
                                                          : d.n)
                                                   : 1);
  std::vector<T> cols, ymat;
  for (std::size_t n0 = 0; n0 < d.n; n0 += block) {
    const std::size_t nb = block < d.n - n0 ? block : d.n - n0;
    const std::size_t rows = nb * pq;
    cols.resize(rows * k);
    ymat.resize(rows * d.o);
    fill_cols_fwd(x, cols.data(), d, n0, rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
      const std::size_t r = static_cast<std::size_t>(rr);
      const std::size_t n = n0 + r / pq;
      const std::size_t pqi = r % pq;
      T* yrow = ymat.data() + r * d.o;
      for (std::size_t o = 0; o < d.o; ++o)
        yrow[o] = acc ? y[(n * d.o + o) * pq + pqi] : (bias ? bias[o] : T(0));
    }
    matmul_nn(cols.data(), wt.data(), ymat.data(), rows, k, d.o, true);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
      const std::size_t r = static_cast<std::size_t>(rr);
      const std::size_t n = n0 + r / pq;
      const std::size_t pqi = r % pq;
      const T* yrow = ymat.data() + r * d.o;
      for (std::size_t o = 0; o < d.o; ++o) y[(n * d.o + o) * pq + pqi] = yrow[o];
    }
  }
}

template <class T>
void conv_grad_x(const T* gy, const T* w, T* gx, const ConvDims& d, bool acc) {
  const std::size_t hw = d.h * d.w;
  const std::size_t k = d.o * d.kh * d.kw;
  const std::size_t per_sample = hw * k;
  std::vector<T> wmat(k * d.c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t oo = 0; oo < sp(d.o); ++oo) {
    const std::size_t o = static_cast<std::size_t>(oo);
    for (std::size_t uv = 0; uv < d.kh * d.kw; ++uv)
      for (std::size_t c = 0; c < d.c; ++c)
        wmat[(o * d.kh * d.kw + uv) * d.c + c] = w[(o * d.c + c) * d.kh * d.kw + uv];
  }
  const std::size_t block = per_sample == 0 ? d.n
                                            : (kColsBudget / per_sample > 0
                                                   ? (kColsBudget / per_sample < d.n
                                                          ? kColsBudget / per_sample
                                                          : d.n)
                                                   : 1);
  std::vector<T> cols, xmat;
  for (std::size_t n0 = 0; n0 < d.n; n0 += block) {
    const std::size_t nb = block < d.n - n0 ? block : d.n - n0;
    const std::size_t rows = nb * hw;
    cols.resize(rows * k);
    xmat.resize(rows * d.c);
    fill_cols_grad_x(gy, cols.data(), d, n0, rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
      const std::size_t r = static_cast<std::size_t>(rr);
      const std::size_t n = n0 + r / hw;
      const std::size_t ij = r % hw;
      T* xrow = xmat.data() + r * d.c;
      for (std::size_t c = 0; c < d.c; ++c) xrow[c] = acc ? gx[(n * d.c + c) * hw + ij] : T(0);
    }
    matmul_nn(cols.data(), wmat.data(), xmat.data(), rows, k, d.c, true);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
      const std::size_t r = static_cast<std::size_t>(rr);
      const std::size_t n = n0 + r / hw;
      const std::size_t ij = r % hw;
      const T* xrow = xmat.data() + r * d.c;
      for (std::size_t c = 0; c < d.c; ++c) gx[(n * d.c + c) * hw + ij] = xrow[c];
    }
  }
}

template <class T>
void conv_grad_w(const T* x, const T* gy, T* gw, const ConvDims& d, bool acc) {
  const std::size_t pq = d.oh * d.ow;
  const std::size_t k = d.c * d.kh * d.kw;
  const std::size_t per_sample = pq * k;
  const std::size_t block = per_sample == 0 ? d.n
                                            : (kColsBudget / per_sample > 0
                                                   ? (kColsBudget / per_sample < d.n
                                                          ? kColsBudget / per_sample
                                                          : d.n)
                                                   : 1);
  std::vector<T> cols, gymat;
  bool first = true;
  for (std::size_t n0 = 0; n0 < d.n; n0 += block) {
    const std::size_t nb = block < d.n - n0 ? block : d.n - n0;
    const std::size_t rows = nb * pq;
    cols.resize(rows * k);
    gymat.resize(rows * d.o);
    fill_cols_fwd(x, cols.data(), d, n0, rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < sp(rows); ++rr) {
      const std::size_t r = static_cast<std::size_t>(rr);
      const std::size_t n = n0 + r / pq;
      const std::size_t pqi = r % pq;
      T* grow = gymat.data() + r * d.o;
      for (std::size_t o = 0; o < d.o; ++o) grow[o] = gy[(n * d.o + o) * pq + pqi];
    }
    matmul_tn(gymat.data(), cols.data(), gw, d.o, rows, k, acc || !first);
    first = false;
  }
  if (first && !acc)
    for (std::size_t i = 0; i < d.o * k; ++i) gw[i] = T(0);
}

template <class T>
void unary_map(Unary op, const T* x, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) y[i] = apply_unary(op, x[i]);
}

template <class T>
void unary_grad(Unary op, const T* x, const T* y, const T* gy, T* gx, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) {
    switch (op) {
      case Unary::relu: gx[i] += x[i] > T(0) ? gy[i] : T(0); break;
      case Unary::tanh: gx[i] += (T(1) - y[i] * y[i]) * gy[i]; break;
      case Unary::sigmoid: gx[i] += y[i] * (T(1) - y[i]) * gy[i]; break;
      case Unary::exp: gx[i] += y[i] * gy[i]; break;
    }
  }
}

template <class T>
void binary_map(Binary op, const T* a, const T* b, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) y[i] = apply_binary(op, a[i], b[i]);
}

template <class T>
void scale_map(const T* x, T s, T* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) y[i] = s * x[i];
}

template <class T>
void acc_axpy(T alpha, const T* x, T* dst, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) dst[i] += alpha * x[i];
}

template <class T>
void acc_mul(const T* a, const T* b, T* dst, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) dst[i] += a[i] * b[i];
}

template <class T>
void add_row_bias(T* y, const T* b, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < sp(rows); ++r)
    for (std::size_t j = 0; j < cols; ++j) y[static_cast<std::size_t>(r) * cols + j] += b[j];
}

template <class T>
void col_sum(const T* x, T* dst, std::size_t rows, std::size_t cols, bool acc) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < sp(cols); ++jj) {
    const std::size_t j = static_cast<std::size_t>(jj);
    T s = acc ? dst[j] : T(0);
    for (std::size_t r = 0; r < rows; ++r) s += x[r * cols + j];
    dst[j] = s;
  }
}

template <class T>
void channel_sum(const T* x, T* dst, std::size_t n, std::size_t c, std::size_t hw, bool acc) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t jj = 0; jj < sp(c); ++jj) {
    const std::size_t j = static_cast<std::size_t>(jj);
    T s = acc ? dst[j] : T(0);
    for (std::size_t b = 0; b < n; ++b) {
      const T* row = x + (b * c + j) * hw;
      for (std::size_t i = 0; i < hw; ++i) s += row[i];
    }
    dst[j] = s;
  }
}

namespace {

// Shared chunked-reduction core: per-chunk double partials, serial combine.
template <class F>
double reduce_chunks(std::size_t n, F chunk_sum) {
  const std::size_t n_chunks = (n + kReduceChunk - 1) / kReduceChunk;
  if (n_chunks == 0) return 0.0;
  std::vector<double> partial(n_chunks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t cc = 0; cc < sp(n_chunks); ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    const std::size_t lo = c * kReduceChunk;
    const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
    partial[c] = chunk_sum(lo, hi);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) total += partial[c];
  return total;
}

}  // namespace

template <class T>
double reduce_sum(const T* x, std::size_t n) {
  return reduce_chunks(n, [x](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += static_cast<double>(x[i]);
    return s;
  });
}

template <class T>
double reduce_sq_diff(const T* a, const T* b, std::size_t n) {
  return reduce_chunks(n, [a, b](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      s += d * d;
    }
    return s;
  });
}

template <class T>
double reduce_abs(const T* x, std::size_t n) {
  return reduce_chunks(n, [x](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += std::abs(static_cast<double>(x[i]));
    return s;
  });
}

template <class T>
double reduce_sq(const T* x, std::size_t n) {
  return reduce_chunks(n, [x](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double v = static_cast<double>(x[i]);
      s += v * v;
    }
    return s;
  });
}

template <class T>
void sgd_update(T* p, const T* g, std::size_t n, T lr) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) p[i] -= lr * g[i];
}

template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                 T bias1, T bias2) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < sp(n); ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bias1;
    const T vhat = v[i] / bias2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <class T>
void gather_rows(const T* src, std::size_t row_elems, const int* idx, std::size_t n_rows, T* dst) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < sp(n_rows); ++r) {
    const T* s = src + static_cast<std::size_t>(idx[r]) * row_elems;
    T* d = dst + static_cast<std::size_t>(r) * row_elems;
    for (std::size_t i = 0; i < row_elems; ++i) d[i] = s[i];
  }
}

namespace ref {

template <class T>
void matmul_nn(const T* a, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = acc ? dst[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      dst[i * n + j] = s;
    }
  }
}

template <class T>
void matmul_nt(const T* a, const T* bt, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = acc ? dst[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * bt[j * k + p];
      dst[i * n + j] = s;
    }
  }
}

template <class T>
void matmul_tn(const T* at, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = acc ? dst[i * n + j] : T(0);
      for (std::size_t p = 0; p < k; ++p) s += at[p * m + i] * b[p * n + j];
      dst[i * n + j] = s;
    }
  }
}

template <class T>
void conv_fwd(const T* x, const T* w, const T* bias, T* y, const ConvDims& d, bool acc) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < d.o; ++o) {
      for (std::size_t p = 0; p < d.oh; ++p) {
        for (std::size_t q = 0; q < d.ow; ++q) {
          T s = acc ? y[((n * d.o + o) * d.oh + p) * d.ow + q] : (bias ? bias[o] : T(0));
          for (std::size_t c = 0; c < d.c; ++c) {
            for (std::size_t u = 0; u < d.kh; ++u) {
              const std::ptrdiff_t i = sp(p * d.stride + u) - sp(d.pad);
              if (i < 0 || i >= sp(d.h)) continue;
              for (std::size_t v = 0; v < d.kw; ++v) {
                const std::ptrdiff_t j = sp(q * d.stride + v) - sp(d.pad);
                if (j < 0 || j >= sp(d.w)) continue;
                s += x[((n * d.c + c) * d.h + static_cast<std::size_t>(i)) * d.w +
                       static_cast<std::size_t>(j)] *
                     w[((o * d.c + c) * d.kh + u) * d.kw + v];
              }
            }
          }
          y[((n * d.o + o) * d.oh + p) * d.ow + q] = s;
        }
      }
    }
  }
}

template <class T>
void conv_grad_x(const T* gy, const T* w, T* gx, const ConvDims& d, bool acc) {
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t i = 0; i < d.h; ++i) {
        for (std::size_t j = 0; j < d.w; ++j) {
          T s = acc ? gx[((n * d.c + c) * d.h + i) * d.w + j] : T(0);
          for (std::size_t o = 0; o < d.o; ++o) {
            for (std::size_t u = 0; u < d.kh; ++u) {
              const std::ptrdiff_t ps = sp(i + d.pad) - sp(u);
              if (ps < 0 || ps % sp(d.stride) != 0) continue;
              const std::size_t p = static_cast<std::size_t>(ps) / d.stride;
              if (p >= d.oh) continue;
              for (std::size_t v = 0; v < d.kw; ++v) {
                const std::ptrdiff_t qs = sp(j + d.pad) - sp(v);
                if (qs < 0 || qs % sp(d.stride) != 0) continue;
                const std::size_t q = static_cast<std::size_t>(qs) / d.stride;
                if (q >= d.ow) continue;
                s += gy[((n * d.o + o) * d.oh + p) * d.ow + q] *
                     w[((o * d.c + c) * d.kh + u) * d.kw + v];
              }
            }
          }
          gx[((n * d.c + c) * d.h + i) * d.w + j] = s;
        }
      }
    }
  }
}

template <class T>
void conv_grad_w(const T* x, const T* gy, T* gw, const ConvDims& d, bool acc) {
  for (std::size_t o = 0; o < d.o; ++o) {
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t u = 0; u < d.kh; ++u) {
        for (std::size_t v = 0; v < d.kw; ++v) {
          T s = acc ? gw[((o * d.c + c) * d.kh + u) * d.kw + v] : T(0);
          for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t p = 0; p < d.oh; ++p) {
              const std::ptrdiff_t i = sp(p * d.stride + u) - sp(d.pad);
              if (i < 0 || i >= sp(d.h)) continue;
              for (std::size_t q = 0; q < d.ow; ++q) {
                const std::ptrdiff_t j = sp(q * d.stride + v) - sp(d.pad);
                if (j < 0 || j >= sp(d.w)) continue;
                s += gy[((n * d.o + o) * d.oh + p) * d.ow + q] *
                     x[((n * d.c + c) * d.h + static_cast<std::size_t>(i)) * d.w +
                       static_cast<std::size_t>(j)];
              }
            }
          }
          gw[((o * d.c + c) * d.kh + u) * d.kw + v] = s;
        }
      }
    }
  }
}

template <class T>
void unary_map(Unary op, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = apply_unary(op, x[i]);
}

template <class T>
void binary_map(Binary op, const T* a, const T* b, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = apply_binary(op, a[i], b[i]);
}

template <class T>
double reduce_sum(const T* x, std::size_t n) {
  // Same fixed chunking as the parallel version, combined in the same order.
  double total = 0.0;
  for (std::size_t lo = 0; lo < n; lo += kReduceChunk) {
    const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += static_cast<double>(x[i]);
    total += s;
  }
  return total;
}

}  // namespace ref

#define IRMAE_INSTANTIATE(T)                                                                      \
  template void matmul_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,      \
                             bool);                                                              \
  template void matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,      \
                             bool);                                                              \
  template void matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,      \
                             bool);                                                              \
  template void conv_fwd<T>(const T*, const T*, const T*, T*, const ConvDims&, bool);            \
  template void conv_grad_x<T>(const T*, const T*, T*, const ConvDims&, bool);                   \
  template void conv_grad_w<T>(const T*, const T*, T*, const ConvDims&, bool);                   \
  template void unary_map<T>(Unary, const T*, T*, std::size_t);                                  \
  template void unary_grad<T>(Unary, const T*, const T*, const T*, T*, std::size_t);             \
  template void binary_map<T>(Binary, const T*, const T*, T*, std::size_t);                      \
  template void scale_map<T>(const T*, T, T*, std::size_t);                                      \
  template void acc_axpy<T>(T, const T*, T*, std::size_t);                                       \
  template void acc_mul<T>(const T*, const T*, T*, std::size_t);                                 \
  template void add_row_bias<T>(T*, const T*, std::size_t, std::size_t);                         \
  template void col_sum<T>(const T*, T*, std::size_t, std::size_t, bool);                        \
  template void channel_sum<T>(const T*, T*, std::size_t, std::size_t, std::size_t, bool);       \
  template double reduce_sum<T>(const T*, std::size_t);                                          \
  template double reduce_sq_diff<T>(const T*, const T*, std::size_t);                            \
  template double reduce_abs<T>(const T*, std::size_t);                                          \
  template double reduce_sq<T>(const T*, std::size_t);                                           \
  template void sgd_update<T>(T*, const T*, std::size_t, T);                                     \
  template void adam_update<T>(T*, const T*, T*, T*, std::size_t, T, T, T, T, T, T);             \
  template void gather_rows<T>(const T*, std::size_t, const int*, std::size_t, T*);              \
  template void ref::matmul_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                                  bool);                                                         \
  template void ref::matmul_nt<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                                  bool);                                                         \
  template void ref::matmul_tn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t, \
                                  bool);                                                         \
  template void ref::conv_fwd<T>(const T*, const T*, const T*, T*, const ConvDims&, bool);       \
  template void ref::conv_grad_x<T>(const T*, const T*, T*, const ConvDims&, bool);              \
  template void ref::conv_grad_w<T>(const T*, const T*, T*, const ConvDims&, bool);              \
  template void ref::unary_map<T>(Unary, const T*, T*, std::size_t);                             \
  template void ref::binary_map<T>(Binary, const T*, const T*, T*, std::size_t);                 \
  template double ref::reduce_sum<T>(const T*, std::size_t);

IRMAE_INSTANTIATE(float)
IRMAE_INSTANTIATE(double)

#undef IRMAE_INSTANTIATE

}  // namespace irmae::kern
