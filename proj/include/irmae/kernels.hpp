#pragma once

#include <cstddef>

#include "irmae/common.hpp"

// Raw buffer kernels. The default entry points are OpenMP-parallel; the
// kern::ref namespace keeps plain serial implementations of the heavy ones.
// Parallel kernels assign every output element to exactly one thread and keep
// a fixed per-element accumulation order, so results are bit-identical to the
// serial reference for any thread count.
namespace irmae::kern {

enum class Unary { relu, tanh, sigmoid, exp };
enum class Binary { add, sub, mul };

struct ConvDims {
  std::size_t n, c, h, w;    // input
  std::size_t o, kh, kw;     // filters
  std::size_t stride, pad;
  std::size_t oh, ow;        // output spatial dims
};

// Validates divisibility and positivity; throws ShapeError otherwise.
ConvDims conv_dims(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t o,
                   std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad);

// dst[m x n] = a[m x k] . b[k x n]           (+= when acc)
template <class T>
void matmul_nn(const T* a, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc = false);
// dst[m x n] = a[m x k] . bt[n x k]^T
template <class T>
void matmul_nt(const T* a, const T* bt, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc = false);
// dst[m x n] = at[k x m]^T . b[k x n]
template <class T>
void matmul_tn(const T* at, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc = false);

// y[n,o,oh,ow] = bias[o] + sum_{c,u,v} x[n,c,p*s+u-pad,q*s+v-pad] w[o,c,u,v]
// bias may be null.
template <class T>
void conv_fwd(const T* x, const T* w, const T* bias, T* y, const ConvDims& d, bool acc = false);
// gx[n,c,i,j] = sum over taps of gy . w (adjoint of conv_fwd in x)
template <class T>
void conv_grad_x(const T* gy, const T* w, T* gx, const ConvDims& d, bool acc = false);
// gw[o,c,u,v] = sum_{n,p,q} gy[n,o,p,q] x[n,c,p*s+u-pad,q*s+v-pad]
template <class T>
void conv_grad_w(const T* x, const T* gy, T* gw, const ConvDims& d, bool acc = false);

template <class T>
void unary_map(Unary op, const T* x, T* y, std::size_t n);
// gx += d(op)/dx * gy, using input x or output y as each op needs.
template <class T>
void unary_grad(Unary op, const T* x, const T* y, const T* gy, T* gx, std::size_t n);
template <class T>
void binary_map(Binary op, const T* a, const T* b, T* y, std::size_t n);

template <class T>
void scale_map(const T* x, T s, T* y, std::size_t n);
// dst += alpha * x
template <class T>
void acc_axpy(T alpha, const T* x, T* dst, std::size_t n);
// dst += a * b (elementwise)
template <class T>
void acc_mul(const T* a, const T* b, T* dst, std::size_t n);

// y[r, :] += b for every row r; and its adjoint (column sums).
template <class T>
void add_row_bias(T* y, const T* b, std::size_t rows, std::size_t cols);
template <class T>
void col_sum(const T* x, T* dst, std::size_t rows, std::size_t cols, bool acc = true);
// per-channel bias over [n, c, hw] layout; and its adjoint
template <class T>
void channel_sum(const T* x, T* dst, std::size_t n, std::size_t c, std::size_t hw,
                 bool acc = true);

// Deterministic sum: fixed-size chunks accumulated in double, chunk partials
// combined serially in index order. Independent of thread count.
template <class T>
double reduce_sum(const T* x, std::size_t n);
template <class T>
double reduce_sq_diff(const T* a, const T* b, std::size_t n);
template <class T>
double reduce_abs(const T* x, std::size_t n);
template <class T>
double reduce_sq(const T* x, std::size_t n);

template <class T>
void sgd_update(T* p, const T* g, std::size_t n, T lr);
template <class T>
void adam_update(T* p, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps,
                 T bias1, T bias2);

template <class T>
void gather_rows(const T* src, std::size_t row_elems, const int* idx, std::size_t n_rows, T* dst);

// Serial reference implementations of the compute-heavy kernels, kept for
// equivalence tests and the kernel benchmark.
namespace ref {

template <class T>
void matmul_nn(const T* a, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc = false);
template <class T>
void matmul_nt(const T* a, const T* bt, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc = false);
template <class T>
void matmul_tn(const T* at, const T* b, T* dst, std::size_t m, std::size_t k, std::size_t n,
               bool acc = false);
template <class T>
void conv_fwd(const T* x, const T* w, const T* bias, T* y, const ConvDims& d, bool acc = false);
template <class T>
void conv_grad_x(const T* gy, const T* w, T* gx, const ConvDims& d, bool acc = false);
template <class T>
void conv_grad_w(const T* x, const T* gy, T* gw, const ConvDims& d, bool acc = false);
template <class T>
void unary_map(Unary op, const T* x, T* y, std::size_t n);
template <class T>
void binary_map(Binary op, const T* a, const T* b, T* y, std::size_t n);
template <class T>
double reduce_sum(const T* x, std::size_t n);

}  // namespace ref

}  // namespace irmae::kern
