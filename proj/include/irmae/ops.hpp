#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "irmae/tensor.hpp"

namespace irmae {

// Reverse-mode tape. Constructing one makes it the active tape for the
// current thread (restoring the previous one on destruction, so tapes nest).
// Ops push one replay step per recorded operation; backward() seeds the loss
// gradient with 1 and runs the steps in reverse, accumulating into .grad().
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  void record(std::function<void()> step);
  void backward(const Tensor& loss);
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  GradTape* prev_;
};

namespace ops {

// a[m,k] . b[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[m,k] . w[n,k]^T (+ b[n] when defined) -> [m,n]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// x[N,C,H,W], w[O,C,kh,kw], optional b[O]; stride-2 pad-1 4x4 by default
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride = 2,
              std::size_t pad = 1);
// x[N,C,H,W], w[C,O,kh,kw], optional b[O]; exact adjoint of conv2d, H -> 2H
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        std::size_t stride = 2, std::size_t pad = 1);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);

Tensor reshape(const Tensor& x, const Shape& shape);
// columns [lo, hi) of a [n, c] matrix
Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi);

// Scalars below have shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_abs(const Tensor& x);
Tensor mean_sq(const Tensor& x);
// mean over all elements of (pred - target)^2, target treated as constant
Tensor mse_loss(const Tensor& pred, const Tensor& target);
enum class Penalty { l1, l2 };
// weight * mean(|z|) or weight * mean(z^2); weight must be >= 0
Tensor penalty(const Tensor& code, Penalty kind, double weight);

// mean over rows of -log softmax(logits)[label]
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
// mean over rows of sum_j 0.5 (e^lv + mu^2 - 1 - lv); each term clamped at 0
Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar);

}  // namespace ops

}  // namespace irmae
