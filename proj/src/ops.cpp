#include "irmae/ops.hpp"

#include <cmath>
#include <utility>

#include "irmae/kernels.hpp"

namespace irmae {

namespace {

thread_local GradTape* g_active_tape = nullptr;

}  // namespace

GradTape::GradTape() : prev_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() { g_active_tape = prev_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::function<void()> step) { steps_.push_back(std::move(step)); }

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  loss.ensure_grad();
  dispatch_dtype(loss.dtype(), [&](auto tag) {
    using T = decltype(tag);
    loss.grad().data<T>()[0] += T(1);
  });
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

bool tracing(std::initializer_list<Tensor> inputs) {
  if (!GradTape::active()) return false;
  for (const auto& t : inputs)
    if (t.defined() && t.requires_grad()) return true;
  return false;
}

Tensor make_out(const Shape& shape, DType dt, bool track) {
  Tensor out = Tensor::zeros(shape, dt);
  out.set_requires_grad(track);
  return out;
}

bool has_out_grad(const Tensor& out) { return static_cast<bool>(out.impl()->grad); }

// y[n, c, hw] += b[c] for every sample and spatial position
template <class T>
void add_channel_bias(T* y, const T* b, std::size_t n, std::size_t c, std::size_t hw) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      T* row = y + (i * c + j) * hw;
      for (std::size_t k = 0; k < hw; ++k) row[k] += b[j];
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  check_same_dtype(a, b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const bool track = tracing({a, b});
  Tensor out = make_out({m, n}, a.dtype(), track);
  dispatch_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::matmul_nn(a.data<T>().data(), b.data<T>().data(), out.data<T>().data(), m, k, n);
  });
  if (track) {
    GradTape::active()->record([a, b, out, m, k, n]() {
      if (!has_out_grad(out)) return;
      dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* gy = out.grad().data<T>().data();
        if (a.requires_grad()) {
          a.ensure_grad();
          kern::matmul_nt(gy, b.data<T>().data(), a.grad().data<T>().data(), m, n, k, true);
        }
        if (b.requires_grad()) {
          b.ensure_grad();
          kern::matmul_tn(a.data<T>().data(), gy, b.grad().data<T>().data(), k, m, n, true);
        }
      });
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.shape()[1] != w.shape()[1])
    throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(w.shape()));
  check_same_dtype(x, w, "linear");
  const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[0];
  if (b.defined() && (b.ndim() != 1 || b.shape()[0] != n))
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(n) + " outputs");
  const bool track = b.defined() ? tracing({x, w, b}) : tracing({x, w});
  Tensor out = make_out({m, n}, x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::matmul_nt(x.data<T>().data(), w.data<T>().data(), out.data<T>().data(), m, k, n);
    if (b.defined()) kern::add_row_bias(out.data<T>().data(), b.data<T>().data(), m, n);
  });
  if (track) {
    GradTape::active()->record([x, w, b, out, m, k, n]() {
      if (!has_out_grad(out)) return;
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* gy = out.grad().data<T>().data();
        if (x.requires_grad()) {
          x.ensure_grad();
          kern::matmul_nn(gy, w.data<T>().data(), x.grad().data<T>().data(), m, n, k, true);
        }
        if (w.requires_grad()) {
          w.ensure_grad();
          kern::matmul_tn(gy, x.data<T>().data(), w.grad().data<T>().data(), n, m, k, true);
        }
        if (b.defined() && b.requires_grad()) {
          b.ensure_grad();
          kern::col_sum(gy, b.grad().data<T>().data(), m, n, true);
        }
      });
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw ShapeError("conv2d: expected 4-d input and weights, got " + shape_str(x.shape()) +
                     " and " + shape_str(w.shape()));
  if (x.shape()[1] != w.shape()[1])
    throw ShapeError("conv2d: input channels " + std::to_string(x.shape()[1]) +
                     " do not match weight channels " + std::to_string(w.shape()[1]));
  check_same_dtype(x, w, "conv2d");
  const auto d = kern::conv_dims(x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3],
                                 w.shape()[0], w.shape()[2], w.shape()[3], stride, pad);
  if (b.defined() && (b.ndim() != 1 || b.shape()[0] != d.o))
    throw ShapeError("conv2d: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(d.o) + " output channels");
  const bool track = b.defined() ? tracing({x, w, b}) : tracing({x, w});
  Tensor out = make_out({d.n, d.o, d.oh, d.ow}, x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::conv_fwd(x.data<T>().data(), w.data<T>().data(),
                   b.defined() ? b.data<T>().data() : nullptr, out.data<T>().data(), d);
  });
  if (track) {
    GradTape::active()->record([x, w, b, out, d]() {
      if (!has_out_grad(out)) return;
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* gy = out.grad().data<T>().data();
        if (x.requires_grad()) {
          x.ensure_grad();
          kern::conv_grad_x(gy, w.data<T>().data(), x.grad().data<T>().data(), d, true);
        }
        if (w.requires_grad()) {
          w.ensure_grad();
          kern::conv_grad_w(x.data<T>().data(), gy, w.grad().data<T>().data(), d, true);
        }
        if (b.defined() && b.requires_grad()) {
          b.ensure_grad();
          kern::channel_sum(gy, b.grad().data<T>().data(), d.n, d.o, d.oh * d.ow, true);
        }
      });
    });
  }
  return out;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                        std::size_t pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw ShapeError("conv_transpose2d: expected 4-d input and weights, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (x.shape()[1] != w.shape()[0])
    throw ShapeError("conv_transpose2d: input channels " + std::to_string(x.shape()[1]) +
                     " do not match weight channels " + std::to_string(w.shape()[0]));
  check_same_dtype(x, w, "conv_transpose2d");
  const std::size_t hin = x.shape()[2], win = x.shape()[3];
  const std::size_t kh = w.shape()[2], kw = w.shape()[3];
  if ((hin - 1) * stride + kh < 2 * pad + 1 || (win - 1) * stride + kw < 2 * pad + 1)
    throw ShapeError("conv_transpose2d: output would be empty for input " +
                     shape_str(x.shape()));
  const std::size_t hout = (hin - 1) * stride + kh - 2 * pad;
  const std::size_t wout = (win - 1) * stride + kw - 2 * pad;
  // The transpose is the adjoint of a stride-s correlation running the other
  // way, so dims are built with output and input roles swapped.
  const auto d = kern::conv_dims(x.shape()[0], w.shape()[1], hout, wout, x.shape()[1], kh, kw,
                                 stride, pad);
  if (d.oh != hin || d.ow != win)
    throw ShapeError("conv_transpose2d: input " + shape_str(x.shape()) +
                     " is not reachable by the matching forward convolution");
  if (b.defined() && (b.ndim() != 1 || b.shape()[0] != d.c))
    throw ShapeError("conv_transpose2d: bias " + shape_str(b.shape()) + " does not match " +
                     std::to_string(d.c) + " output channels");
  const bool track = b.defined() ? tracing({x, w, b}) : tracing({x, w});
  Tensor out = make_out({d.n, d.c, hout, wout}, x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::conv_grad_x(x.data<T>().data(), w.data<T>().data(), out.data<T>().data(), d);
    if (b.defined())
      add_channel_bias(out.data<T>().data(), b.data<T>().data(), d.n, d.c, hout * wout);
  });
  if (track) {
    GradTape::active()->record([x, w, b, out, d, hout, wout]() {
      if (!has_out_grad(out)) return;
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* gy = out.grad().data<T>().data();
        if (x.requires_grad()) {
          x.ensure_grad();
          kern::conv_fwd(gy, w.data<T>().data(), static_cast<const T*>(nullptr),
                         x.grad().data<T>().data(), d, true);
        }
        if (w.requires_grad()) {
          w.ensure_grad();
          kern::conv_grad_w(gy, x.data<T>().data(), w.grad().data<T>().data(), d, true);
        }
        if (b.defined() && b.requires_grad()) {
          b.ensure_grad();
          kern::channel_sum(gy, b.grad().data<T>().data(), d.n, d.c, hout * wout, true);
        }
      });
    });
  }
  return out;
}

namespace {

Tensor unary_op(kern::Unary uop, const Tensor& x) {
  const bool track = tracing({x});
  Tensor out = make_out(x.shape(), x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::unary_map(uop, x.data<T>().data(), out.data<T>().data(), x.numel());
  });
  if (track) {
    GradTape::active()->record([uop, x, out]() {
      if (!has_out_grad(out)) return;
      x.ensure_grad();
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kern::unary_grad(uop, x.data<T>().data(), out.data<T>().data(),
                         out.grad().data<T>().data(), x.grad().data<T>().data(), x.numel());
      });
    });
  }
  return out;
}

Tensor binary_op(kern::Binary bop, const Tensor& a, const Tensor& b, const char* name) {
  check_same_shape(a, b, name);
  check_same_dtype(a, b, name);
  const bool track = tracing({a, b});
  Tensor out = make_out(a.shape(), a.dtype(), track);
  dispatch_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::binary_map(bop, a.data<T>().data(), b.data<T>().data(), out.data<T>().data(),
                     a.numel());
  });
  if (track) {
    GradTape::active()->record([bop, a, b, out]() {
      if (!has_out_grad(out)) return;
      dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* gy = out.grad().data<T>().data();
        const std::size_t n = a.numel();
        if (a.requires_grad()) {
          a.ensure_grad();
          T* ga = a.grad().data<T>().data();
          if (bop == kern::Binary::mul)
            kern::acc_mul(gy, b.data<T>().data(), ga, n);
          else
            kern::acc_axpy(T(1), gy, ga, n);
        }
        if (b.requires_grad()) {
          b.ensure_grad();
          T* gb = b.grad().data<T>().data();
          if (bop == kern::Binary::mul)
            kern::acc_mul(gy, a.data<T>().data(), gb, n);
          else
            kern::acc_axpy(bop == kern::Binary::sub ? T(-1) : T(1), gy, gb, n);
        }
      });
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) { return unary_op(kern::Unary::relu, x); }
Tensor tanh(const Tensor& x) { return unary_op(kern::Unary::tanh, x); }
Tensor sigmoid(const Tensor& x) { return unary_op(kern::Unary::sigmoid, x); }
Tensor exp(const Tensor& x) { return unary_op(kern::Unary::exp, x); }

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(kern::Binary::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(kern::Binary::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(kern::Binary::mul, a, b, "mul"); }

Tensor scale(const Tensor& x, double s) {
  const bool track = tracing({x});
  Tensor out = make_out(x.shape(), x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    kern::scale_map(x.data<T>().data(), static_cast<T>(s), out.data<T>().data(), x.numel());
  });
  if (track) {
    GradTape::active()->record([x, out, s]() {
      if (!has_out_grad(out) || !x.requires_grad()) return;
      x.ensure_grad();
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kern::acc_axpy(static_cast<T>(s), out.grad().data<T>().data(),
                       x.grad().data<T>().data(), x.numel());
      });
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  const bool track = tracing({x});
  Tensor out = make_out(shape, x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.data<T>();
    std::copy(src.begin(), src.end(), dst.begin());
  });
  if (track) {
    GradTape::active()->record([x, out]() {
      if (!has_out_grad(out) || !x.requires_grad()) return;
      x.ensure_grad();
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kern::acc_axpy(T(1), out.grad().data<T>().data(), x.grad().data<T>().data(), x.numel());
      });
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi) {
  if (x.ndim() != 2)
    throw ShapeError("slice_cols: expected a 2-d tensor, got " + shape_str(x.shape()));
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (lo >= hi || hi > cols)
    throw ShapeError("slice_cols: range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                     ") invalid for " + std::to_string(cols) + " columns");
  const std::size_t width = hi - lo;
  const bool track = tracing({x});
  Tensor out = make_out({rows, width}, x.dtype(), track);
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* src = x.data<T>().data();
    T* dst = out.data<T>().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < width; ++j) dst[r * width + j] = src[r * cols + lo + j];
  });
  if (track) {
    GradTape::active()->record([x, out, lo, rows, cols, width]() {
      if (!has_out_grad(out) || !x.requires_grad()) return;
      x.ensure_grad();
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* gy = out.grad().data<T>().data();
        T* gx = x.grad().data<T>().data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < width; ++j) gx[r * cols + lo + j] += gy[r * width + j];
      });
    });
  }
  return out;
}

namespace {

// Scalar-producing reductions share this skeleton: forward value plus an
// elementwise d(value)/dx used as gy * coeff(x_i) in the replay step.
template <class Fwd, class Coeff>
Tensor reduction_op(const Tensor& x, Fwd fwd, Coeff coeff) {
  const bool track = tracing({x});
  Tensor out = make_out({1}, x.dtype(), track);
  const double value = fwd();
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    out.data<T>()[0] = static_cast<T>(value);
  });
  if (track) {
    GradTape::active()->record([x, out, coeff]() {
      if (!has_out_grad(out) || !x.requires_grad()) return;
      x.ensure_grad();
      dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const double g = static_cast<double>(out.grad().data<T>()[0]);
        const T* xd = x.data<T>().data();
        T* gx = x.grad().data<T>().data();
        const std::size_t n = x.numel();
        for (std::size_t i = 0; i < n; ++i)
          gx[i] += static_cast<T>(g * coeff(static_cast<double>(xd[i])));
      });
    });
  }
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) {
  return reduction_op(
      x,
      [&]() {
        return dispatch_dtype(x.dtype(), [&](auto tag) {
          using T = decltype(tag);
          return kern::reduce_sum(x.data<T>().data(), x.numel());
        });
      },
      [](double) { return 1.0; });
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  return reduction_op(
      x,
      [&]() {
        return inv * dispatch_dtype(x.dtype(), [&](auto tag) {
                 using T = decltype(tag);
                 return kern::reduce_sum(x.data<T>().data(), x.numel());
               });
      },
      [inv](double) { return inv; });
}

Tensor mean_abs(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  return reduction_op(
      x,
      [&]() {
        return inv * dispatch_dtype(x.dtype(), [&](auto tag) {
                 using T = decltype(tag);
                 return kern::reduce_abs(x.data<T>().data(), x.numel());
               });
      },
      [inv](double v) { return v > 0.0 ? inv : (v < 0.0 ? -inv : 0.0); });
}

Tensor mean_sq(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  return reduction_op(
      x,
      [&]() {
        return inv * dispatch_dtype(x.dtype(), [&](auto tag) {
                 using T = decltype(tag);
                 return kern::reduce_sq(x.data<T>().data(), x.numel());
               });
      },
      [inv](double v) { return 2.0 * inv * v; });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse_loss");
  check_same_dtype(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  const bool track = tracing({pred});
  Tensor out = make_out({1}, pred.dtype(), track);
  dispatch_dtype(pred.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const double total = kern::reduce_sq_diff(pred.data<T>().data(), target.data<T>().data(), n);
    out.data<T>()[0] = static_cast<T>(total / static_cast<double>(n));
  });
  if (track) {
    GradTape::active()->record([pred, target, out, n]() {
      if (!has_out_grad(out) || !pred.requires_grad()) return;
      pred.ensure_grad();
      dispatch_dtype(pred.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T g = out.grad().data<T>()[0];
        const T c = T(2) * g / static_cast<T>(n);
        std::vector<T> diff(n);
        kern::binary_map(kern::Binary::sub, pred.data<T>().data(), target.data<T>().data(),
                         diff.data(), n);
        kern::acc_axpy(c, diff.data(), pred.grad().data<T>().data(), n);
      });
    });
  }
  return out;
}

Tensor penalty(const Tensor& code, Penalty kind, double weight) {
  if (weight < 0.0) throw ValueError("penalty: negative weight " + std::to_string(weight));
  return scale(kind == Penalty::l1 ? mean_abs(code) : mean_sq(code), weight);
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw ShapeError("softmax_cross_entropy: expected 2-d logits, got " +
                     shape_str(logits.shape()));
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (labels.size() != rows)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(rows) + " rows");
  for (int lab : labels)
    if (lab < 0 || static_cast<std::size_t>(lab) >= cols)
      throw ValueError("softmax_cross_entropy: label " + std::to_string(lab) +
                       " outside [0, " + std::to_string(cols) + ")");
  const bool track = tracing({logits});
  Tensor out = make_out({1}, logits.dtype(), track);
  dispatch_dtype(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* ld = logits.data<T>().data();
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = ld + r * cols;
      double mx = static_cast<double>(row[0]);
      for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double se = 0.0;
      for (std::size_t j = 0; j < cols; ++j) se += std::exp(static_cast<double>(row[j]) - mx);
      total += mx + std::log(se) - static_cast<double>(row[labels[r]]);
    }
    out.data<T>()[0] = static_cast<T>(total / static_cast<double>(rows));
  });
  if (track) {
    GradTape::active()->record([logits, labels, out, rows, cols]() {
      if (!has_out_grad(out) || !logits.requires_grad()) return;
      logits.ensure_grad();
      dispatch_dtype(logits.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const double g =
            static_cast<double>(out.grad().data<T>()[0]) / static_cast<double>(rows);
        const T* ld = logits.data<T>().data();
        T* gl = logits.grad().data<T>().data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* row = ld + r * cols;
          double mx = static_cast<double>(row[0]);
          for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(row[j]));
          double se = 0.0;
          for (std::size_t j = 0; j < cols; ++j) se += std::exp(static_cast<double>(row[j]) - mx);
          for (std::size_t j = 0; j < cols; ++j) {
            const double p = std::exp(static_cast<double>(row[j]) - mx) / se;
            const double hot = static_cast<std::size_t>(labels[r]) == j ? 1.0 : 0.0;
            gl[r * cols + j] += static_cast<T>(g * (p - hot));
          }
        }
      });
    });
  }
  return out;
}

Tensor gaussian_kl(const Tensor& mu, const Tensor& logvar) {
  check_same_shape(mu, logvar, "gaussian_kl");
  check_same_dtype(mu, logvar, "gaussian_kl");
  if (mu.ndim() != 2)
    throw ShapeError("gaussian_kl: expected 2-d inputs, got " + shape_str(mu.shape()));
  const std::size_t rows = mu.shape()[0];
  const std::size_t n = mu.numel();
  const bool track = tracing({mu, logvar});
  Tensor out = make_out({1}, mu.dtype(), track);
  dispatch_dtype(mu.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* md = mu.data<T>().data();
    const T* vd = logvar.data<T>().data();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = static_cast<double>(md[i]);
      const double lv = static_cast<double>(vd[i]);
      // 0.5 (e^lv + m^2 - 1 - lv), written with expm1 so it is exactly >= 0
      const double term = 0.5 * (std::expm1(lv) - lv + m * m);
      total += term > 0.0 ? term : 0.0;
    }
    out.data<T>()[0] = static_cast<T>(total / static_cast<double>(rows));
  });
  if (track) {
    GradTape::active()->record([mu, logvar, out, rows, n]() {
      if (!has_out_grad(out)) return;
      dispatch_dtype(mu.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const double g =
            static_cast<double>(out.grad().data<T>()[0]) / static_cast<double>(rows);
        if (mu.requires_grad()) {
          mu.ensure_grad();
          const T* md = mu.data<T>().data();
          T* gm = mu.grad().data<T>().data();
          for (std::size_t i = 0; i < n; ++i)
            gm[i] += static_cast<T>(g * static_cast<double>(md[i]));
        }
        if (logvar.requires_grad()) {
          logvar.ensure_grad();
          const T* vd = logvar.data<T>().data();
          T* gv = logvar.grad().data<T>().data();
          for (std::size_t i = 0; i < n; ++i)
            gv[i] += static_cast<T>(g * 0.5 * std::expm1(static_cast<double>(vd[i])));
        }
      });
    });
  }
  return out;
}

}  // namespace ops

}  // namespace irmae
