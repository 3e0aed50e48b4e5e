#pragma once

#include <memory>
#include <span>
#include <vector>

#include "irmae/common.hpp"

namespace irmae {

enum class DType { f32, f64 };

inline const char* dtype_name(DType d) { return d == DType::f32 ? "f32" : "f64"; }

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  std::vector<float> f32;
  std::vector<double> f64;
  bool requires_grad = false;
  std::shared_ptr<TensorImpl> grad;  // same shape/dtype, allocated on demand
};

// Dense row-major n-d array. Shared-ownership handle: copies alias the same
// storage, clone() deep-copies. All numerics in the project ride on this.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32, bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor ones(Shape shape, DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);
  static Tensor from(std::vector<float> values, Shape shape);
  static Tensor from(std::vector<double> values, Shape shape);
  static Tensor identity(std::size_t n, DType dtype = DType::f32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t size(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return shape_numel(impl_->shape); }
  DType dtype() const { return impl_->dtype; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool value);

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  // Element access as double regardless of dtype (linear row-major index).
  double at(std::size_t i) const;
  void set(std::size_t i, double value);
  double item() const;  // scalar tensors only

  // Gradient handle; undefined Tensor if no grad has been accumulated.
  Tensor grad() const;
  void ensure_grad() const;
  void zero_grad() const;

  Tensor clone() const;
  Tensor to(DType dtype) const;
  Tensor detach() const;  // same storage, requires_grad off, no grad

  std::shared_ptr<TensorImpl> impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

template <>
inline std::span<float> Tensor::data<float>() {
  if (impl_->dtype != DType::f32) throw ValueError("tensor is not f32");
  return impl_->f32;
}
template <>
inline std::span<double> Tensor::data<double>() {
  if (impl_->dtype != DType::f64) throw ValueError("tensor is not f64");
  return impl_->f64;
}
template <>
inline std::span<const float> Tensor::data<float>() const {
  if (impl_->dtype != DType::f32) throw ValueError("tensor is not f32");
  return impl_->f32;
}
template <>
inline std::span<const double> Tensor::data<double>() const {
  if (impl_->dtype != DType::f64) throw ValueError("tensor is not f64");
  return impl_->f64;
}

// Calls f(T{}) with T = float or double matching `dtype`.
template <class F>
decltype(auto) dispatch_dtype(DType dtype, F&& f) {
  if (dtype == DType::f32) return f(float{});
  return f(double{});
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);
void check_same_dtype(const Tensor& a, const Tensor& b, const char* op);

}  // namespace irmae
