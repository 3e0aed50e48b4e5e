#include "irmae/tensor.hpp"

#include <sstream>

namespace irmae {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, DType dtype) {
  auto impl = std::make_shared<TensorImpl>();
  impl->dtype = dtype;
  std::size_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  if (dtype == DType::f32)
    impl->f32.assign(n, 0.0f);
  else
    impl->f64.assign(n, 0.0);
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  Tensor t(make_impl(std::move(shape), dtype));
  t.impl()->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(make_impl(std::move(shape), dtype));
  auto& impl = *t.impl();
  if (dtype == DType::f32)
    impl.f32.assign(impl.f32.size(), static_cast<float>(value));
  else
    impl.f64.assign(impl.f64.size(), value);
  return t;
}

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

Tensor Tensor::from(std::vector<float> values, Shape shape) {
  if (values.size() != shape_numel(shape))
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->dtype = DType::f32;
  impl->shape = std::move(shape);
  impl->f32 = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(std::vector<double> values, Shape shape) {
  if (values.size() != shape_numel(shape))
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->dtype = DType::f64;
  impl->shape = std::move(shape);
  impl->f64 = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::identity(std::size_t n, DType dtype) {
  Tensor t = zeros({n, n}, dtype);
  for (std::size_t i = 0; i < n; ++i) t.set(i * n + i, 1.0);
  return t;
}

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

double Tensor::at(std::size_t i) const {
  return impl_->dtype == DType::f32 ? static_cast<double>(impl_->f32[i]) : impl_->f64[i];
}

void Tensor::set(std::size_t i, double value) {
  if (impl_->dtype == DType::f32)
    impl_->f32[i] = static_cast<float>(value);
  else
    impl_->f64[i] = value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor has shape " + shape_str(shape()));
  return at(0);
}

Tensor Tensor::grad() const {
  if (!impl_->grad) return Tensor();
  return Tensor(impl_->grad);
}

void Tensor::ensure_grad() const {
  if (!impl_->grad) impl_->grad = make_impl(impl_->shape, impl_->dtype);
}

void Tensor::zero_grad() const {
  if (!impl_->grad) return;
  if (impl_->dtype == DType::f32)
    impl_->grad->f32.assign(impl_->grad->f32.size(), 0.0f);
  else
    impl_->grad->f64.assign(impl_->grad->f64.size(), 0.0);
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->f32 = impl_->f32;
  impl->f64 = impl_->f64;
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == impl_->dtype) return clone();
  Tensor out = zeros(impl_->shape, dtype);
  std::size_t n = numel();
  for (std::size_t i = 0; i < n; ++i) out.set(i, at(i));
  return out;
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->dtype = impl_->dtype;
  impl->f32 = impl_->f32;  // copy keeps the detached value stable
  impl->f64 = impl_->f64;
  impl->requires_grad = false;
  return Tensor(std::move(impl));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype())
    throw ValueError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                     dtype_name(b.dtype()));
}

}  // namespace irmae
