#include "irmae/optim.hpp"

#include <cmath>
#include <utility>

#include "irmae/kernels.hpp"

namespace irmae {

Optimizer::Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {
  for (const auto& p : params_)
    if (!p.defined()) throw ValueError("optimizer: undefined parameter tensor");
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::require_grads() const {
  for (const auto& p : params_)
    if (!p.impl()->grad)
      throw ValueError("optimizer: parameter " + shape_str(p.shape()) + " has no gradient");
}

Sgd::Sgd(std::vector<Tensor> params, double lr) : Optimizer(std::move(params)), lr_(lr) {}

void Sgd::step() {
  require_grads();
  for (auto& p : params_) {
    dispatch_dtype(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      kern::sgd_update(p.data<T>().data(), p.grad().data<T>().data(), p.numel(),
                       static_cast<T>(lr_));
    });
  }
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.shape(), p.dtype()));
    v_.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
}

void Adam::step() {
  require_grads();
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    dispatch_dtype(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      kern::adam_update(p.data<T>().data(), p.grad().data<T>().data(), m_[i].data<T>().data(),
                        v_[i].data<T>().data(), p.numel(), static_cast<T>(lr_),
                        static_cast<T>(beta1_), static_cast<T>(beta2_), static_cast<T>(eps_),
                        static_cast<T>(bias1), static_cast<T>(bias2));
    });
  }
}

}  // namespace irmae
