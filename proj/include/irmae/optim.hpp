#pragma once

#include <cstddef>
#include <vector>

#include "irmae/tensor.hpp"

namespace irmae {

// Optimizers update parameters in place from their accumulated .grad().
// step() requires every parameter to carry a gradient; callers zero grads
// between steps via zero_grad().
class Optimizer {
 public:
  explicit Optimizer(std::vector<Tensor> params);
  virtual ~Optimizer() = default;
  Optimizer(const Optimizer&) = delete;
  Optimizer& operator=(const Optimizer&) = delete;

  virtual void step() = 0;
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 protected:
  void require_grads() const;

  std::vector<Tensor> params_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Tensor> params, double lr);
  void step() override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step() override;
  std::size_t step_count() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace irmae
