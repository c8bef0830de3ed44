// Copyright 2026 The Caption Forge Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CAPFORGE_OPTIM_HPP_
#define CAPFORGE_OPTIM_HPP_

#include <span>
#include <vector>

#include "capforge/tensor.hpp"

namespace capforge {

// p <- p - lr * (g + weight_decay * p), elementwise.
void sgd_step(Tensor& param, const Tensor& grad, double learning_rate,
              double weight_decay);

void sgd_step(std::span<Tensor* const> params,
              std::span<const Tensor* const> grads, double learning_rate,
              double weight_decay);

// Heavy-ball SGD: v <- mu * v + g + wd * p; p <- p - lr * v. Velocity buffers
// are created on the first step and matched to parameters by position.
class MomentumSgd {
 public:
  MomentumSgd(double learning_rate, double momentum, double weight_decay);

  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads);
  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double learning_rate() const { return learning_rate_; }

 private:
  double learning_rate_;
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

}  // namespace capforge

#endif  // CAPFORGE_OPTIM_HPP_
