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

#include "capforge/optim.hpp"

#include "capforge/errors.hpp"

namespace capforge {

void sgd_step(Tensor& param, const Tensor& grad, double learning_rate,
              double weight_decay) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("sgd_step: param " + shape_str(param.shape()) +
                     " vs grad " + shape_str(grad.shape()));
  }
  const auto lr = static_cast<Scalar>(learning_rate);
  const auto wd = static_cast<Scalar>(weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= lr * (grad[i] + wd * param[i]);
  }
}

void sgd_step(std::span<Tensor* const> params,
              std::span<const Tensor* const> grads, double learning_rate,
              double weight_decay) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) +
                     " params but " + std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_step(*params[i], *grads[i], learning_rate, weight_decay);
  }
}

MomentumSgd::MomentumSgd(double learning_rate, double momentum,
                         double weight_decay)
    : learning_rate_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {}

void MomentumSgd::step(std::span<Tensor* const> params,
                       std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("MomentumSgd: " + std::to_string(params.size()) +
                     " params but " + std::to_string(grads.size()) + " grads");
  }
  if (velocity_.empty()) {
    for (const Tensor* p : params) velocity_.emplace_back(p->shape(), Scalar(0));
  }
  if (velocity_.size() != params.size()) {
    throw ShapeError("MomentumSgd: parameter list changed between steps");
  }
  const auto lr = static_cast<Scalar>(learning_rate_);
  const auto mu = static_cast<Scalar>(momentum_);
  const auto wd = static_cast<Scalar>(weight_decay_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = *grads[k];
    Tensor& v = velocity_[k];
    if (p.shape() != g.shape() || p.shape() != v.shape()) {
      throw ShapeError("MomentumSgd: param " + shape_str(p.shape()) + " vs grad " +
                       shape_str(g.shape()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = mu * v[i] + g[i] + wd * p[i];
      p[i] -= lr * v[i];
    }
  }
}

}  // namespace capforge
