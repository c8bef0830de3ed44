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

#ifndef CAPFORGE_OPS_HPP_
#define CAPFORGE_OPS_HPP_

#include <cstddef>

#include "capforge/tensor.hpp"

// Forward kernels and their adjoints. Every function here is pure except the
// train-mode batch norm, which updates the running statistics it is handed.
namespace capforge::ops {

struct ConvParams {
  Tensor weights;  // (outC, inC, kH, kW)
  Tensor bias;     // (outC)
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel_h() const { return weights.dim(2); }
  std::size_t kernel_w() const { return weights.dim(3); }
  // Output extent along one spatial axis, or 0 when the kernel does not fit.
  std::size_t out_extent(std::size_t in, std::size_t kernel) const;
};

struct BatchNormParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  Scalar epsilon = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);

  static BatchNormParams identity(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }
};

enum class Mode { kTrain, kInfer };

// --- convolution ---------------------------------------------------------

Tensor conv2d(const Tensor& input, const ConvParams& params);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_output);

// --- batch norm ----------------------------------------------------------

// Saved activations from a train-mode pass.
struct BatchNormCache {
  Tensor normalized;       // x_hat, same shape as the input
  std::vector<Scalar> inv_std;  // per channel
};

// Train mode normalizes by batch statistics and folds them into the running
// averages held by `params`; infer mode reads the running averages only.
Tensor batch_norm(const Tensor& input, BatchNormParams& params, Mode mode,
                  BatchNormCache* cache = nullptr);
Tensor batch_norm_infer(const Tensor& input, const BatchNormParams& params);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
BatchNormGrads batch_norm_backward(const BatchNormCache& cache,
                                   const Tensor& gamma,
                                   const Tensor& grad_output);
// Gradient of the infer-mode (fixed statistics) transform.
BatchNormGrads batch_norm_infer_backward(const Tensor& input,
                                         const BatchNormParams& params,
                                         const Tensor& grad_output);

// --- elementwise ---------------------------------------------------------

Tensor relu(const Tensor& input);
// relu'(0) is taken as 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

// Elementwise logistic function; never normalizes across elements.
Tensor sigmoid(const Tensor& input);
Scalar sigmoid(Scalar x);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output);

Tensor tanh(const Tensor& input);
Tensor tanh_backward(const Tensor& output, const Tensor& grad_output);

Tensor add(const Tensor& a, const Tensor& b);

// --- pooling / dense -----------------------------------------------------

// NCHW -> NxC mean over each spatial plane; H and W need not match.
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape,
                                const Tensor& grad_output);

// (N x D) * (D x K) + bias(K) -> (N x K)
Tensor affine(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct AffineGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
AffineGrads affine_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_output);

// Row-wise L2 normalization of an N x D matrix. Throws InvalidArgument when
// a row has zero norm.
Tensor l2_normalize_rows(const Tensor& input);
Tensor l2_normalize_rows_backward(const Tensor& input, const Tensor& output,
                                  const Tensor& grad_output);

}  // namespace capforge::ops

#endif  // CAPFORGE_OPS_HPP_
