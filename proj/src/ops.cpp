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

#include "capforge/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "capforge/errors.hpp"

namespace capforge::ops {
namespace {

using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::string dims(const Tensor& t) { return shape_str(t.shape()); }

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must be rank " +
                     std::to_string(rank) + ", got " + dims(t));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + dims(a) + " and " +
                     dims(b) + " differ");
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, oc, kh, kw, oh, ow, stride, pad;
  std::size_t col_rows() const { return c * kh * kw; }
  std::size_t col_cols() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& input, const ConvParams& params) {
  require_rank(input, 4, "conv2d input");
  require_rank(params.weights, 4, "conv2d weights");
  if (params.stride < 1) throw InvalidArgument("conv2d stride must be >= 1");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.oc = params.out_channels();
  g.kh = params.kernel_h();
  g.kw = params.kernel_w();
  g.stride = params.stride;
  g.pad = params.padding;
  if (params.in_channels() != g.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) +
                     " channels but weights " + dims(params.weights) +
                     " expect " + std::to_string(params.in_channels()));
  }
  if (params.bias.size() != g.oc) {
    throw ShapeError("conv2d: bias length " +
                     std::to_string(params.bias.size()) + " != outC " +
                     std::to_string(g.oc));
  }
  g.oh = params.out_extent(g.h, g.kh);
  g.ow = params.out_extent(g.w, g.kw);
  if (g.oh == 0 || g.ow == 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.kh) + "x" +
                     std::to_string(g.kw) + " does not fit input " + dims(input) +
                     " with padding " + std::to_string(g.pad));
  }
  return g;
}

// Unfolds one image (C x H x W) into a (C*kH*kW) x (oH*oW) column matrix.
void im2col(const Scalar* image, const ConvGeometry& g, Scalar* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        Scalar* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const auto y = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const auto x =
                static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            const bool inside = y >= 0 && x >= 0 &&
                                y < static_cast<std::ptrdiff_t>(g.h) &&
                                x < static_cast<std::ptrdiff_t>(g.w);
            row[oi * g.ow + oj] =
                inside ? image[(c * g.h + static_cast<std::size_t>(y)) * g.w +
                               static_cast<std::size_t>(x)]
                       : Scalar(0);
          }
        }
      }
    }
  }
}

void col2im(const Scalar* col, const ConvGeometry& g, Scalar* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const Scalar* row = col + ((c * g.kh + ki) * g.kw + kj) * g.col_cols();
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const auto y = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const auto x =
                static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.w)) continue;
            image[(c * g.h + static_cast<std::size_t>(y)) * g.w +
                  static_cast<std::size_t>(x)] += row[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

// Channel axis is 1; everything after it is "spatial".
struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

ChannelLayout channel_layout(const Tensor& t) {
  if (t.rank() < 2) {
    throw ShapeError("batch_norm input must have a channel axis, got " + dims(t));
  }
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < t.rank(); ++i) spatial *= t.dim(i);
  return {t.dim(0), t.dim(1), spatial};
}

}  // namespace

std::size_t ConvParams::out_extent(std::size_t in, std::size_t kernel) const {
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel || stride == 0) return 0;
  return (padded - kernel) / stride + 1;
}

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Tensor({channels}, Scalar(1));
  p.beta = Tensor({channels}, Scalar(0));
  p.running_mean = Tensor({channels}, Scalar(0));
  p.running_var = Tensor({channels}, Scalar(1));
  return p;
}

Tensor conv2d(const Tensor& input, const ConvParams& params) {
  const ConvGeometry g = conv_geometry(input, params);
  Tensor output({g.n, g.oc, g.oh, g.ow});
  Buffer col(g.col_rows() * g.col_cols());
  ConstMatMap weights(params.weights.ptr(), static_cast<Eigen::Index>(g.oc),
                      static_cast<Eigen::Index>(g.col_rows()));
  ConstMatMap col_mat(col.data(), static_cast<Eigen::Index>(g.col_rows()),
                      static_cast<Eigen::Index>(g.col_cols()));
  const std::size_t in_stride = g.c * g.h * g.w;
  const std::size_t out_stride = g.oc * g.oh * g.ow;
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(input.ptr() + n * in_stride, g, col.data());
    MatMap out(output.ptr() + n * out_stride, static_cast<Eigen::Index>(g.oc),
               static_cast<Eigen::Index>(g.col_cols()));
    out.noalias() = weights * col_mat;
    for (std::size_t o = 0; o < g.oc; ++o) {
      out.row(static_cast<Eigen::Index>(o)).array() += params.bias[o];
    }
  }
  return output;
}

ConvGrads conv2d_backward(const Tensor& input, const ConvParams& params,
                          const Tensor& grad_output) {
  const ConvGeometry g = conv_geometry(input, params);
  if (grad_output.shape() != Shape{g.n, g.oc, g.oh, g.ow}) {
    throw ShapeError("conv2d_backward: grad " + dims(grad_output) +
                     " does not match output shape");
  }
  ConvGrads grads{Tensor(input.shape()), Tensor(params.weights.shape()),
                  Tensor(params.bias.shape())};
  Buffer col(g.col_rows() * g.col_cols());
  Buffer dcol(col.size());
  const auto rows = static_cast<Eigen::Index>(g.col_rows());
  const auto cols = static_cast<Eigen::Index>(g.col_cols());
  const auto oc = static_cast<Eigen::Index>(g.oc);
  ConstMatMap weights(params.weights.ptr(), oc, rows);
  MatMap dweights(grads.weights.ptr(), oc, rows);
  ConstMatMap col_mat(col.data(), rows, cols);
  MatMap dcol_mat(dcol.data(), rows, cols);
  const std::size_t in_stride = g.c * g.h * g.w;
  const std::size_t out_stride = g.oc * g.oh * g.ow;
  for (std::size_t n = 0; n < g.n; ++n) {
    ConstMatMap dout(grad_output.ptr() + n * out_stride, oc, cols);
    im2col(input.ptr() + n * in_stride, g, col.data());
    dweights.noalias() += dout * col_mat.transpose();
    dcol_mat.noalias() = weights.transpose() * dout;
    col2im(dcol.data(), g, grads.input.ptr() + n * in_stride);
    const Scalar* d = grad_output.ptr() + n * out_stride;
    for (std::size_t o = 0; o < g.oc; ++o) {
      Scalar acc = 0;
      for (std::size_t j = 0; j < g.col_cols(); ++j) acc += d[o * g.col_cols() + j];
      grads.bias[o] += acc;
    }
  }
  return grads;
}

Tensor batch_norm(const Tensor& input, BatchNormParams& params, Mode mode,
                  BatchNormCache* cache) {
  if (mode == Mode::kInfer) return batch_norm_infer(input, params);
  if (input.empty()) throw InvalidArgument("batch_norm: empty batch in train mode");
  const ChannelLayout l = channel_layout(input);
  if (l.channels != params.channels()) {
    throw ShapeError("batch_norm: input has " + std::to_string(l.channels) +
                     " channels, params have " +
                     std::to_string(params.channels()));
  }
  const auto count = static_cast<Scalar>(l.batch * l.spatial);
  Tensor output(input.shape());
  Tensor normalized(input.shape());
  std::vector<Scalar> inv_std(l.channels);
  for (std::size_t c = 0; c < l.channels; ++c) {
    Scalar sum = 0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const Scalar* p = input.ptr() + (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) sum += p[s];
    }
    const Scalar mean = sum / count;
    Scalar sq = 0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const Scalar* p = input.ptr() + (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) sq += (p[s] - mean) * (p[s] - mean);
    }
    const Scalar var = sq / count;
    inv_std[c] = Scalar(1) / std::sqrt(var + params.epsilon);
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const Scalar xhat = (input[off + s] - mean) * inv_std[c];
        normalized[off + s] = xhat;
        output[off + s] = params.gamma[c] * xhat + params.beta[c];
      }
    }
    const Scalar m = params.momentum;
    params.running_mean[c] = (1 - m) * params.running_mean[c] + m * mean;
    params.running_var[c] = (1 - m) * params.running_var[c] + m * var;
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return output;
}

Tensor batch_norm_infer(const Tensor& input, const BatchNormParams& params) {
  const ChannelLayout l = channel_layout(input);
  if (l.channels != params.channels()) {
    throw ShapeError("batch_norm: input has " + std::to_string(l.channels) +
                     " channels, params have " +
                     std::to_string(params.channels()));
  }
  Tensor output(input.shape());
  for (std::size_t c = 0; c < l.channels; ++c) {
    const Scalar scale =
        params.gamma[c] / std::sqrt(params.running_var[c] + params.epsilon);
    const Scalar mean = params.running_mean[c];
    const Scalar beta = params.beta[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        output[off + s] = scale * (input[off + s] - mean) + beta;
      }
    }
  }
  return output;
}

BatchNormGrads batch_norm_backward(const BatchNormCache& cache,
                                   const Tensor& gamma,
                                   const Tensor& grad_output) {
  require_same_shape(cache.normalized, grad_output, "batch_norm_backward");
  const ChannelLayout l = channel_layout(grad_output);
  const auto count = static_cast<Scalar>(l.batch * l.spatial);
  BatchNormGrads grads{Tensor(grad_output.shape()), Tensor(gamma.shape()),
                       Tensor(gamma.shape())};
  for (std::size_t c = 0; c < l.channels; ++c) {
    Scalar sum_dy = 0;
    Scalar sum_dy_xhat = 0;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        sum_dy += grad_output[off + s];
        sum_dy_xhat += grad_output[off + s] * cache.normalized[off + s];
      }
    }
    grads.beta[c] = sum_dy;
    grads.gamma[c] = sum_dy_xhat;
    const Scalar k = gamma[c] * cache.inv_std[c] / count;
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        grads.input[off + s] =
            k * (count * grad_output[off + s] - sum_dy -
                 cache.normalized[off + s] * sum_dy_xhat);
      }
    }
  }
  return grads;
}

BatchNormGrads batch_norm_infer_backward(const Tensor& input,
                                         const BatchNormParams& params,
                                         const Tensor& grad_output) {
  require_same_shape(input, grad_output, "batch_norm_infer_backward");
  const ChannelLayout l = channel_layout(input);
  BatchNormGrads grads{Tensor(input.shape()), Tensor(params.gamma.shape()),
                       Tensor(params.gamma.shape())};
  for (std::size_t c = 0; c < l.channels; ++c) {
    const Scalar inv_std =
        Scalar(1) / std::sqrt(params.running_var[c] + params.epsilon);
    const Scalar mean = params.running_mean[c];
    for (std::size_t n = 0; n < l.batch; ++n) {
      const std::size_t off = (n * l.channels + c) * l.spatial;
      for (std::size_t s = 0; s < l.spatial; ++s) {
        const Scalar dy = grad_output[off + s];
        grads.beta[c] += dy;
        grads.gamma[c] += dy * (input[off + s] - mean) * inv_std;
        grads.input[off + s] = dy * params.gamma[c] * inv_std;
      }
    }
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0 ? input[i] : Scalar(0);
  }
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  require_same_shape(input, grad_output, "relu_backward");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0 ? grad_output[i] : Scalar(0);
  }
  return out;
}

Scalar sigmoid(Scalar x) {
  // Branch on sign so exp() never overflows; clamp so the result stays in the
  // open interval even where it would round to 0 or 1.
  Scalar s;
  if (x >= 0) {
    s = Scalar(1) / (Scalar(1) + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    s = e / (Scalar(1) + e);
  }
  return std::clamp(s, std::numeric_limits<Scalar>::denorm_min(),
                    std::nextafter(Scalar(1), Scalar(0)));
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = sigmoid(input[i]);
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output) {
  require_same_shape(output, grad_output, "sigmoid_backward");
  Tensor out(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    out[i] = grad_output[i] * output[i] * (1 - output[i]);
  }
  return out;
}

Tensor tanh(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::tanh(input[i]);
  return out;
}

Tensor tanh_backward(const Tensor& output, const Tensor& grad_output) {
  require_same_shape(output, grad_output, "tanh_backward");
  Tensor out(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    out[i] = grad_output[i] * (1 - output[i] * output[i]);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool input");
  const std::size_t n = input.dim(0), c = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    const Scalar* p = input.ptr() + i * plane;
    Scalar sum = 0;
    for (std::size_t s = 0; s < plane; ++s) sum += p[s];
    out[i] = sum / static_cast<Scalar>(plane);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape,
                                const Tensor& grad_output) {
  if (input_shape.size() != 4 ||
      grad_output.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool_backward: grad " + dims(grad_output) +
                     " vs input " + shape_str(input_shape));
  }
  Tensor out(input_shape);
  const std::size_t plane = input_shape[2] * input_shape[3];
  const auto inv = Scalar(1) / static_cast<Scalar>(plane);
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    Scalar* p = out.ptr() + i * plane;
    for (std::size_t s = 0; s < plane; ++s) p[s] = grad_output[i] * inv;
  }
  return out;
}

Tensor affine(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_rank(input, 2, "affine input");
  require_rank(weights, 2, "affine weights");
  if (input.dim(1) != weights.dim(0)) {
    throw ShapeError("affine: input " + dims(input) + " and weights " +
                     dims(weights) + " inner dimensions disagree");
  }
  if (bias.size() != weights.dim(1)) {
    throw ShapeError("affine: bias length " + std::to_string(bias.size()) +
                     " != output width " + std::to_string(weights.dim(1)));
  }
  const auto n = static_cast<Eigen::Index>(input.dim(0));
  const auto d = static_cast<Eigen::Index>(input.dim(1));
  const auto k = static_cast<Eigen::Index>(weights.dim(1));
  Tensor out({input.dim(0), weights.dim(1)});
  MatMap o(out.ptr(), n, k);
  o.noalias() = ConstMatMap(input.ptr(), n, d) * ConstMatMap(weights.ptr(), d, k);
  Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> b(bias.ptr(), k);
  o.rowwise() += b;
  return out;
}

AffineGrads affine_backward(const Tensor& input, const Tensor& weights,
                            const Tensor& grad_output) {
  require_rank(input, 2, "affine input");
  require_rank(weights, 2, "affine weights");
  const auto n = static_cast<Eigen::Index>(input.dim(0));
  const auto d = static_cast<Eigen::Index>(input.dim(1));
  const auto k = static_cast<Eigen::Index>(weights.dim(1));
  if (grad_output.shape() != Shape{input.dim(0), weights.dim(1)}) {
    throw ShapeError("affine_backward: grad " + dims(grad_output) +
                     " does not match output shape");
  }
  AffineGrads g{Tensor(input.shape()), Tensor(weights.shape()),
                Tensor({weights.dim(1)})};
  ConstMatMap dout(grad_output.ptr(), n, k);
  MatMap(g.input.ptr(), n, d).noalias() =
      dout * ConstMatMap(weights.ptr(), d, k).transpose();
  MatMap(g.weights.ptr(), d, k).noalias() =
      ConstMatMap(input.ptr(), n, d).transpose() * dout;
  for (std::size_t i = 0; i < input.dim(0); ++i)
    for (std::size_t j = 0; j < weights.dim(1); ++j) g.bias[j] += grad_output.at(i, j);
  return g;
}

Tensor l2_normalize_rows(const Tensor& input) {
  require_rank(input, 2, "l2_normalize input");
  const std::size_t n = input.dim(0), d = input.dim(1);
  Tensor out(input.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Scalar sq = 0;
    for (std::size_t j = 0; j < d; ++j) sq += input.at(i, j) * input.at(i, j);
    if (!(sq > 0)) {
      throw InvalidArgument("l2_normalize: row " + std::to_string(i) +
                            " has zero norm");
    }
    const Scalar inv = Scalar(1) / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = input.at(i, j) * inv;
  }
  return out;
}

Tensor l2_normalize_rows_backward(const Tensor& input, const Tensor& output,
                                  const Tensor& grad_output) {
  require_same_shape(output, grad_output, "l2_normalize_backward");
  const std::size_t n = input.dim(0), d = input.dim(1);
  Tensor out(input.shape());
  for (std::size_t i = 0; i < n; ++i) {
    Scalar sq = 0, dot = 0;
    for (std::size_t j = 0; j < d; ++j) {
      sq += input.at(i, j) * input.at(i, j);
      dot += output.at(i, j) * grad_output.at(i, j);
    }
    const Scalar inv = Scalar(1) / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = (grad_output.at(i, j) - output.at(i, j) * dot) * inv;
    }
  }
  return out;
}

}  // namespace capforge::ops
