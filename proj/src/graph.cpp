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

#include "capforge/graph.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "capforge/errors.hpp"

namespace capforge {

Graph::Node Graph::push(Record record) {
  if (!record.value.all_finite()) {
    throw InvalidArgument("graph: non-finite value produced by node " +
                          std::to_string(nodes_.size()));
  }
  nodes_.push_back(std::move(record));
  return nodes_.size() - 1;
}

const Tensor& Graph::value(Node node) const { return nodes_.at(node).value; }
const Tensor& Graph::grad(Node node) const { return nodes_.at(node).grad; }

Graph::Node Graph::leaf(Tensor value) {
  Record r;
  r.op = Op::kLeaf;
  r.value = std::move(value);
  return push(std::move(r));
}

Graph::Node Graph::conv2d(Node input, Node weights, Node bias,
                          std::size_t stride, std::size_t padding) {
  ops::ConvParams p{value(weights), value(bias), stride, padding};
  Record r;
  r.op = Op::kConv2d;
  r.inputs = {input, weights, bias};
  r.stride = stride;
  r.padding = padding;
  r.value = ops::conv2d(value(input), p);
  return push(std::move(r));
}

Graph::Node Graph::batch_norm(Node input, Node gamma, Node beta,
                              ops::BatchNormParams& stats, ops::Mode mode) {
  stats.gamma = value(gamma);
  stats.beta = value(beta);
  Record r;
  r.inputs = {input, gamma, beta};
  if (mode == ops::Mode::kTrain) {
    r.op = Op::kBatchNormTrain;
    r.value = ops::batch_norm(value(input), stats, mode, &r.bn_cache);
  } else {
    r.op = Op::kBatchNormInfer;
    r.value = ops::batch_norm_infer(value(input), stats);
    r.bn_stats = stats;
  }
  return push(std::move(r));
}

Graph::Node Graph::relu(Node input) {
  Record r;
  r.op = Op::kRelu;
  r.inputs = {input};
  r.value = ops::relu(value(input));
  return push(std::move(r));
}

Graph::Node Graph::sigmoid(Node input) {
  Record r;
  r.op = Op::kSigmoid;
  r.inputs = {input};
  r.value = ops::sigmoid(value(input));
  return push(std::move(r));
}

Graph::Node Graph::tanh(Node input) {
  Record r;
  r.op = Op::kTanh;
  r.inputs = {input};
  r.value = ops::tanh(value(input));
  return push(std::move(r));
}

Graph::Node Graph::add(Node a, Node b) {
  Record r;
  r.op = Op::kAdd;
  r.inputs = {a, b};
  r.value = ops::add(value(a), value(b));
  return push(std::move(r));
}

Graph::Node Graph::global_avg_pool(Node input) {
  Record r;
  r.op = Op::kGlobalAvgPool;
  r.inputs = {input};
  r.value = ops::global_avg_pool(value(input));
  return push(std::move(r));
}

Graph::Node Graph::affine(Node input, Node weights, Node bias) {
  Record r;
  r.op = Op::kAffine;
  r.inputs = {input, weights, bias};
  r.value = ops::affine(value(input), value(weights), value(bias));
  return push(std::move(r));
}

Graph::Node Graph::l2_normalize(Node input) {
  Record r;
  r.op = Op::kL2Normalize;
  r.inputs = {input};
  r.value = ops::l2_normalize_rows(value(input));
  return push(std::move(r));
}

Graph::Node Graph::sum(Node input) {
  Scalar total = 0;
  for (Scalar v : value(input).data()) total += v;
  Record r;
  r.op = Op::kSum;
  r.inputs = {input};
  r.value = Tensor({1}, total);
  return push(std::move(r));
}

Graph::Node Graph::bce_with_logits(Node logits, Tensor targets) {
  const Tensor& z = value(logits);
  if (z.shape() != targets.shape()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(z.shape()) +
                     " vs targets " + shape_str(targets.shape()));
  }
  Scalar total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const Scalar x = z[i];
    const Scalar t = targets[i];
    total += std::max(x, Scalar(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  Record r;
  r.op = Op::kBceWithLogits;
  r.inputs = {logits};
  r.targets = std::move(targets);
  r.value = Tensor({1}, total / static_cast<Scalar>(z.size()));
  return push(std::move(r));
}

namespace {

// Scores gamma * <a_i, b_c> for the candidate list of one anchor row.
std::vector<Scalar> candidate_scores(const Tensor& a, const Tensor& b,
                                     std::size_t row,
                                     const std::vector<std::size_t>& cands,
                                     Scalar gamma) {
  const std::size_t d = a.dim(1);
  std::vector<Scalar> s(cands.size());
  for (std::size_t k = 0; k < cands.size(); ++k) {
    Scalar dot = 0;
    for (std::size_t j = 0; j < d; ++j) dot += a.at(row, j) * b.at(cands[k], j);
    s[k] = gamma * dot;
  }
  return s;
}

std::vector<Scalar> softmax(const std::vector<Scalar>& s) {
  const Scalar m = *std::max_element(s.begin(), s.end());
  std::vector<Scalar> p(s.size());
  Scalar z = 0;
  for (std::size_t k = 0; k < s.size(); ++k) z += (p[k] = std::exp(s[k] - m));
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

Graph::Node Graph::ranking_softmax(Node anchors, Node candidates,
                                   std::vector<std::size_t> positive,
                                   std::vector<std::vector<std::size_t>> negatives,
                                   Scalar gamma) {
  const Tensor& a = value(anchors);
  const Tensor& b = value(candidates);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("ranking_softmax: anchors " + shape_str(a.shape()) +
                     " and candidates " + shape_str(b.shape()) +
                     " must be matrices of equal width");
  }
  if (positive.size() != a.dim(0) || negatives.size() != a.dim(0)) {
    throw ShapeError("ranking_softmax: need one positive and one negative list "
                     "per anchor row");
  }
  Scalar total = 0;
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    std::vector<std::size_t> cands{positive[i]};
    cands.insert(cands.end(), negatives[i].begin(), negatives[i].end());
    for (std::size_t c : cands) {
      if (c >= b.dim(0)) throw ShapeError("ranking_softmax: candidate index out of range");
    }
    const auto s = candidate_scores(a, b, i, cands, gamma);
    const Scalar m = *std::max_element(s.begin(), s.end());
    Scalar z = 0;
    for (Scalar v : s) z += std::exp(v - m);
    total += (m + std::log(z)) - s[0];
  }
  Record r;
  r.op = Op::kRankingSoftmax;
  r.inputs = {anchors, candidates};
  r.positive = std::move(positive);
  r.negatives = std::move(negatives);
  r.gamma = gamma;
  r.value = Tensor({1}, total / static_cast<Scalar>(a.dim(0)));
  return push(std::move(r));
}

Graph::Node Graph::opaque(std::string name, Tensor value,
                          std::vector<Node> inputs) {
  Record r;
  r.op = Op::kOpaque;
  r.name = std::move(name);
  r.inputs = std::move(inputs);
  r.value = std::move(value);
  return push(std::move(r));
}

void Graph::accumulate(Node node, const Tensor& grad) {
  Record& r = nodes_[node];
  if (grad.shape() != r.value.shape()) {
    throw ShapeError("graph: gradient shape " + shape_str(grad.shape()) +
                     " does not match node value " + shape_str(r.value.shape()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i) r.grad[i] += grad[i];
  r.reached = true;
}

void Graph::backward(Node loss) {
  if (loss >= nodes_.size()) throw InvalidArgument("graph: unknown loss node");
  if (nodes_[loss].value.size() != 1) {
    throw ShapeError("graph: backward needs a scalar loss, got " +
                     shape_str(nodes_[loss].value.shape()));
  }
  for (auto& r : nodes_) {
    r.grad = Tensor(r.value.shape());
    r.reached = false;
  }
  nodes_[loss].grad[0] = 1;
  nodes_[loss].reached = true;
  for (Node n = loss + 1; n-- > 0;) {
    if (nodes_[n].reached) backward_node(n);
  }
}

void Graph::backward_node(Node node) {
  // accumulate() only writes to input records, which precede this one.
  const Record& r = nodes_[node];
  const Tensor& g = r.grad;
  switch (r.op) {
    case Op::kLeaf:
      return;
    case Op::kOpaque:
      if (r.inputs.empty()) return;
      throw UnsupportedOp("graph: no gradient defined for opaque op '" + r.name +
                          "'");
    case Op::kConv2d: {
      ops::ConvParams p{value(r.inputs[1]), value(r.inputs[2]), r.stride,
                        r.padding};
      auto grads = ops::conv2d_backward(value(r.inputs[0]), p, g);
      accumulate(r.inputs[0], grads.input);
      accumulate(r.inputs[1], grads.weights);
      accumulate(r.inputs[2], grads.bias);
      return;
    }
    case Op::kBatchNormTrain: {
      auto grads = ops::batch_norm_backward(r.bn_cache, value(r.inputs[1]), g);
      accumulate(r.inputs[0], grads.input);
      accumulate(r.inputs[1], grads.gamma);
      accumulate(r.inputs[2], grads.beta);
      return;
    }
    case Op::kBatchNormInfer: {
      auto grads =
          ops::batch_norm_infer_backward(value(r.inputs[0]), r.bn_stats, g);
      accumulate(r.inputs[0], grads.input);
      accumulate(r.inputs[1], grads.gamma);
      accumulate(r.inputs[2], grads.beta);
      return;
    }
    case Op::kRelu:
      accumulate(r.inputs[0], ops::relu_backward(value(r.inputs[0]), g));
      return;
    case Op::kSigmoid:
      accumulate(r.inputs[0], ops::sigmoid_backward(r.value, g));
      return;
    case Op::kTanh:
      accumulate(r.inputs[0], ops::tanh_backward(r.value, g));
      return;
    case Op::kAdd:
      accumulate(r.inputs[0], g);
      accumulate(r.inputs[1], g);
      return;
    case Op::kGlobalAvgPool:
      accumulate(r.inputs[0],
                 ops::global_avg_pool_backward(value(r.inputs[0]).shape(), g));
      return;
    case Op::kAffine: {
      auto grads = ops::affine_backward(value(r.inputs[0]), value(r.inputs[1]), g);
      accumulate(r.inputs[0], grads.input);
      accumulate(r.inputs[1], grads.weights);
      accumulate(r.inputs[2], grads.bias);
      return;
    }
    case Op::kL2Normalize:
      accumulate(r.inputs[0], ops::l2_normalize_rows_backward(
                                  value(r.inputs[0]), r.value, g));
      return;
    case Op::kSum: {
      Tensor d(value(r.inputs[0]).shape(), g[0]);
      accumulate(r.inputs[0], d);
      return;
    }
    case Op::kBceWithLogits: {
      const Tensor& z = value(r.inputs[0]);
      Tensor d(z.shape());
      const Scalar scale = g[0] / static_cast<Scalar>(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        d[i] = scale * (ops::sigmoid(z[i]) - r.targets[i]);
      }
      accumulate(r.inputs[0], d);
      return;
    }
    case Op::kRankingSoftmax: {
      const Tensor& a = value(r.inputs[0]);
      const Tensor& b = value(r.inputs[1]);
      Tensor da(a.shape());
      Tensor db(b.shape());
      const std::size_t rows = a.dim(0), d = a.dim(1);
      const Scalar scale = g[0] / static_cast<Scalar>(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        std::vector<std::size_t> cands{r.positive[i]};
        cands.insert(cands.end(), r.negatives[i].begin(), r.negatives[i].end());
        const auto p = softmax(candidate_scores(a, b, i, cands, r.gamma));
        for (std::size_t k = 0; k < cands.size(); ++k) {
          const Scalar ds = scale * (p[k] - (k == 0 ? 1 : 0)) * r.gamma;
          for (std::size_t j = 0; j < d; ++j) {
            da.at(i, j) += ds * b.at(cands[k], j);
            db.at(cands[k], j) += ds * a.at(i, j);
          }
        }
      }
      const Node ia = r.inputs[0], ib = r.inputs[1];
      accumulate(ia, da);
      accumulate(ib, db);
      return;
    }
  }
}

}  // namespace capforge
