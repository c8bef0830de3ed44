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

#ifndef CAPFORGE_GRAPH_HPP_
#define CAPFORGE_GRAPH_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "capforge/ops.hpp"
#include "capforge/tensor.hpp"

namespace capforge {

// Records a forward pass over the fixed op vocabulary below and replays it in
// reverse to produce gradients. Nodes are appended in evaluation order, so
// reverse insertion order is a valid topological order.
//
// Only the ops listed here have adjoints. `opaque` lets callers splice in a
// value computed elsewhere; backward() throws UnsupportedOp if gradient has
// to flow through one.
class Graph {
 public:
  using Node = std::size_t;

  enum class Op {
    kLeaf,
    kConv2d,
    kBatchNormTrain,
    kBatchNormInfer,
    kRelu,
    kSigmoid,
    kTanh,
    kAdd,
    kGlobalAvgPool,
    kAffine,
    kL2Normalize,
    kSum,
    kBceWithLogits,
    kRankingSoftmax,
    kOpaque,
  };

  // A leaf. Gradients are accumulated for every leaf reachable from the loss.
  Node leaf(Tensor value);

  Node conv2d(Node input, Node weights, Node bias, std::size_t stride,
              std::size_t padding);
  // Train mode updates `stats` running averages as a side effect.
  Node batch_norm(Node input, Node gamma, Node beta, ops::BatchNormParams& stats,
                  ops::Mode mode);
  Node relu(Node input);
  Node sigmoid(Node input);
  Node tanh(Node input);
  Node add(Node a, Node b);
  Node global_avg_pool(Node input);
  Node affine(Node input, Node weights, Node bias);
  Node l2_normalize(Node input);
  Node sum(Node input);

  // Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
  Node bce_with_logits(Node logits, Tensor targets);

  // Mean over rows i of -log softmax_j(gamma * <a_i, b_j>) evaluated at
  // j = positive[i] against the candidate set {positive[i]} + negatives[i].
  // With unit-norm rows the inner product is the cosine.
  Node ranking_softmax(Node anchors, Node candidates,
                       std::vector<std::size_t> positive,
                       std::vector<std::vector<std::size_t>> negatives,
                       Scalar gamma);

  Node opaque(std::string name, Tensor value, std::vector<Node> inputs);

  const Tensor& value(Node node) const;
  // Zero tensor when no gradient reached the node.
  const Tensor& grad(Node node) const;
  Op op(Node node) const { return nodes_.at(node).op; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1; `loss` must hold a single element.
  void backward(Node loss);

 private:
  struct Record {
    Op op = Op::kLeaf;
    std::vector<Node> inputs;
    Tensor value;
    Tensor grad;
    bool reached = false;
    std::size_t stride = 1;
    std::size_t padding = 0;
    Scalar gamma = 0;
    ops::BatchNormCache bn_cache;
    ops::BatchNormParams bn_stats;
    Tensor targets;
    std::vector<std::size_t> positive;
    std::vector<std::vector<std::size_t>> negatives;
    std::string name;
  };

  Node push(Record record);
  void accumulate(Node node, const Tensor& grad);
  void backward_node(Node node);

  std::vector<Record> nodes_;
};

}  // namespace capforge

#endif  // CAPFORGE_GRAPH_HPP_
