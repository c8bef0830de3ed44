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

#include "capforge/confidence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/tensor.hpp"

namespace capforge::confidence {
namespace {

constexpr char kMagic[4] = {'C', 'F', 'C', 'M'};
constexpr std::uint16_t kFormatVersion = 1;

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::string_view label_name(QualityLabel label) {
  switch (label) {
    case QualityLabel::kExcellent: return "excellent";
    case QualityLabel::kGood: return "good";
    case QualityLabel::kBad: return "bad";
    case QualityLabel::kEmbarrassing: return "embarrassing";
  }
  throw InvalidArgument("unknown quality label");
}

QualityLabel parse_label(std::string_view name) {
  for (auto l : {QualityLabel::kExcellent, QualityLabel::kGood, QualityLabel::kBad,
                 QualityLabel::kEmbarrassing}) {
    if (label_name(l) == name) return l;
  }
  throw InvalidArgument("unknown quality label '" + std::string(name) + "'");
}

int binarize(QualityLabel label) {
  return label == QualityLabel::kExcellent || label == QualityLabel::kGood ? 1 : 0;
}

std::vector<double> ConfidenceFeatures::flatten() const {
  std::vector<double> v(dmsm_vision_vec);
  v.insert(v.end(), dmsm_caption_vec.begin(), dmsm_caption_vec.end());
  v.insert(v.end(), {lm_score, caption_length, lm_score_per_word, log_tag_coverage, dmsm_score});
  return v;
}

ConfidenceFeatures assemble_features(std::span<const double> vision_vec,
                                     std::span<const double> caption_vec, double lm_score,
                                     std::span<const std::string> caption,
                                     std::size_t covered_tags, double dmsm_score) {
  if (caption.empty()) throw InvalidArgument("assemble_features: empty caption");
  ConfidenceFeatures f;
  f.dmsm_vision_vec.assign(vision_vec.begin(), vision_vec.end());
  f.dmsm_caption_vec.assign(caption_vec.begin(), caption_vec.end());
  f.lm_score = lm_score;
  f.caption_length = static_cast<double>(caption.size());
  f.lm_score_per_word = lm_score / f.caption_length;
  f.log_tag_coverage = std::log1p(static_cast<double>(covered_tags));
  f.dmsm_score = dmsm_score;
  return f;
}

// --- model ----------------------------------------------------------------------

ConfidenceModel ConfidenceModel::zeros(std::size_t dim) {
  ConfidenceModel m;
  m.weights.assign(dim, 0.0);
  m.mean.assign(dim, 0.0);
  m.scale.assign(dim, 1.0);
  return m;
}

std::vector<double> ConfidenceModel::standardize(std::span<const double> features) const {
  if (features.size() != dim()) {
    throw ShapeError("confidence: feature dimension " + std::to_string(features.size()) +
                     ", model expects " + std::to_string(dim()));
  }
  std::vector<double> z(features.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (features[i] - mean[i]) / scale[i];
  return z;
}

double confidence_score(const ConfidenceModel& model, std::span<const double> features) {
  return sigmoid(dot(model.weights, model.standardize(features)) + model.bias);
}

double confidence_score(const ConfidenceModel& model, const ConfidenceFeatures& features) {
  return confidence_score(model, features.flatten());
}

void ConfidenceModel::save(std::ostream& out) const {
  const nlohmann::json header = {{"dim", dim()}, {"bias", bias}, {"mean", mean}, {"scale", scale}};
  const std::string json = header.dump();
  out.write(kMagic, 4);
  io::write_u16(out, kFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(json.size()));
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  io::write_u32(out, static_cast<std::uint32_t>(weights.size()));
  for (double w : weights) io::write_f64(out, w);
  if (!out) throw IoError("confidence model: write failed");
}

ConfidenceModel ConfidenceModel::load(std::istream& in) {
  char magic[4];
  io::read_exact(in, magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a confidence model file");
  if (io::read_u16(in) != kFormatVersion) {
    throw FormatError("confidence model: unsupported version");
  }
  std::string json(io::read_u32(in), '\0');
  io::read_exact(in, json.data(), json.size());
  const auto header = nlohmann::json::parse(json);
  ConfidenceModel m;
  m.bias = header.at("bias");
  m.mean = header.at("mean").get<std::vector<double>>();
  m.scale = header.at("scale").get<std::vector<double>>();
  const std::size_t dim = header.at("dim");
  const std::uint32_t count = io::read_u32(in);
  if (count != dim || m.mean.size() != dim || m.scale.size() != dim) {
    throw FormatError("confidence model: inconsistent dimensions");
  }
  for (std::uint32_t i = 0; i < count; ++i) m.weights.push_back(io::read_f64(in));
  if (std::any_of(m.scale.begin(), m.scale.end(), [](double s) { return !(s > 0); })) {
    throw FormatError("confidence model: non-positive scale");
  }
  return m;
}

void ConfidenceModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  save(out);
}

ConfidenceModel ConfidenceModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return load(in);
}

// --- training -------------------------------------------------------------------

double LogisticProblem::loss(std::span<const double> params, std::vector<double>* grad) const {
  const std::size_t d = dim();
  if (params.size() != d + 1) throw ShapeError("logistic loss: parameter count mismatch");
  const auto w = params.first(d);
  const double b = params[d];
  if (grad) grad->assign(d + 1, 0.0);
  double total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double z = dot(w, rows[i]) + b;
    // -log p(y | z) = softplus(z) - y z
    total += softplus(z) - targets[i] * z;
    if (grad) {
      const double r = sigmoid(z) - targets[i];
      for (std::size_t j = 0; j < d; ++j) (*grad)[j] += r * rows[i][j];
      (*grad)[d] += r;
    }
  }
  const double n = static_cast<double>(rows.size());
  double sq = 0;
  for (double x : w) sq += x * x;
  if (grad) {
    for (auto& g : *grad) g /= n;
    for (std::size_t j = 0; j < d; ++j) (*grad)[j] += l2 * w[j];
  }
  return total / n + 0.5 * l2 * sq;
}

ConfidenceModel train_confidence(std::span<const LabeledFeatures> examples,
                                 const ConfidenceConfig& config, TrainingReport* report) {
  if (examples.empty()) throw InvalidArgument("train_confidence: no examples");
  const std::size_t d = examples[0].features.size();
  LogisticProblem problem;
  problem.l2 = config.l2;
  int positives = 0;
  for (const auto& ex : examples) {
    if (ex.features.size() != d) throw ShapeError("train_confidence: inconsistent feature sizes");
    problem.targets.push_back(binarize(ex.label));
    positives += problem.targets.back();
  }
  if (positives == 0 || positives == static_cast<int>(examples.size())) {
    throw InvalidArgument("train_confidence: both classes are required after binarization");
  }

  ConfidenceModel model = ConfidenceModel::zeros(d);
  const double n = static_cast<double>(examples.size());
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0, sq = 0;
    for (const auto& ex : examples) mean += ex.features[j];
    mean /= n;
    for (const auto& ex : examples) sq += (ex.features[j] - mean) * (ex.features[j] - mean);
    const double sd = std::sqrt(sq / n);
    model.mean[j] = mean;
    model.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  for (const auto& ex : examples) problem.rows.push_back(model.standardize(ex.features));

  // Gradient descent with Barzilai-Borwein step lengths and an Armijo
  // backtracking safeguard, so every accepted step decreases the loss.
  std::vector<double> theta(d + 1, 0.0), grad, trial(d + 1), trial_grad;
  theta[d] = std::log(positives / (n - positives));
  double f = problem.loss(theta, &grad);
  double step = 1.0;
  TrainingReport local;
  std::size_t it = 0;
  for (; it < config.max_iterations; ++it) {
    const double gnorm = norm(grad);
    if (gnorm <= config.gradient_tolerance) break;
    double alpha = step;
    double trial_f = 0;
    bool accepted = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      for (std::size_t j = 0; j <= d; ++j) trial[j] = theta[j] - alpha * grad[j];
      trial_f = problem.loss(trial, &trial_grad);
      if (trial_f <= f - 1e-4 * alpha * gnorm * gnorm) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;  // no representable decrease left
    double ss = 0, sy = 0;
    for (std::size_t j = 0; j <= d; ++j) {
      const double s = trial[j] - theta[j], y = trial_grad[j] - grad[j];
      ss += s * s;
      sy += s * y;
    }
    step = sy > 0 ? ss / sy : 1.0;
    theta.swap(trial);
    grad.swap(trial_grad);
    f = trial_f;
  }
  local.final_loss = f;
  local.gradient_norm = norm(grad);
  local.iterations = it;
  local.converged = local.gradient_norm <= config.gradient_tolerance;
  model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  model.bias = theta[d];
  if (report) *report = local;
  return model;
}

}  // namespace capforge::confidence
