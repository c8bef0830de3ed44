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

#include "trained_models.hpp"

#include <unistd.h>

#include <memory>

#include "capforge/training.hpp"

namespace capforge::testing {
namespace fs = std::filesystem;

namespace {

struct Holder {
  TrainedModels models;
  ~Holder() {
    std::error_code ec;
    fs::remove_all(models.dir, ec);
  }
};

Holder& holder() {
  static Holder h = [] {
    Holder out;
    out.models.dir = fs::temp_directory_path() / ("capforge_models_" + std::to_string(::getpid()));
    fs::create_directories(out.models.dir);
    pipeline::PipelineConfig c;
    const auto at = [&](const char* name) { return (out.models.dir / name).string(); };
    c.vision_coco = at("vision_coco.ck");
    c.vision_web = at("vision_web.ck");
    c.language_model = at("caption_lm.cflm");
    c.dmsm = at("dmsm.ck");
    c.confidence = at("confidence.cfcm");
    c.gallery = at("gallery.json");
    c.dmsm_dim = 48;

    pipeline::TrainingPlan plan;
    plan.train_size = 400;
    plan.confidence_size = 60;
    plan.vision.epochs = 3;
    plan.language_model.epochs = 80;
    plan.dmsm.epochs = 4;
    pipeline::train_all(plan, c);

    out.models.config = c;
    out.models.config_path = at("config.json");
    pipeline::save_config(out.models.config_path, c);
    return out;
  }();
  return h;
}

}  // namespace

const TrainedModels& trained_models() { return holder().models; }

const pipeline::Pipeline& shared_pipeline() {
  static const pipeline::Pipeline p(trained_models().config);
  return p;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = trained_models().dir / "scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace capforge::testing
