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

#include "capforge/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>

#include "capforge/bench.hpp"
#include "capforge/errors.hpp"
#include "capforge/image_io.hpp"
#include "capforge/pipeline.hpp"
#include "capforge/service.hpp"
#include "capforge/synthetic.hpp"
#include "capforge/training.hpp"

namespace capforge::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::uint64_t seed = 7;

  std::size_t n = 100;
  std::size_t offset = 0;
  std::string out_dir;

  std::size_t train_size = 2000;
  std::optional<std::size_t> epochs;

  std::string image_path;
  std::string host = "127.0.0.1";
  int port = 8080;

  std::size_t warmup = 10;
  bool multi_threaded = false;
};

// An explicit --config must exist; the default location may be absent, in
// which case built-in defaults apply.
pipeline::PipelineConfig resolve_config(const Options& o) {
  if (!o.config_path.empty()) return pipeline::load_config(o.config_path);
  const std::string path = pipeline::default_config_path();
  if (fs::exists(path)) return pipeline::load_config(path);
  return {};
}

pipeline::TrainingPlan make_plan(const Options& o, std::ostream& err) {
  pipeline::TrainingPlan plan;
  plan.seed = o.seed;
  plan.train_size = o.train_size;
  if (o.epochs) {
    plan.vision.epochs = *o.epochs;
    plan.dmsm.epochs = *o.epochs;
    plan.language_model.epochs = *o.epochs;
  }
  plan.log = [&err](std::string_view line) { err << line << '\n'; };
  return plan;
}

Tensor read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string_view(magic, 4) == "CFTN") return load_tensor(path);
  return image::read_png(path);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Caption Forge: image captioning pipeline", "caption-forge"};
  app.option_defaults()->always_capture_default();
  app.add_option("--config", o.config_path,
                 "Pipeline config (default: $CAPTION_FORGE_CONFIG or caption_forge.json)");
  app.add_option("--seed", o.seed, "Seed for data generation and training");
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic corpus as tensor files plus index");
  gen->add_option("--n", o.n, "Number of examples")->check(CLI::PositiveNumber);
  gen->add_option("--offset", o.offset, "First example index in the seeded stream");
  gen->add_option("--out", o.out_dir, "Output directory")->required();

  auto* train_vision = app.add_subcommand("train-vision", "Train both concept detectors");
  auto* train_lm = app.add_subcommand("train-lm", "Train the caption language model");
  auto* train_dmsm = app.add_subcommand("train-dmsm", "Train the multimodal reranker");
  auto* train_conf = app.add_subcommand("train-confidence", "Train the confidence model");
  for (auto* sub : {train_vision, train_lm, train_dmsm, train_conf}) {
    sub->add_option("--train-size", o.train_size, "Synthetic training examples")
        ->check(CLI::PositiveNumber);
  }
  for (auto* sub : {train_vision, train_lm, train_dmsm}) {
    sub->add_option("--epochs", o.epochs, "Override the number of epochs");
  }

  auto* caption = app.add_subcommand("caption", "Caption a PNG image; prints one JSON line");
  caption->add_option("image", o.image_path, "PNG file (or tensor file)")->required();

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--host", o.host, "Listen address");
  serve->add_option("--port", o.port, "Listen port")->check(CLI::Range(0, 65535));

  auto* bench = app.add_subcommand("bench", "Report per-stage latency percentiles");
  bench->add_option("--n", o.n, "Measured images")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", o.warmup, "Discarded leading images");
  bench->add_flag("--multi-threaded", o.multi_threaded,
                  "Allow multi-threaded linear algebra (default: single thread)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      synth::export_corpus(synth::generate_corpus(o.seed, o.n, o.offset), o.out_dir);
      err << "wrote " << o.n << " examples to " << o.out_dir << '\n';
    } else if (train_vision->parsed()) {
      pipeline::train_vision_step(make_plan(o, err), resolve_config(o));
    } else if (train_lm->parsed()) {
      pipeline::train_lm_step(make_plan(o, err), resolve_config(o));
    } else if (train_dmsm->parsed()) {
      pipeline::train_dmsm_step(make_plan(o, err), resolve_config(o));
    } else if (train_conf->parsed()) {
      pipeline::train_confidence_step(make_plan(o, err), resolve_config(o));
    } else if (caption->parsed()) {
      const pipeline::Pipeline p(resolve_config(o));
      out << pipeline::to_json(p.caption(read_image(o.image_path))) << '\n';
    } else if (serve->parsed()) {
      const pipeline::Pipeline p(resolve_config(o));
      service::Server server(p);
      err << "listening on " << o.host << ':' << o.port << '\n';
      server.listen(o.host, o.port);
    } else if (bench->parsed()) {
      const pipeline::Pipeline p(resolve_config(o));
      pipeline::BenchOptions b;
      b.n = o.n;
      b.warmup = o.warmup;
      b.seed = o.seed;
      b.single_threaded = !o.multi_threaded;
      out << pipeline::to_json(pipeline::bench(p, b)) << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace capforge::cli
