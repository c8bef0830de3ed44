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

#include "capforge/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <json.hpp>
#include <fstream>
#include <sstream>
#include <thread>

#include "capforge/cli.hpp"
#include "capforge/image_io.hpp"
#include "capforge/synthetic.hpp"
#include "trained_models.hpp"

namespace capforge::service {
namespace {

using capforge::testing::shared_pipeline;
using capforge::testing::trained_models;
using nlohmann::json;

std::string png_of(std::size_t index) {
  const auto img = synth::generate_corpus(7, 1, 2000 + index).front().image;
  const auto bytes = image::encode_png(img);
  return {bytes.begin(), bytes.end()};
}

// Every CaptionResult field with the expected JSON type.
void expect_caption_schema(const std::string& body) {
  const auto doc = json::parse(body);
  ASSERT_TRUE(doc.is_object());
  ASSERT_TRUE(doc.contains("caption") && doc["caption"].is_string());
  EXPECT_FALSE(doc["caption"].get<std::string>().empty());
  ASSERT_TRUE(doc.contains("confidence") && doc["confidence"].is_number());
  EXPECT_GT(doc["confidence"].get<double>(), 0);
  EXPECT_LT(doc["confidence"].get<double>(), 1);
  ASSERT_TRUE(doc.contains("tags") && doc["tags"].is_array());
  for (const auto& t : doc["tags"]) {
    EXPECT_TRUE(t["tag"].is_string());
    EXPECT_TRUE(t["score"].is_number());
  }
  ASSERT_TRUE(doc.contains("entities") && doc["entities"].is_array());
  for (const auto& e : doc["entities"]) {
    EXPECT_TRUE(e["name"].is_string());
    EXPECT_TRUE(e["kind"].is_string());
    EXPECT_TRUE(e["similarity"].is_number());
  }
  ASSERT_TRUE(doc.contains("candidates_considered"));
  EXPECT_TRUE(doc["candidates_considered"].is_number_unsigned());
  ASSERT_TRUE(doc.contains("low_confidence_fallback_used"));
  EXPECT_TRUE(doc["low_confidence_fallback_used"].is_boolean());
  ASSERT_TRUE(doc.contains("stage_latencies") && doc["stage_latencies"].is_object());
  for (auto stage : pipeline::kStages) {
    ASSERT_TRUE(doc["stage_latencies"].contains(std::string(stage))) << stage;
    EXPECT_TRUE(doc["stage_latencies"][std::string(stage)].is_number());
  }
}

// --- handlers -------------------------------------------------------------------

TEST(Handlers, HealthListsCheckpoints) {
  const auto r = handle_health(shared_pipeline());
  EXPECT_EQ(r.status, 200);
  const auto doc = json::parse(r.body);
  EXPECT_EQ(doc["status"], "ok");
  EXPECT_EQ(doc["models"].size(), 6u);
  EXPECT_EQ(doc["models"]["dmsm"], shared_pipeline().models().identifiers.at("dmsm"));
}

TEST(Handlers, PngAndBase64BodiesAgree) {
  const auto png = png_of(0);
  const auto raw = handle_caption(shared_pipeline(), "image/png", png);
  ASSERT_EQ(raw.status, 200) << raw.body;
  expect_caption_schema(raw.body);
  const std::vector<std::uint8_t> bytes(png.begin(), png.end());
  const auto body = json{{"image_base64", image::base64_encode(bytes)}}.dump();
  const auto b64 = handle_caption(shared_pipeline(), "application/json; charset=utf-8", body);
  ASSERT_EQ(b64.status, 200) << b64.body;
  EXPECT_TRUE(pipeline::same_outcome(pipeline::result_from_json(raw.body),
                                     pipeline::result_from_json(b64.body)));
}

TEST(Handlers, MalformedInputIs400WithErrorBody) {
  const auto& p = shared_pipeline();
  for (const auto& [type, body] : std::vector<std::pair<std::string, std::string>>{
           {"image/png", "abc"},
           {"application/octet-stream", ""},
           {"application/json", "{"},
           {"application/json", R"({"image": "x"})"},
           {"application/json", R"({"image_base64": 7})"},
           {"application/json", R"({"image_base64": "@@@@"})"},
           {"application/json", R"({"image_base64": "YWJj"})"}}) {
    const auto r = handle_caption(p, type, body);
    EXPECT_EQ(r.status, 400) << type << " " << body;
    EXPECT_TRUE(json::parse(r.body).contains("error"));
  }
}

TEST(Handlers, SinglePixelImageIsCaptioned) {
  ASSERT_EQ(vision::minimum_input_size(shared_pipeline().models().coco.config), 1u);
  const auto bytes = image::encode_png(Tensor({3, 1, 1}, Scalar(0.5)));
  const std::string body(bytes.begin(), bytes.end());
  const auto r = handle_caption(shared_pipeline(), "image/png", body);
  EXPECT_EQ(r.status, 200) << r.body;
}

TEST(Handlers, OversizedBodyIs413) {
  auto c = shared_pipeline().config();
  c.max_body_bytes = 64;
  const pipeline::Pipeline small(c, shared_pipeline().models());
  const auto r = handle_caption(small, "image/png", std::string(65, 'x'));
  EXPECT_EQ(r.status, 413);
}

// --- live server ----------------------------------------------------------------

class LiveServer : public ::testing::Test {
 protected:
  void SetUp() override { port_ = server_.start("127.0.0.1"); }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  Server server_{shared_pipeline()};
  int port_ = 0;
};

TEST_F(LiveServer, Health) {
  auto res = client().Get("/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["status"], "ok");
}

TEST_F(LiveServer, CaptionMatchesCliOnTheSameImage) {
  const auto png = png_of(1);
  auto res = client().Post("/v1/caption", png, "image/png");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  expect_caption_schema(res->body);

  const auto path = (capforge::testing::scratch_dir("parity") / "img.png").string();
  std::ofstream(path, std::ios::binary) << png;
  std::ostringstream out, err;
  ASSERT_EQ(cli::run_cli({"--config", trained_models().config_path, "caption", path}, out, err),
            0)
      << err.str();
  EXPECT_TRUE(pipeline::same_outcome(pipeline::result_from_json(res->body),
                                     pipeline::result_from_json(out.str())));
}

TEST_F(LiveServer, MalformedBodyIs400) {
  auto res = client().Post("/v1/caption", "abc", "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
}

TEST_F(LiveServer, UnknownRouteIs404) {
  auto res = client().Get("/v1/nope");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
}

TEST_F(LiveServer, ConcurrentRequestsAgree) {
  const auto png = png_of(2);
  std::vector<std::string> bodies(8);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    workers.emplace_back([&, i] {
      auto res = client().Post("/v1/caption", png, "image/png");
      if (res && res->status == 200) {
        bodies[i] = pipeline::to_json(pipeline::result_from_json(res->body), false);
      }
    });
  }
  for (auto& w : workers) w.join();
  ASSERT_FALSE(bodies[0].empty());
  for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
}

TEST(LiveServerLimits, OversizedBodyIs413) {
  auto c = shared_pipeline().config();
  c.max_body_bytes = 1024;
  const pipeline::Pipeline small(c, shared_pipeline().models());
  Server server(small);
  const int port = server.start("127.0.0.1");
  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/v1/caption", std::string(4096, 'x'), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);
  server.stop();
}

}  // namespace
}  // namespace capforge::service
