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

#include <httplib.h>
#include <json.hpp>

#include "capforge/errors.hpp"
#include "capforge/image_io.hpp"

namespace capforge::service {
namespace {

Response error(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}.dump()};
}

bool starts_with_type(std::string_view content_type, std::string_view type) {
  const auto end = content_type.find(';');
  auto head = content_type.substr(0, end);
  while (!head.empty() && head.back() == ' ') head.remove_suffix(1);
  return head == type;
}

std::vector<std::uint8_t> png_bytes(std::string_view content_type, std::string_view body) {
  if (starts_with_type(content_type, "application/json")) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      throw FormatError("request body is not valid JSON");
    }
    if (!doc.is_object() || !doc.contains("image_base64") || !doc["image_base64"].is_string()) {
      throw FormatError("expected {\"image_base64\": <string>}");
    }
    return image::base64_decode(doc["image_base64"].get<std::string>());
  }
  return {body.begin(), body.end()};
}

}  // namespace

Response handle_caption(const pipeline::Pipeline& pipeline, std::string_view content_type,
                        std::string_view body) {
  if (body.size() > pipeline.config().max_body_bytes) {
    return error(413, "request body exceeds " +
                          std::to_string(pipeline.config().max_body_bytes) + " bytes");
  }
  Tensor img;
  try {
    img = image::decode_png(png_bytes(content_type, body));
  } catch (const Error& e) {
    return error(400, e.what());
  }
  const std::size_t minimum = std::max(vision::minimum_input_size(pipeline.models().coco.config),
                                       vision::minimum_input_size(pipeline.models().web.config));
  if (img.dim(1) < minimum || img.dim(2) < minimum) {
    return error(400, "image must be at least " + std::to_string(minimum) + " x " +
                          std::to_string(minimum));
  }
  try {
    return {200, pipeline::to_json(pipeline.caption(img))};
  } catch (const StageError& e) {
    return error(500, e.what());
  }
}

Response handle_health(const pipeline::Pipeline& pipeline) {
  return {200, nlohmann::json{{"status", "ok"}, {"models", pipeline.models().identifiers}}.dump()};
}

struct Server::Impl {
  httplib::Server http;
};

Server::Server(const pipeline::Pipeline& pipeline) : impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  http.set_payload_max_length(pipeline.config().max_body_bytes);
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http.Post("/v1/caption", [&pipeline, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_caption(pipeline, req.get_header_value("Content-Type"), req.body));
  });
  http.Get("/v1/health", [&pipeline, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_health(pipeline));
  });
  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(nlohmann::json{{"error", httplib::status_message(res.status)}}.dump(),
                      "application/json");
    }
  });
}

Server::~Server() { stop(); }

void Server::listen(const std::string& host, int port) {
  if (!impl_->http.listen(host, port)) {
    throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

int Server::start(const std::string& host, int port) {
  auto& http = impl_->http;
  const int bound =
      port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([&http] { http.listen_after_bind(); });
  http.wait_until_ready();
  return bound;
}

void Server::stop() {
  impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace capforge::service
