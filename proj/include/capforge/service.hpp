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

#ifndef CAPFORGE_SERVICE_HPP_
#define CAPFORGE_SERVICE_HPP_

#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include "capforge/pipeline.hpp"

namespace capforge::service {

struct Response {
  int status = 200;
  std::string body;  // JSON
};

// POST /v1/caption body: image/png bytes, or application/json with an
// "image_base64" PNG. Client errors give 400 with {"error": ...}.
Response handle_caption(const pipeline::Pipeline& pipeline, std::string_view content_type,
                        std::string_view body);
// GET /v1/health: status plus checkpoint identifiers.
Response handle_health(const pipeline::Pipeline& pipeline);

// HTTP front end over a loaded pipeline. The pipeline must outlive the
// server. Requests run concurrently on the server's worker pool.
class Server {
 public:
  explicit Server(const pipeline::Pipeline& pipeline);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  // Binds (port 0 picks a free one), serves on a background thread and
  // returns the bound port once the server accepts connections.
  int start(const std::string& host, int port = 0);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace capforge::service

#endif  // CAPFORGE_SERVICE_HPP_
