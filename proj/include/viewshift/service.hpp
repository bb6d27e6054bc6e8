// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

// Preview service behind the trajectory studio. Request handling is plain
// functions over Request/Response values; serve() binds them to HTTP.

#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "viewshift/image.hpp"
#include "viewshift/io.hpp"

namespace viewshift {

enum class JobKind { kRender, kTrain };
enum class JobStatus { kQueued, kRunning, kDone, kFailed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobStatus status);

struct JobRecord {
  std::string id;
  JobKind kind = JobKind::kRender;
  JobStatus status = JobStatus::kQueued;
  double progress = 0.0;
  std::vector<std::string> outputs;
  std::string error;

  std::string to_json() const;
};

/// Thread-safe job table. Status only moves forward:
/// queued -> running -> {done, failed}.
class JobStore {
 public:
  std::string create(JobKind kind);
  std::optional<JobRecord> get(const std::string& id) const;

  void start(const std::string& id);
  void progress(const std::string& id, double fraction);
  void finish(const std::string& id, std::vector<std::string> outputs);
  void fail(const std::string& id, const std::string& error);

 private:
  JobRecord& locked_find(const std::string& id);
  void advance(JobRecord& job, JobStatus next);

  mutable std::mutex mutex_;
  std::map<std::string, JobRecord> jobs_;
  std::uint64_t next_id_ = 1;
};

struct LoadedClip {
  std::filesystem::path dir;
  VideoClip clip;
  std::vector<Depth> depths;
  ClipMeta meta;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

class PreviewService {
 public:
  /// An empty or unloadable data dir leaves the service without a clip;
  /// clip-dependent endpoints then answer 409.
  explicit PreviewService(std::filesystem::path data_dir);
  ~PreviewService();

  PreviewService(const PreviewService&) = delete;
  PreviewService& operator=(const PreviewService&) = delete;

  bool has_clip() const { return clip_ != nullptr; }
  const std::string& load_error() const { return load_error_; }

  Response clip_info() const;
  /// Body: {"frame_index", "move_list", "splat_radius"}. move_list is either
  /// an array of moves or an object with a "moves" array.
  Response preview(const std::string& body) const;
  /// Body: {"move_list", "splat_radius"}; starts an asynchronous render into
  /// <data_dir>/renders/<job id>.
  Response start_render(const std::string& body);
  Response job(const std::string& id) const;

  /// Blocks until every started job has finished.
  void wait_for_jobs();

  JobStore& jobs() { return jobs_; }

 private:
  std::filesystem::path data_dir_;
  std::shared_ptr<const LoadedClip> clip_;
  std::string load_error_;
  JobStore jobs_;
  std::mutex threads_mutex_;
  std::vector<std::thread> threads_;
};

/// Blocks serving HTTP on host:port until the process is stopped.
void serve(PreviewService& service, const std::string& host, int port);

}  // namespace viewshift
