// Copyright 2026 The viewshift Authors
// SPDX-License-Identifier: Apache-2.0

#include "viewshift/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "viewshift/anchor.hpp"
#include "viewshift/trajectory.hpp"

namespace viewshift {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(JobKind kind) { return kind == JobKind::kRender ? "render" : "train"; }

std::string_view to_string(JobStatus status) {
  switch (status) {
    case JobStatus::kQueued: return "queued";
    case JobStatus::kRunning: return "running";
    case JobStatus::kDone: return "done";
    case JobStatus::kFailed: return "failed";
  }
  return "unknown";
}

std::string JobRecord::to_json() const {
  json j{{"id", id},
         {"kind", std::string(to_string(kind))},
         {"status", std::string(to_string(status))},
         {"progress", progress},
         {"outputs", outputs}};
  if (!error.empty()) j["error"] = error;
  return j.dump();
}

std::string JobStore::create(JobKind kind) {
  std::lock_guard lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06llu", static_cast<unsigned long long>(next_id_++));
  JobRecord job;
  job.id = buf;
  job.kind = kind;
  jobs_.emplace(job.id, job);
  return job.id;
}

std::optional<JobRecord> JobStore::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

JobRecord& JobStore::locked_find(const std::string& id) {
  auto it = jobs_.find(id);
  if (it == jobs_.end()) throw InvalidArgument("unknown job " + id);
  return it->second;
}

void JobStore::advance(JobRecord& job, JobStatus next) {
  const bool ok = (job.status == JobStatus::kQueued && next == JobStatus::kRunning) ||
                  (job.status == JobStatus::kRunning && (next == JobStatus::kDone || next == JobStatus::kFailed));
  if (!ok)
    throw InvalidArgument("job " + job.id + ": illegal transition " + std::string(to_string(job.status)) + " -> " +
                          std::string(to_string(next)));
  job.status = next;
}

void JobStore::start(const std::string& id) {
  std::lock_guard lock(mutex_);
  advance(locked_find(id), JobStatus::kRunning);
}

void JobStore::progress(const std::string& id, double fraction) {
  std::lock_guard lock(mutex_);
  JobRecord& job = locked_find(id);
  if (job.status != JobStatus::kRunning) throw InvalidArgument("job " + id + " is not running");
  job.progress = std::clamp(fraction, job.progress, 1.0);
}

void JobStore::finish(const std::string& id, std::vector<std::string> outputs) {
  std::lock_guard lock(mutex_);
  JobRecord& job = locked_find(id);
  advance(job, JobStatus::kDone);
  job.progress = 1.0;
  job.outputs = std::move(outputs);
}

void JobStore::fail(const std::string& id, const std::string& error) {
  std::lock_guard lock(mutex_);
  JobRecord& job = locked_find(id);
  advance(job, JobStatus::kFailed);
  job.error = error;
}

namespace {

Response json_response(int status, const json& body) {
  Response r;
  r.status = status;
  r.body = body.dump();
  return r;
}

Response error_response(int status, const std::string& field, const std::string& message) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  return json_response(status, body);
}

Response no_clip(const std::string& why) {
  return error_response(409, "", "no clip loaded" + (why.empty() ? std::string() : ": " + why));
}

struct BadRequest {
  std::string field, message;
};

json parse_body(const std::string& body) {
  try {
    json doc = json::parse(body);
    if (!doc.is_object()) throw BadRequest{"", "request body must be a JSON object"};
    return doc;
  } catch (const json::exception& e) {
    throw BadRequest{"", std::string("malformed JSON body: ") + e.what()};
  }
}

int int_field(const json& doc, const char* key, std::optional<int> fallback) {
  auto it = doc.find(key);
  if (it == doc.end()) {
    if (fallback) return *fallback;
    throw BadRequest{key, std::string(key) + ": missing field"};
  }
  if (!it->is_number_integer()) throw BadRequest{key, std::string(key) + ": must be an integer"};
  return it->get<int>();
}

/// Parses a move list against the loaded clip length; trajectory field paths
/// are rewritten from "moves..." to "move_list...".
TrajectorySpec parse_moves(const json& doc, int frames) {
  auto it = doc.find("move_list");
  if (it == doc.end()) throw BadRequest{"move_list", "move_list: missing field"};
  json moves;
  if (it->is_array())
    moves = *it;
  else if (it->is_object() && it->contains("moves"))
    moves = (*it)["moves"];
  else
    throw BadRequest{"move_list", "move_list: must be an array of moves or an object with \"moves\""};
  const json traj{{"frames", frames}, {"moves", moves}};
  try {
    return parse_trajectory(traj.dump());
  } catch (const ParseError& e) {
    std::string field = e.field();
    if (field.rfind("moves", 0) == 0) field = "move_list" + field.substr(5);
    std::string message = e.what();
    for (std::size_t pos = 0; (pos = message.find("moves", pos)) != std::string::npos; pos += 9)
      message.replace(pos, 5, "move_list");
    throw BadRequest{field, message};
  }
}

int splat_radius_field(const json& doc) {
  const int r = int_field(doc, "splat_radius", 1);
  if (r < 0 || r > 16) throw BadRequest{"splat_radius", "splat_radius: must lie in [0, 16]"};
  return r;
}

}  // namespace

PreviewService::PreviewService(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  if (data_dir_.empty()) {
    load_error_ = "no data dir configured";
    return;
  }
  try {
    auto loaded = std::make_shared<LoadedClip>();
    loaded->dir = data_dir_;
    loaded->meta = read_meta(data_dir_);
    loaded->clip = load_clip(data_dir_);
    loaded->depths = load_depths(data_dir_, int(loaded->clip.size()));
    const auto& k = loaded->meta.intrinsics;
    if (k.width != loaded->clip[0].width || k.height != loaded->clip[0].height)
      throw DimensionError("width", "meta.json size does not match the frames");
    clip_ = std::move(loaded);
  } catch (const Error& e) {
    load_error_ = e.what();
  }
}

PreviewService::~PreviewService() { wait_for_jobs(); }

void PreviewService::wait_for_jobs() {
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(threads_mutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

Response PreviewService::clip_info() const {
  if (!clip_) return no_clip(load_error_);
  const auto& k = clip_->meta.intrinsics;
  return json_response(200, {{"frames", clip_->clip.size()},
                             {"width", k.width},
                             {"height", k.height},
                             {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}}}});
}

Response PreviewService::preview(const std::string& body) const {
  if (!clip_) return no_clip(load_error_);
  try {
    const json doc = parse_body(body);
    const int frames = int(clip_->clip.size());
    const int index = int_field(doc, "frame_index", std::nullopt);
    if (index < 0 || index >= frames)
      throw BadRequest{"frame_index", "frame_index: must lie in [0, " + std::to_string(frames) + ")"};
    const TrajectorySpec spec = parse_moves(doc, frames);
    const int radius = splat_radius_field(doc);

    const CompiledTrajectory traj = compile(spec, clip_->meta.intrinsics);
    const auto view = render_view(clip_->clip[index], clip_->depths[index], traj[0].intrinsics,
                                  traj[index].intrinsics, traj[index].pose, radius);
    Response r;
    r.content_type = "image/png";
    r.body = encode_png(view.frame);
    std::ostringstream frac;
    frac.precision(17);
    frac << valid_fraction(view.mask);
    r.headers["X-Valid-Fraction"] = frac.str();
    return r;
  } catch (const BadRequest& e) {
    return error_response(400, e.field, e.message);
  } catch (const Error& e) {
    return error_response(500, "", e.what());
  }
}

Response PreviewService::start_render(const std::string& body) {
  if (!clip_) return no_clip(load_error_);
  TrajectorySpec spec;
  int radius = 1;
  try {
    const json doc = parse_body(body);
    spec = parse_moves(doc, int(clip_->clip.size()));
    radius = splat_radius_field(doc);
  } catch (const BadRequest& e) {
    return error_response(400, e.field, e.message);
  }

  const std::string id = jobs_.create(JobKind::kRender);
  const fs::path out_dir = data_dir_ / "renders" / id;
  std::shared_ptr<const LoadedClip> clip = clip_;
  JobStore* jobs = &jobs_;
  std::thread worker([jobs, id, clip, spec, radius, out_dir] {
    jobs->start(id);
    try {
      const CompiledTrajectory traj = compile(spec, clip->meta.intrinsics);
      const int n = int(clip->clip.size());
      MaskSequence masks;
      VideoClip frames;
      json fractions = json::array();
      for (int i = 0; i < n; ++i) {
        auto view = render_view(clip->clip[i], clip->depths[i], traj[0].intrinsics, traj[i].intrinsics,
                                traj[i].pose, radius);
        fractions.push_back(valid_fraction(view.mask));
        frames.push_back(std::move(view.frame));
        masks.push_back(std::move(view.mask));
        jobs->progress(id, double(i + 1) / double(n));
      }
      save_clip(frames, out_dir);
      save_masks(masks, out_dir);
      const json report{{"frames", n}, {"splat_radius", radius}, {"valid_fraction", fractions}};
      std::ofstream(out_dir / "render_report.json") << report.dump(2) << '\n';
      std::ofstream(out_dir / "trajectory.json") << serialize_trajectory(spec) << '\n';
      jobs->finish(id, {out_dir.string()});
    } catch (const std::exception& e) {
      jobs->fail(id, e.what());
    }
  });
  {
    std::lock_guard lock(threads_mutex_);
    threads_.push_back(std::move(worker));
  }
  return json_response(202, {{"id", id}});
}

Response PreviewService::job(const std::string& id) const {
  const auto rec = jobs_.get(id);
  if (!rec) return error_response(404, "id", "unknown job " + id);
  Response r;
  r.body = rec->to_json();
  return r;
}

void serve(PreviewService& service, const std::string& host, int port) {
  httplib::Server server;
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  server.Get("/api/clip/info", [&](const httplib::Request&, httplib::Response& res) { send(res, service.clip_info()); });
  server.Post("/api/preview",
              [&](const httplib::Request& req, httplib::Response& res) { send(res, service.preview(req.body)); });
  server.Post("/api/trajectory/render",
              [&](const httplib::Request& req, httplib::Response& res) { send(res, service.start_render(req.body)); });
  server.Get(R"(/api/job/([^/]+))", [&](const httplib::Request& req, httplib::Response& res) {
    send(res, service.job(req.matches[1]));
  });
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace viewshift
