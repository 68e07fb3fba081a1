#include "socnav/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"

namespace socnav {

namespace detail {

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": file not found or unreadable");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace detail

namespace {

bool parse_number(const std::string& tok, double& out) {
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return !tok.empty() && end == tok.c_str() + tok.size() && std::isfinite(out);
}

bool parse_integral(const std::string& tok, std::int64_t& out) {
  double v = 0.0;
  if (!parse_number(tok, v) || v != std::floor(v) || std::abs(v) > 9.0e15) return false;
  out = static_cast<std::int64_t>(v);
  return true;
}

}  // namespace

std::vector<Trajectory> parse_trajectory_text(const std::string& text, const std::string& source) {
  double rate = 0.0;
  struct Row {
    std::int64_t frame;
    Vec2 pos;
  };
  std::map<int, std::map<std::int64_t, Vec2>> by_agent;

  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      const auto key = line.find("frame_rate_hz");
      if (key != std::string::npos) {
        const auto eq = line.find('=', key);
        double r = 0.0;
        std::string value = eq == std::string::npos ? "" : line.substr(eq + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        value.erase(value.find_last_not_of(" \t") + 1);
        if (!parse_number(value, r) || !(r > 0.0)) {
          throw ParseError(source, line_no, "invalid frame_rate_hz header");
        }
        rate = r;
      }
      continue;
    }
    std::istringstream fields(line);
    std::vector<std::string> tok{std::istream_iterator<std::string>(fields), {}};
    if (tok.size() != 4) throw ParseError(source, line_no, "expected 4 columns: frame agent_id x y");
    std::int64_t frame = 0;
    std::int64_t agent = 0;
    Vec2 p;
    if (!parse_integral(tok[0], frame) || frame < 0) {
      throw ParseError(source, line_no, "invalid frame '" + tok[0] + "'");
    }
    if (!parse_integral(tok[1], agent)) {
      throw ParseError(source, line_no, "invalid agent_id '" + tok[1] + "'");
    }
    if (!parse_number(tok[2], p.x)) throw ParseError(source, line_no, "invalid x '" + tok[2] + "'");
    if (!parse_number(tok[3], p.y)) throw ParseError(source, line_no, "invalid y '" + tok[3] + "'");
    if (rate == 0.0) throw ParseError(source, line_no, "data before '# frame_rate_hz=' header");
    auto& samples = by_agent[static_cast<int>(agent)];
    if (!samples.emplace(frame, p).second) {
      throw ParseError(source, line_no, "duplicate (frame, agent_id) pair");
    }
  }

  std::vector<Trajectory> out;
  for (const auto& [agent, frames] : by_agent) {
    if (frames.size() < 2) continue;
    Trajectory t;
    t.agent_id = agent;
    for (const auto& [frame, p] : frames) t.samples.push_back({double(frame) / rate, p});
    t.goal = t.samples.back().position;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Trajectory> parse_trajectory_file(const std::string& path) {
  return parse_trajectory_text(read_text_file(path), path);
}

std::string format_trajectory_text(std::span<const Trajectory> trajs, double frame_rate_hz) {
  struct Row {
    std::int64_t frame;
    int agent;
    Vec2 p;
  };
  std::vector<Row> rows;
  for (const auto& t : trajs) {
    for (const auto& s : t.samples) {
      rows.push_back({std::llround(s.t * frame_rate_hz), t.agent_id, s.position});
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.agent < b.agent;
  });
  std::string out = "# frame_rate_hz=" + format_double(frame_rate_hz) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.frame) + ' ' + std::to_string(r.agent) + ' ' + format_double(r.p.x) +
           ' ' + format_double(r.p.y) + '\n';
  }
  return out;
}

Trajectory resample(const Trajectory& traj, double dt) {
  if (!(dt > 0.0)) throw ConfigError("resample: dt must be > 0");
  Trajectory out;
  out.agent_id = traj.agent_id;
  out.goal = traj.goal;
  const double t0 = traj.start_time();
  const double t1 = traj.end_time();
  for (std::int64_t k = 0;; ++k) {
    const double t = t0 + double(k) * dt;
    if (t > t1 + 1e-9) break;
    out.samples.push_back({t, interpolate_position(traj, t)});
  }
  return out;
}

void NormalizationSpec::validate() const {
  if (!(min.x < max.x && min.y < max.y) || !min.finite() || !max.finite()) {
    throw ConfigError("normalization spec needs min < max on both axes");
  }
}

NormalizationSpec NormalizationSpec::from_maps(std::span<const StaticMap> maps) {
  if (maps.empty()) throw ConfigError("normalization needs at least one map");
  NormalizationSpec spec{map_bounds(maps.front()).min, map_bounds(maps.front()).max};
  for (const auto& m : maps) {
    const Bounds b = map_bounds(m);
    spec.min = {std::min(spec.min.x, b.min.x), std::min(spec.min.y, b.min.y)};
    spec.max = {std::max(spec.max.x, b.max.x), std::max(spec.max.y, b.max.y)};
  }
  spec.validate();
  return spec;
}

NormalizationSpec NormalizationSpec::from_kv(const KvDocument& doc) {
  NormalizationSpec spec;
  spec.min = {doc.require_double("norm_min_x"), doc.require_double("norm_min_y")};
  spec.max = {doc.require_double("norm_max_x"), doc.require_double("norm_max_y")};
  spec.validate();
  return spec;
}

void NormalizationSpec::append_to(KvDocument& doc) const {
  doc.add("norm_min_x", min.x);
  doc.add("norm_min_y", min.y);
  doc.add("norm_max_x", max.x);
  doc.add("norm_max_y", max.y);
}

Vec2 normalize(Vec2 p, const NormalizationSpec& spec) {
  return {(p.x - spec.min.x) / (spec.max.x - spec.min.x),
          (p.y - spec.min.y) / (spec.max.y - spec.min.y)};
}

Vec2 denormalize(Vec2 q, const NormalizationSpec& spec) {
  return {spec.min.x + q.x * (spec.max.x - spec.min.x),
          spec.min.y + q.y * (spec.max.y - spec.min.y)};
}

DatasetSplit split_dataset(std::span<const int> ids, std::uint64_t seed) {
  if (ids.size() < 2) throw ConfigError("split_dataset needs at least 2 trajectory ids");
  std::vector<int> order(ids.begin(), ids.end());
  std::sort(order.begin(), order.end());
  // Fisher-Yates with raw engine output so the permutation does not depend
  // on the standard library's distribution implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = rng() % (i + 1);
    std::swap(order[i], order[j]);
  }
  const std::size_t n_eval = std::max<std::size_t>(1, order.size() / 10);
  DatasetSplit split;
  split.seed = seed;
  split.eval.assign(order.begin(), order.begin() + n_eval);
  split.train.assign(order.begin() + n_eval, order.end());
  std::sort(split.eval.begin(), split.eval.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

namespace {

constexpr std::uint32_t kSampleShardVersion = 1;
constexpr std::uint32_t kTrajectoryShardVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_sample_shard(std::span<const SampleRecord> records) {
  const std::uint32_t w = records.empty() ? 0 : records.front().depth.width;
  const std::uint32_t h = records.empty() ? 0 : records.front().depth.height;
  detail::ByteWriter out;
  out.bytes("SOCN");
  out.u32(kSampleShardVersion);
  out.u32(w);
  out.u32(h);
  out.u64(records.size());
  for (const auto& r : records) {
    if (std::uint32_t(r.depth.width) != w || std::uint32_t(r.depth.height) != h ||
        r.depth.pixels.size() != std::size_t(w) * h) {
      throw ShardError(ShardError::Code::kDimensionMismatch,
                       "sample shard: records have differing depth dimensions");
    }
    out.u32(r.agent_id);
    out.f64(r.t);
    for (const Vec2 v : {r.position, r.goal, r.velocity}) {
      out.f64(v.x);
      out.f64(v.y);
    }
    for (float p : r.depth.pixels) out.f32(p);
  }
  return out.take();
}

std::vector<SampleRecord> decode_sample_shard(std::span<const std::uint8_t> bytes) {
  using Code = ShardError::Code;
  detail::ByteReader in(bytes);
  std::string magic;
  if (!in.bytes(4, magic)) throw ShardError(Code::kTruncated, "sample shard: truncated header");
  if (magic != "SOCN") throw ShardError(Code::kBadMagic, "sample shard: bad magic");
  std::uint32_t version = 0, w = 0, h = 0;
  std::uint64_t count = 0;
  if (!in.u32(version) || !in.u32(w) || !in.u32(h) || !in.u64(count)) {
    throw ShardError(Code::kTruncated, "sample shard: truncated header");
  }
  if (version != kSampleShardVersion) {
    throw ShardError(Code::kBadVersion, "sample shard: unsupported version " + std::to_string(version));
  }
  if (count > 0 && (w == 0 || h == 0 || std::uint64_t(w) * h > (1u << 26))) {
    throw ShardError(Code::kDimensionMismatch, "sample shard: invalid depth dimensions");
  }
  const std::uint64_t record_bytes = 4 + 8 * 7 + 4ull * w * h;
  if (count > in.remaining() / std::max<std::uint64_t>(record_bytes, 1)) {
    throw ShardError(Code::kTruncated, "sample shard: truncated (header promises " +
                                           std::to_string(count) + " records)");
  }
  std::vector<SampleRecord> out(count);
  for (auto& r : out) {
    in.u32(r.agent_id);
    in.f64(r.t);
    for (Vec2* v : {&r.position, &r.goal, &r.velocity}) {
      in.f64(v->x);
      in.f64(v->y);
    }
    r.depth = DepthFrame(int(w), int(h), 0.0f);
    for (float& p : r.depth.pixels) in.f32(p);
  }
  if (in.remaining() != 0) throw ShardError(Code::kTrailingData, "sample shard: trailing bytes");
  return out;
}

void write_sample_shard(std::span<const SampleRecord> records, const std::string& path) {
  detail::write_binary_file(path, encode_sample_shard(records));
}

std::vector<SampleRecord> read_sample_shard(const std::string& path) {
  try {
    return decode_sample_shard(detail::read_binary_file(path));
  } catch (const ShardError& e) {
    throw ShardError(e.code(), path + ": " + e.what());
  }
}

void write_trajectory_shard(std::span<const Trajectory> trajs, const std::string& path) {
  detail::ByteWriter out;
  out.bytes("SOCT");
  out.u32(kTrajectoryShardVersion);
  out.u32(static_cast<std::uint32_t>(trajs.size()));
  for (const auto& t : trajs) {
    out.u32(static_cast<std::uint32_t>(t.agent_id));
    out.f64(t.goal.x);
    out.f64(t.goal.y);
    out.u32(static_cast<std::uint32_t>(t.samples.size()));
    for (const auto& s : t.samples) {
      out.f64(s.t);
      out.f64(s.position.x);
      out.f64(s.position.y);
    }
  }
  detail::write_binary_file(path, out.data());
}

std::vector<Trajectory> read_trajectory_shard(const std::string& path) {
  using Code = ShardError::Code;
  const auto bytes = detail::read_binary_file(path);
  detail::ByteReader in(bytes);
  std::string magic;
  if (!in.bytes(4, magic)) throw ShardError(Code::kTruncated, path + ": truncated header");
  if (magic != "SOCT") throw ShardError(Code::kBadMagic, path + ": bad magic");
  std::uint32_t version = 0, count = 0;
  if (!in.u32(version) || !in.u32(count)) throw ShardError(Code::kTruncated, path + ": truncated header");
  if (version != kTrajectoryShardVersion) {
    throw ShardError(Code::kBadVersion, path + ": unsupported version");
  }
  std::vector<Trajectory> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Trajectory t;
    std::uint32_t id = 0, n = 0;
    if (!in.u32(id) || !in.f64(t.goal.x) || !in.f64(t.goal.y) || !in.u32(n) ||
        std::uint64_t(n) * 24 > in.remaining()) {
      throw ShardError(Code::kTruncated, path + ": truncated trajectory");
    }
    t.agent_id = static_cast<int>(id);
    t.samples.resize(n);
    for (auto& s : t.samples) {
      in.f64(s.t);
      in.f64(s.position.x);
      in.f64(s.position.y);
    }
    out.push_back(std::move(t));
  }
  if (in.remaining() != 0) throw ShardError(Code::kTrailingData, path + ": trailing bytes");
  return out;
}

std::vector<SampleRecord> render_samples(const Scene& scene, const CameraConfig& camera,
                                         const NormalizationSpec& normalization,
                                         const std::function<void(std::size_t)>& progress) {
  camera.validate();
  struct Job {
    const Trajectory* traj;
    std::size_t sample;
    double heading;
  };
  std::vector<Job> jobs;
  for (const auto& traj : scene.trajectories) {
    double heading = 0.0;
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
      const auto& s = traj.samples[i];
      heading = choose_heading(finite_difference_velocity(traj, s.t, scene.dt), s.position, traj.goal,
                               heading);
      jobs.push_back({&traj, i, heading});
    }
  }

  std::vector<SampleRecord> out(jobs.size());
  constexpr std::size_t kChunk = 1000;
  for (std::size_t begin = 0; begin < jobs.size(); begin += kChunk) {
    const long end = long(std::min(jobs.size(), begin + kChunk));
#pragma omp parallel for schedule(dynamic)
    for (long j = long(begin); j < end; ++j) {
      const Job& job = jobs[std::size_t(j)];
      const auto& s = job.traj->samples[job.sample];
      std::vector<AgentView> others;
      for (const auto& o : scene.trajectories) {
        if (&o == job.traj || !o.active_at(s.t)) continue;
        others.push_back({{interpolate_position(o, s.t), 0.0}, scene.body});
      }
      SampleRecord& r = out[std::size_t(j)];
      r.agent_id = static_cast<std::uint32_t>(job.traj->agent_id);
      r.t = s.t;
      r.position = normalize(s.position, normalization);
      r.goal = normalize(job.traj->goal, normalization);
      r.velocity = finite_difference_velocity(*job.traj, s.t, scene.dt);
      r.depth = render_depth({s.position, job.heading}, others, scene.map, camera);
    }
    if (progress) progress(std::size_t(end));
  }
  return out;
}

std::string manifest_path(const std::string& artifact) { return artifact + ".manifest"; }

}  // namespace socnav
