#pragma once

// Trajectory ingestion, coordinate normalization, train/eval splits, and the
// binary containers for trajectory sets (SOCT) and rendered samples (SOCN).

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "socnav/depth_render.hpp"
#include "socnav/error.hpp"
#include "socnav/world.hpp"

namespace socnav {

class KvDocument;

struct RawTrajectoryRecord {
  std::int64_t frame = 0;
  int agent_id = 0;
  Vec2 position;
};

// Input: `# frame_rate_hz=<rate>` header, then `frame agent_id x y` rows.
// Agents observed in a single frame are dropped.
std::vector<Trajectory> parse_trajectory_text(const std::string& text, const std::string& source);
std::vector<Trajectory> parse_trajectory_file(const std::string& path);

// Writes the same text format back (frame = round(t * rate)); used to export
// generated scenes as annotation-style files.
std::string format_trajectory_text(std::span<const Trajectory> trajs, double frame_rate_hz);

// Uniform grid start + k*dt up to the last sample; the goal is preserved.
Trajectory resample(const Trajectory& traj, double dt);

struct NormalizationSpec {
  Vec2 min;
  Vec2 max;

  void validate() const;
  // Extremes over the bounds of every map.
  static NormalizationSpec from_maps(std::span<const StaticMap> maps);
  static NormalizationSpec from_kv(const KvDocument& doc);
  void append_to(KvDocument& doc) const;
};

// Affine per component; no clamping outside [min, max].
Vec2 normalize(Vec2 p, const NormalizationSpec& spec);
Vec2 denormalize(Vec2 q, const NormalizationSpec& spec);

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> eval;
  std::uint64_t seed = 0;
};

// Trajectory-level split: eval gets max(1, floor(n / 10)) ids drawn by a
// seeded shuffle; both lists are returned sorted. Throws ConfigError for n < 2.
DatasetSplit split_dataset(std::span<const int> ids, std::uint64_t seed);

struct SampleRecord {
  std::uint32_t agent_id = 0;
  double t = 0.0;
  Vec2 position;  // normalized
  Vec2 goal;      // normalized
  Vec2 velocity;  // m/s
  DepthFrame depth;

  bool operator==(const SampleRecord&) const = default;
};

class ShardError : public Error {
 public:
  enum class Code { kBadMagic, kBadVersion, kTruncated, kDimensionMismatch, kTrailingData };
  ShardError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

// One record per (agent, sample time), agents in scene order. The camera faces
// along the agent's finite-difference velocity (see choose_heading). Frames are
// rendered in chunks of 1000; `progress` receives the running count after each.
std::vector<SampleRecord> render_samples(const Scene& scene, const CameraConfig& camera,
                                         const NormalizationSpec& normalization,
                                         const std::function<void(std::size_t)>& progress = {});

// Little-endian: "SOCN", u32 version, u32 width, u32 height, u64 count, then
// per record: u32 agent_id, f64 t, f64x2 pos, f64x2 goal, f64x2 vel,
// f32 x (width*height) depth.
void write_sample_shard(std::span<const SampleRecord> records, const std::string& path);
std::vector<SampleRecord> read_sample_shard(const std::string& path);
std::vector<std::uint8_t> encode_sample_shard(std::span<const SampleRecord> records);
std::vector<SampleRecord> decode_sample_shard(std::span<const std::uint8_t> bytes);

// Little-endian: "SOCT", u32 version, u32 count, then per trajectory:
// u32 agent_id, f64x2 goal, u32 n, n x (f64 t, f64 x, f64 y).
void write_trajectory_shard(std::span<const Trajectory> trajs, const std::string& path);
std::vector<Trajectory> read_trajectory_shard(const std::string& path);

// Text manifest written next to every artifact as `<artifact>.manifest`.
std::string manifest_path(const std::string& artifact);

}  // namespace socnav
