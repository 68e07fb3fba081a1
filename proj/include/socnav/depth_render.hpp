#pragma once

// First-person depth rendering by perspective raycasting against obstacle
// prisms, the floor plane and agent capsules.
//
// Two renderers share one per-pixel intersection routine:
//   render_depth_reference  serial, one independent ray query per pixel
//   render_depth            OpenMP over columns, 2D hits shared per column
// Their outputs are bit-identical.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "socnav/world.hpp"

namespace socnav {

class KvDocument;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct CameraConfig {
  int width = 320;
  int height = 240;
  double fov_horizontal_deg = 135.0;
  double d_max = 7.0;
  double eye_height = 1.6;

  void validate() const;
  // tan(v/2) = tan(h/2) * height / width
  double fov_vertical_deg() const;

  static CameraConfig from_kv(const KvDocument& doc);
  void append_to(KvDocument& doc) const;
};

struct DepthFrame {
  int width = 0;
  int height = 0;
  // Row-major, row 0 at the top, column 0 at the left.
  std::vector<float> pixels;

  DepthFrame() = default;
  DepthFrame(int w, int h, float fill) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

  float at(int row, int col) const { return pixels[std::size_t(row) * width + col]; }
  float& at(int row, int col) { return pixels[std::size_t(row) * width + col]; }
  float min_value() const;
  bool operator==(const DepthFrame&) const = default;
};

struct Pose {
  Vec2 position;
  double heading = 0.0;  // radians, (-pi, pi]
};

double wrap_angle(double a);

// Range model: d / d_max inside the sensor range, 1 beyond it.
double normalize_depth(double d, double d_max);

// Camera yaw: walking direction when moving (>= 0.05 m/s), else toward the
// goal, else the previous heading.
double choose_heading(Vec2 velocity, Vec2 position, Vec2 goal, double previous_heading);

// A capsule whose axis runs vertically from the floor (z = 0) to `height`,
// swept by `radius`.
struct Capsule {
  Vec2 base;
  double radius = 0.3;
  double height = 1.7;
};

struct AgentView {
  Pose pose;
  AgentBody body;
};

struct RenderGeometry {
  const StaticMap* map = nullptr;
  std::vector<Capsule> capsules;
  bool floor = true;
};

RenderGeometry make_geometry(const StaticMap& map, std::span<const AgentView> others);

// Distance along a unit direction to the nearest surface, or nullopt.
std::optional<double> cast_ray(const Vec3& origin, const Vec3& direction,
                               const RenderGeometry& geometry);

// Unnormalized pinhole ray through the centre of pixel (row, col).
Vec3 pixel_direction(const Pose& viewer, const CameraConfig& cam, int row, int col);

// Metric distance along the pixel ray (infinity on a miss), before the range model.
double pixel_distance(const Pose& viewer, const CameraConfig& cam, const RenderGeometry& geometry,
                      int row, int col);

DepthFrame render_depth(const Pose& viewer, std::span<const AgentView> others,
                        const StaticMap& map, const CameraConfig& cam);
DepthFrame render_depth_reference(const Pose& viewer, std::span<const AgentView> others,
                                  const StaticMap& map, const CameraConfig& cam);

// 8-bit binary PGM (P5), 0 = touching, 255 = out of range.
void write_pgm(const DepthFrame& frame, const std::string& path);

}  // namespace socnav
