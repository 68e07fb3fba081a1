#include "socnav/depth_render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"

namespace socnav {

void CameraConfig::validate() const {
  if (width < 1 || height < 1) throw ConfigError("camera width and height must be >= 1");
  if (!(fov_horizontal_deg > 0.0 && fov_horizontal_deg < 180.0)) {
    throw ConfigError("camera horizontal fov must lie in (0, 180) degrees");
  }
  if (!(d_max > 0.0)) throw ConfigError("camera d_max must be > 0");
  if (!(eye_height > 0.0)) throw ConfigError("camera eye_height must be > 0");
}

double CameraConfig::fov_vertical_deg() const {
  const double half_h = fov_horizontal_deg * std::numbers::pi / 360.0;
  return 2.0 * std::atan(std::tan(half_h) * height / width) * 180.0 / std::numbers::pi;
}

CameraConfig CameraConfig::from_kv(const KvDocument& doc) {
  CameraConfig cam;
  cam.width = static_cast<int>(doc.get_int("width", cam.width));
  cam.height = static_cast<int>(doc.get_int("height", cam.height));
  cam.fov_horizontal_deg = doc.get_double("fov_horizontal_deg", cam.fov_horizontal_deg);
  cam.d_max = doc.get_double("d_max", cam.d_max);
  cam.eye_height = doc.get_double("eye_height", cam.eye_height);
  cam.validate();
  return cam;
}

void CameraConfig::append_to(KvDocument& doc) const {
  doc.add("width", std::to_string(width));
  doc.add("height", std::to_string(height));
  doc.add("fov_horizontal_deg", fov_horizontal_deg);
  doc.add("d_max", d_max);
  doc.add("eye_height", eye_height);
}

float DepthFrame::min_value() const {
  return pixels.empty() ? 1.0f : *std::min_element(pixels.begin(), pixels.end());
}

double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::remainder(a, 2.0 * pi);
  if (a <= -pi) a += 2.0 * pi;
  return a;
}

double normalize_depth(double d, double d_max) { return d < d_max ? d / d_max : 1.0; }

double choose_heading(Vec2 velocity, Vec2 position, Vec2 goal, double previous_heading) {
  if (velocity.norm() >= 0.05) return wrap_angle(std::atan2(velocity.y, velocity.x));
  const Vec2 to_goal = goal - position;
  if (to_goal.norm() > 1e-6) return wrap_angle(std::atan2(to_goal.y, to_goal.x));
  return previous_heading;
}

RenderGeometry make_geometry(const StaticMap& map, std::span<const AgentView> others) {
  RenderGeometry g;
  g.map = &map;
  g.capsules.reserve(others.size());
  for (const auto& o : others) g.capsules.push_back({o.pose.position, o.body.radius, o.body.height});
  return g;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Parameter interval of the horizontal ray p + s*h inside a vertical solid
// occupying heights [z_lo, z_hi].
struct Span {
  double enter;
  double exit;
  double z_lo;
  double z_hi;
};

struct ColumnHits {
  std::vector<Span> spans;
  std::vector<std::size_t> caps;  // capsules whose top sphere the column may hit
  std::vector<double> crossings;  // scratch
};

void collect_column(const RenderGeometry& g, Vec2 p, Vec2 h, ColumnHits& out) {
  out.spans.clear();
  out.caps.clear();
  if (g.map) {
    for (const auto& poly : g.map->obstacles) {
      auto& xs = out.crossings;
      xs.clear();
      const std::size_t n = poly.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = poly[i];
        const Vec2 e = poly[(i + 1) % n] - a;
        const double denom = cross(h, e);
        if (denom == 0.0) continue;
        const Vec2 ap = a - p;
        const double u = cross(ap, h) / denom;
        if (u < 0.0 || u >= 1.0) continue;
        xs.push_back(cross(ap, e) / denom);
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        out.spans.push_back({xs[k], xs[k + 1], 0.0, g.map->obstacle_height});
      }
    }
  }
  const double a = h.squared_norm();
  if (a == 0.0) return;
  for (std::size_t i = 0; i < g.capsules.size(); ++i) {
    const auto& c = g.capsules[i];
    const Vec2 oc = p - c.base;
    const double b = dot(h, oc);
    const double cc = oc.squared_norm() - c.radius * c.radius;
    const double disc = b * b - a * cc;
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    out.spans.push_back({(-b - root) / a, (-b + root) / a, 0.0, c.height});
    out.caps.push_back(i);
  }
}

// Nearest ray parameter along origin + s*d (d = (h, v)); infinity on a miss.
double resolve(const ColumnHits& hits, const RenderGeometry& g, const Vec3& o, const Vec3& d) {
  double best = kInf;
  const double v = d.z;
  if (g.floor && v < 0.0) best = -o.z / v;
  for (const auto& s : hits.spans) {
    double lo = std::max(s.enter, 0.0);
    double hi = s.exit;
    if (hi < lo || lo >= best) continue;
    if (v == 0.0) {
      if (o.z < s.z_lo || o.z > s.z_hi) continue;
    } else {
      const double la = (s.z_lo - o.z) / v;
      const double lb = (s.z_hi - o.z) / v;
      lo = std::max(lo, std::min(la, lb));
      hi = std::min(hi, std::max(la, lb));
      if (hi < lo) continue;
    }
    best = std::min(best, lo);
  }
  for (const std::size_t i : hits.caps) {
    const auto& c = g.capsules[i];
    const Vec3 oc{o.x - c.base.x, o.y - c.base.y, o.z - c.height};
    const double a = d.x * d.x + d.y * d.y + d.z * d.z;
    const double b = d.x * oc.x + d.y * oc.y + d.z * oc.z;
    const double cc = oc.x * oc.x + oc.y * oc.y + oc.z * oc.z - c.radius * c.radius;
    const double disc = b * b - a * cc;
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    double s = (-b - root) / a;
    if (s < 0.0) s = (-b + root) / a;
    if (s >= 0.0) best = std::min(best, s);
  }
  return best;
}

double direction_norm(const Vec3& d) { return std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z); }

double tan_half_h(const CameraConfig& cam) {
  return std::tan(cam.fov_horizontal_deg * std::numbers::pi / 360.0);
}

Vec2 column_direction(const Pose& viewer, const CameraConfig& cam, int col) {
  const Vec2 fwd{std::cos(viewer.heading), std::sin(viewer.heading)};
  const Vec2 right{fwd.y, -fwd.x};
  const double u = (2.0 * (col + 0.5) / cam.width - 1.0) * tan_half_h(cam);
  return fwd + right * u;
}

double row_slope(const CameraConfig& cam, int row) {
  const double tan_v = tan_half_h(cam) * cam.height / cam.width;
  return (1.0 - 2.0 * (row + 0.5) / cam.height) * tan_v;
}

float to_pixel(double dist, double d_max) {
  if (!(dist < d_max)) return 1.0f;
  return std::min(static_cast<float>(dist / d_max), std::nextafter(1.0f, 0.0f));
}

}  // namespace

std::optional<double> cast_ray(const Vec3& origin, const Vec3& direction,
                               const RenderGeometry& geometry) {
  ColumnHits hits;
  collect_column(geometry, {origin.x, origin.y}, {direction.x, direction.y}, hits);
  const double s = resolve(hits, geometry, origin, direction);
  if (s == kInf) return std::nullopt;
  return s * direction_norm(direction);
}

Vec3 pixel_direction(const Pose& viewer, const CameraConfig& cam, int row, int col) {
  const Vec2 h = column_direction(viewer, cam, col);
  return {h.x, h.y, row_slope(cam, row)};
}

double pixel_distance(const Pose& viewer, const CameraConfig& cam, const RenderGeometry& geometry,
                      int row, int col) {
  const Vec3 d = pixel_direction(viewer, cam, row, col);
  const Vec3 o{viewer.position.x, viewer.position.y, cam.eye_height};
  ColumnHits hits;
  collect_column(geometry, viewer.position, {d.x, d.y}, hits);
  const double s = resolve(hits, geometry, o, d);
  return s == kInf ? kInf : s * direction_norm(d);
}

DepthFrame render_depth_reference(const Pose& viewer, std::span<const AgentView> others,
                                  const StaticMap& map, const CameraConfig& cam) {
  cam.validate();
  const RenderGeometry g = make_geometry(map, others);
  DepthFrame frame(cam.width, cam.height, 1.0f);
  for (int row = 0; row < cam.height; ++row) {
    for (int col = 0; col < cam.width; ++col) {
      frame.at(row, col) = to_pixel(pixel_distance(viewer, cam, g, row, col), cam.d_max);
    }
  }
  return frame;
}

DepthFrame render_depth(const Pose& viewer, std::span<const AgentView> others,
                        const StaticMap& map, const CameraConfig& cam) {
  cam.validate();
  const RenderGeometry g = make_geometry(map, others);
  DepthFrame frame(cam.width, cam.height, 1.0f);
  const Vec3 o{viewer.position.x, viewer.position.y, cam.eye_height};
  std::vector<double> slopes(cam.height);
  for (int row = 0; row < cam.height; ++row) slopes[row] = row_slope(cam, row);

#pragma omp parallel
  {
    ColumnHits hits;
#pragma omp for schedule(static)
    for (int col = 0; col < cam.width; ++col) {
      const Vec2 h = column_direction(viewer, cam, col);
      collect_column(g, viewer.position, h, hits);
      for (int row = 0; row < cam.height; ++row) {
        const Vec3 d{h.x, h.y, slopes[row]};
        const double s = resolve(hits, g, o, d);
        const double dist = s == kInf ? kInf : s * direction_norm(d);
        frame.at(row, col) = to_pixel(dist, cam.d_max);
      }
    }
  }
  return frame;
}

void write_pgm(const DepthFrame& frame, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P5\n" << frame.width << ' ' << frame.height << "\n255\n";
  for (float p : frame.pixels) {
    const auto v = static_cast<unsigned char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f));
    out.put(static_cast<char>(v));
  }
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace socnav
