#pragma once

// Finite-difference gradient oracle and random fixtures for the policy network.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "socnav/layers.hpp"
#include "socnav/model.hpp"

namespace socnav::oracle {

using nn::Matrix;
using nn::Vector;

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

// Relative error with a small absolute floor for components near zero.
inline double rel_error(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

// Central differences of f over every entry of `x`.
inline Vector numeric_gradient(Vector& x, const std::function<double()>& f, double h = 1e-5) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double max_rel_error(const Vector& analytic, const Vector& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) worst = std::max(worst, rel_error(analytic[i], numeric[i]));
  return worst;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.history = 3;
  c.depth_width = 8;
  c.depth_height = 6;
  c.conv = {{2, 3, 2}};
  c.frame_embed = 8;
  c.pose_embed = 4;
  c.lstm_hidden = 6;
  c.velocity_hidden = {5};
  return c;
}

inline DepthFrame random_frame(Rng& rng, const ModelConfig& c, double lo = 0.0, double hi = 1.0) {
  DepthFrame f(c.depth_width, c.depth_height, 0.0f);
  for (auto& p : f.pixels) p = float(uniform(rng, lo, hi));
  return f;
}

struct Sample {
  std::vector<DepthFrame> frames;
  std::vector<HistoryStep> steps;
  Vec2 target_velocity;
  DepthFrame target_depth;
};

inline Sample random_sample(Rng& rng, const ModelConfig& c, bool close = false) {
  Sample s;
  for (int t = 0; t < c.history; ++t) s.frames.push_back(random_frame(rng, c, close ? 0.02 : 0.15, 1.0));
  for (int t = 0; t < c.history; ++t) {
    s.steps.push_back({{uniform(rng, 0, 1), uniform(rng, 0, 1)}, {uniform(rng, 0, 1), uniform(rng, 0, 1)},
                       &s.frames[std::size_t(t)]});
  }
  s.target_velocity = {uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)};
  s.target_depth = random_frame(rng, c);
  return s;
}

// Initialized weights plus jitter on every entry, so no unit sits exactly on a
// ReLU kink (zero biases over a dead conv stack would).
inline ModelParams random_params(const ModelConfig& c, std::uint64_t seed, std::uint64_t draw = 0) {
  ModelParams p = ModelParams::initialize(c, seed);
  Rng rng(seed ^ 0x5eed ^ (draw << 32));
  for (Eigen::Index i = 0; i < p.values.size(); ++i) p.values[i] += uniform(rng, -0.1, 0.1);
  return p;
}

// True when some ReLU switches within +-h of the point along a coordinate: the
// second difference is O(h) there instead of O(h^2).
inline bool near_kink(ModelParams& p, const ModelConfig& c, const Batch& batch, double h = 1e-5) {
  const double f0 = batch_loss(p, c, batch, nullptr).total;
  for (Eigen::Index i = 0; i < p.values.size(); ++i) {
    const double keep = p.values[i];
    p.values[i] = keep + h;
    const double up = batch_loss(p, c, batch, nullptr).total;
    p.values[i] = keep - h;
    const double down = batch_loss(p, c, batch, nullptr).total;
    p.values[i] = keep;
    if (std::abs(up - 2 * f0 + down) > 1e-8 * std::max(1.0, std::abs(f0))) return true;
  }
  return false;
}

// A differentiable random point for the finite-difference oracle.
inline ModelParams smooth_params(const ModelConfig& c, std::uint64_t seed, const Batch& batch, int& redraws) {
  for (std::uint64_t draw = 0;; ++draw) {
    ModelParams p = random_params(c, seed, draw);
    if (!near_kink(p, c, batch)) return p;
    ++redraws;
  }
}

inline Batch random_batch(Rng& rng, const ModelConfig& c, int n) {
  Batch b(c, n);
  for (int i = 0; i < n; ++i) {
    const Sample s = random_sample(rng, c, i % 2 == 1);
    b.set(i, s.steps, s.target_velocity, s.target_depth, c);
  }
  return b;
}

}  // namespace socnav::oracle
