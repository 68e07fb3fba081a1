#include "socnav/model.hpp"

#include <cmath>
#include <random>

#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"
#include "socnav/layers.hpp"

namespace socnav {

using nn::ConstMatrixView;
using nn::ConstVectorView;
using nn::Matrix;
using nn::MatrixView;
using nn::VectorView;

void ModelConfig::validate() const {
  if (history < 1) throw ConfigError("model history (T) must be >= 1");
  if (depth_width < 1 || depth_height < 1) throw ConfigError("model depth size must be >= 1");
  if (frame_embed < 1 || pose_embed < 1 || lstm_hidden < 1) {
    throw ConfigError("model embedding and hidden dims must be >= 1");
  }
  for (int d : velocity_hidden) {
    if (d < 1) throw ConfigError("velocity head dims must be >= 1");
  }
  if (!(aux_weight >= 0.0) || !std::isfinite(aux_weight)) throw ConfigError("aux_weight (k) must be >= 0");
  if (!(proximity_weight > 1.0) || !std::isfinite(proximity_weight)) {
    throw ConfigError("proximity_weight (c) must be > 1");
  }
  if (!(proximity_threshold > 0.0 && proximity_threshold < 1.0)) {
    throw ConfigError("proximity_threshold (beta) must lie in (0, 1)");
  }
  int h = depth_height;
  int w = depth_width;
  for (const auto& c : conv) {
    if (c.channels < 1 || c.kernel < 1 || c.stride < 1) throw ConfigError("conv dims must be >= 1");
    if (c.kernel > h || c.kernel > w) {
      throw ConfigError("conv stack reduces the depth frame below one pixel");
    }
    h = (h - c.kernel) / c.stride + 1;
    w = (w - c.kernel) / c.stride + 1;
  }
}

ModelConfig ModelConfig::from_kv(const KvDocument& doc) {
  ModelConfig c;
  c.history = static_cast<int>(doc.get_int("history", c.history));
  c.depth_width = static_cast<int>(doc.get_int("depth_width", c.depth_width));
  c.depth_height = static_cast<int>(doc.get_int("depth_height", c.depth_height));
  if (const auto* e = doc.find("conv")) {
    c.conv.clear();
    for (const auto& t : doc.parse_int_tuples(*e)) {
      if (t.size() != 3) throw ParseError(doc.source(), e->line, "conv entries are (channels,kernel,stride)");
      c.conv.push_back({int(t[0]), int(t[1]), int(t[2])});
    }
  }
  c.frame_embed = static_cast<int>(doc.get_int("frame_embed", c.frame_embed));
  c.pose_embed = static_cast<int>(doc.get_int("pose_embed", c.pose_embed));
  c.lstm_hidden = static_cast<int>(doc.get_int("lstm_hidden", c.lstm_hidden));
  if (const auto* e = doc.find("velocity_hidden")) {
    c.velocity_hidden.clear();
    for (auto v : doc.parse_int_list(*e)) c.velocity_hidden.push_back(int(v));
  }
  c.aux_weight = doc.get_double("aux_weight", c.aux_weight);
  c.proximity_weight = doc.get_double("proximity_weight", c.proximity_weight);
  c.proximity_threshold = doc.get_double("proximity_threshold", c.proximity_threshold);
  c.aux_enabled = doc.get_bool("aux_enabled", c.aux_enabled);
  c.validate();
  return c;
}

void ModelConfig::append_to(KvDocument& doc) const {
  doc.add("history", std::to_string(history));
  doc.add("depth_width", std::to_string(depth_width));
  doc.add("depth_height", std::to_string(depth_height));
  std::string conv_text;
  for (const auto& c : conv) {
    if (!conv_text.empty()) conv_text += ' ';
    conv_text += "(" + std::to_string(c.channels) + "," + std::to_string(c.kernel) + "," +
                 std::to_string(c.stride) + ")";
  }
  doc.add("conv", conv_text);
  doc.add("frame_embed", std::to_string(frame_embed));
  doc.add("pose_embed", std::to_string(pose_embed));
  doc.add("lstm_hidden", std::to_string(lstm_hidden));
  std::string vh;
  for (int d : velocity_hidden) {
    if (!vh.empty()) vh += ' ';
    vh += std::to_string(d);
  }
  doc.add("velocity_hidden", vh);
  doc.add("aux_weight", aux_weight);
  doc.add("proximity_weight", proximity_weight);
  doc.add("proximity_threshold", proximity_threshold);
  doc.add("aux_enabled", aux_enabled ? "true" : "false");
}

std::uint64_t ModelConfig::digest() const {
  KvDocument doc;
  append_to(doc);
  return fnv1a64(doc.to_string());
}

namespace {

std::vector<nn::ConvShape> conv_shapes(const ModelConfig& config) {
  std::vector<nn::ConvShape> shapes;
  int channels = 1;
  int h = config.depth_height;
  int w = config.depth_width;
  for (const auto& c : config.conv) {
    nn::ConvShape s{channels, h, w, c.channels, c.kernel, c.stride};
    shapes.push_back(s);
    channels = c.channels;
    h = s.out_height();
    w = s.out_width();
  }
  return shapes;
}

int flat_size(const ModelConfig& config, const std::vector<nn::ConvShape>& shapes) {
  if (shapes.empty()) return config.pixels();
  return shapes.back().out_channels * shapes.back().out_pixels();
}

}  // namespace

ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  const auto shapes = conv_shapes(config);
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    add("conv" + std::to_string(l) + ".w", shapes[l].out_channels, shapes[l].patch_size());
    add("conv" + std::to_string(l) + ".b", shapes[l].out_channels, 1);
  }
  add("frame.w", config.frame_embed, flat_size(config, shapes));
  add("frame.b", config.frame_embed, 1);
  add("pose.w", config.pose_embed, 4);
  add("pose.b", config.pose_embed, 1);
  const int h = config.lstm_hidden;
  int in = config.frame_embed + config.pose_embed;
  for (int l = 0; l < ModelConfig::kLstmLayers; ++l) {
    add("lstm" + std::to_string(l) + ".wx", 4 * h, in);
    add("lstm" + std::to_string(l) + ".wh", 4 * h, h);
    add("lstm" + std::to_string(l) + ".b", 4 * h, 1);
    in = h;
  }
  in = h;
  for (std::size_t l = 0; l < config.velocity_hidden.size(); ++l) {
    add("vel" + std::to_string(l) + ".w", config.velocity_hidden[l], in);
    add("vel" + std::to_string(l) + ".b", config.velocity_hidden[l], 1);
    in = config.velocity_hidden[l];
  }
  add("vel_out.w", 2, in);
  add("vel_out.b", 2, 1);
  add("depth.w", config.pixels(), h);
  add("depth.b", config.pixels(), 1);
}

void ParamLayout::add(std::string name, int rows, int cols) {
  blocks_.push_back({std::move(name), rows, cols, total_});
  total_ += std::size_t(rows) * cols;
}

const ParamBlock& ParamLayout::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw ConfigError("no parameter block named '" + name + "'");
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  return {Eigen::VectorXd::Zero(Eigen::Index(ParamLayout(config).total()))};
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  const ParamLayout layout(config);
  ModelParams p = zeros(config);
  std::mt19937_64 rng(seed);
  const int h = config.lstm_hidden;
  for (const auto& b : layout.blocks()) {
    if (b.cols == 1) {
      if (b.name.starts_with("lstm")) {
        for (int i = h; i < 2 * h; ++i) p.values[Eigen::Index(b.offset) + i] = 1.0;
      }
      continue;
    }
    const double bound = std::sqrt(6.0 / b.cols);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const double u = double(rng() >> 11) * 0x1.0p-53;
      p.values[Eigen::Index(b.offset + i)] = (2.0 * u - 1.0) * bound;
    }
  }
  return p;
}

bool ModelParams::all_finite() const { return values.allFinite(); }

Batch::Batch(const ModelConfig& config, int n)
    : size(n),
      steps(config.history),
      pixels(config.pixels()),
      frames(Eigen::Index(n) * config.history * config.pixels(), 1),
      poses(4, Eigen::Index(n) * config.history),
      target_velocity(2, n),
      target_depth(config.pixels(), n),
      weight(n) {}

namespace {

void check_frame(const DepthFrame& f, const ModelConfig& config) {
  if (f.width != config.depth_width || f.height != config.depth_height) {
    throw ConfigError("depth frame is " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                      ", model expects " + std::to_string(config.depth_width) + "x" +
                      std::to_string(config.depth_height));
  }
}

void fill_inputs(Batch& batch, int index, std::span<const HistoryStep> history,
                 const ModelConfig& config) {
  if (int(history.size()) != batch.steps) {
    throw ConfigError("history has " + std::to_string(history.size()) + " steps, model expects " +
                      std::to_string(batch.steps));
  }
  for (int t = 0; t < batch.steps; ++t) {
    const auto& step = history[std::size_t(t)];
    if (!step.depth) throw ConfigError("history step without a depth frame");
    check_frame(*step.depth, config);
    const Eigen::Index col = Eigen::Index(t) * batch.size + index;
    const Eigen::Index base = col * batch.pixels;
    for (int p = 0; p < batch.pixels; ++p) batch.frames(base + p, 0) = step.depth->pixels[std::size_t(p)];
    batch.poses.col(col) << step.position.x, step.position.y, step.goal.x, step.goal.y;
  }
}

}  // namespace

void Batch::set(int index, std::span<const HistoryStep> history, Vec2 target_v,
                const DepthFrame& target, const ModelConfig& config) {
  fill_inputs(*this, index, history, config);
  check_frame(target, config);
  target_velocity.col(index) << target_v.x, target_v.y;
  for (int p = 0; p < pixels; ++p) target_depth(p, index) = target.pixels[std::size_t(p)];
  weight[index] = proximity_weight(*history.back().depth, config);
}

double proximity_weight(const DepthFrame& current, const ModelConfig& config) {
  return double(current.min_value()) < config.proximity_threshold ? config.proximity_weight : 1.0;
}

namespace {

struct ForwardCache {
  std::vector<Matrix> conv_cols;
  std::vector<Matrix> conv_act;  // post-ReLU, (images * pixels) x channels
  Matrix flat;                   // features x images
  Matrix frame_emb;
  Matrix pose_emb;
  nn::LstmCache lstm[ModelConfig::kLstmLayers];
  Matrix last;  // hidden x batch
  std::vector<Matrix> vel_act;
  Matrix velocity;  // 2 x batch
  Matrix depth;     // pixels x batch, post-sigmoid
};

class Network {
 public:
  explicit Network(const ModelConfig& config)
      : config_(config), layout_(config), shapes_(conv_shapes(config)) {}

  const ParamLayout& layout() const { return layout_; }

  ConstMatrixView w(const Eigen::VectorXd& v, const std::string& name) const {
    const auto& b = layout_.block(name);
    return {v.data() + b.offset, b.rows, b.cols};
  }
  ConstVectorView b(const Eigen::VectorXd& v, const std::string& name) const {
    const auto& blk = layout_.block(name);
    return {v.data() + blk.offset, blk.rows};
  }
  MatrixView gw(Eigen::VectorXd& v, const std::string& name) const {
    const auto& b = layout_.block(name);
    return {v.data() + b.offset, b.rows, b.cols};
  }
  VectorView gb(Eigen::VectorXd& v, const std::string& name) const {
    const auto& blk = layout_.block(name);
    return {v.data() + blk.offset, blk.rows};
  }

  void forward(const Eigen::VectorXd& p, const Batch& batch, ForwardCache& c) const {
    const int images = batch.size * batch.steps;
    const int layers = int(shapes_.size());
    c.conv_cols.resize(std::size_t(layers));
    c.conv_act.resize(std::size_t(layers));
    const Matrix* input = &batch.frames;
    for (int l = 0; l < layers; ++l) {
      const std::string n = "conv" + std::to_string(l);
      nn::conv_forward(shapes_[std::size_t(l)], images, w(p, n + ".w"), b(p, n + ".b"), *input,
                       c.conv_cols[std::size_t(l)], c.conv_act[std::size_t(l)]);
      nn::relu_inplace(c.conv_act[std::size_t(l)]);
      input = &c.conv_act[std::size_t(l)];
    }
    flatten(*input, images, c.flat);

    nn::dense_forward(w(p, "frame.w"), b(p, "frame.b"), c.flat, c.frame_emb);
    nn::relu_inplace(c.frame_emb);
    nn::dense_forward(w(p, "pose.w"), b(p, "pose.b"), batch.poses, c.pose_emb);
    nn::relu_inplace(c.pose_emb);

    Matrix x(c.frame_emb.rows() + c.pose_emb.rows(), images);
    x << c.frame_emb, c.pose_emb;
    for (int l = 0; l < ModelConfig::kLstmLayers; ++l) {
      const std::string n = "lstm" + std::to_string(l);
      nn::lstm_forward(w(p, n + ".wx"), w(p, n + ".wh"), b(p, n + ".b"), x, batch.steps,
                       batch.size, c.lstm[l]);
      x = c.lstm[l].hidden_out;
    }
    c.last = x.rightCols(batch.size);

    c.vel_act.resize(config_.velocity_hidden.size());
    const Matrix* h = &c.last;
    for (std::size_t l = 0; l < config_.velocity_hidden.size(); ++l) {
      const std::string n = "vel" + std::to_string(l);
      nn::dense_forward(w(p, n + ".w"), b(p, n + ".b"), *h, c.vel_act[l]);
      nn::relu_inplace(c.vel_act[l]);
      h = &c.vel_act[l];
    }
    nn::dense_forward(w(p, "vel_out.w"), b(p, "vel_out.b"), *h, c.velocity);

    if (config_.aux_enabled) {
      nn::dense_forward(w(p, "depth.w"), b(p, "depth.b"), c.last, c.depth);
      c.depth = c.depth.unaryExpr([](double v) { return nn::sigmoid(v); });
    }
  }

  // d_velocity: dL/d velocity; d_depth_pre: dL/d depth pre-activation (aux only).
  void backward(const Eigen::VectorXd& p, const Batch& batch, const ForwardCache& c,
                const Matrix& d_velocity, const Matrix* d_depth_pre, Eigen::VectorXd& g) const {
    const int images = batch.size * batch.steps;
    const std::size_t vl = config_.velocity_hidden.size();

    Matrix d_last;
    Matrix d_h;
    {
      const Matrix& in = vl == 0 ? c.last : c.vel_act[vl - 1];
      nn::dense_backward(w(p, "vel_out.w"), in, d_velocity, gw(g, "vel_out.w"), gb(g, "vel_out.b"),
                         &d_h);
    }
    for (std::size_t l = vl; l-- > 0;) {
      nn::relu_backward_inplace(c.vel_act[l], d_h);
      const std::string n = "vel" + std::to_string(l);
      const Matrix& in = l == 0 ? c.last : c.vel_act[l - 1];
      Matrix d_in;
      nn::dense_backward(w(p, n + ".w"), in, d_h, gw(g, n + ".w"), gb(g, n + ".b"), &d_in);
      d_h = std::move(d_in);
    }
    d_last = std::move(d_h);
    if (d_depth_pre) {
      Matrix d_from_depth;
      nn::dense_backward(w(p, "depth.w"), c.last, *d_depth_pre, gw(g, "depth.w"), gb(g, "depth.b"),
                         &d_from_depth);
      d_last += d_from_depth;
    }

    Matrix d_hidden = Matrix::Zero(config_.lstm_hidden, images);
    d_hidden.rightCols(batch.size) = d_last;
    for (int l = ModelConfig::kLstmLayers - 1; l >= 0; --l) {
      const std::string n = "lstm" + std::to_string(l);
      Matrix d_in;
      nn::lstm_backward(w(p, n + ".wx"), w(p, n + ".wh"), c.lstm[l], d_hidden, gw(g, n + ".wx"),
                        gw(g, n + ".wh"), gb(g, n + ".b"), &d_in);
      d_hidden = std::move(d_in);
    }

    Matrix d_frame = d_hidden.topRows(config_.frame_embed);
    Matrix d_pose = d_hidden.bottomRows(config_.pose_embed);
    nn::relu_backward_inplace(c.pose_emb, d_pose);
    nn::dense_backward(w(p, "pose.w"), batch.poses, d_pose, gw(g, "pose.w"), gb(g, "pose.b"), nullptr);
    nn::relu_backward_inplace(c.frame_emb, d_frame);
    const bool need_flat = !shapes_.empty();
    Matrix d_flat;
    nn::dense_backward(w(p, "frame.w"), c.flat, d_frame, gw(g, "frame.w"), gb(g, "frame.b"),
                       need_flat ? &d_flat : nullptr);
    if (!need_flat) return;

    Matrix d_act;
    unflatten(d_flat, images, d_act);
    for (int l = int(shapes_.size()) - 1; l >= 0; --l) {
      nn::relu_backward_inplace(c.conv_act[std::size_t(l)], d_act);
      const std::string n = "conv" + std::to_string(l);
      Matrix d_in;
      nn::conv_backward(shapes_[std::size_t(l)], images, w(p, n + ".w"), c.conv_cols[std::size_t(l)],
                        d_act, gw(g, n + ".w"), gb(g, n + ".b"), l > 0 ? &d_in : nullptr);
      d_act = std::move(d_in);
    }
  }

 private:
  int last_channels() const { return shapes_.empty() ? 1 : shapes_.back().out_channels; }
  int last_pixels() const { return shapes_.empty() ? config_.pixels() : shapes_.back().out_pixels(); }

  // (images * P) x C  ->  (C * P) x images, channel-major features.
  void flatten(const Matrix& act, int images, Matrix& flat) const {
    const int ch = last_channels();
    const int px = last_pixels();
    flat.resize(Eigen::Index(ch) * px, images);
    for (int n = 0; n < images; ++n) {
      for (int c = 0; c < ch; ++c) {
        for (int q = 0; q < px; ++q) flat(Eigen::Index(c) * px + q, n) = act(Eigen::Index(n) * px + q, c);
      }
    }
  }
  void unflatten(const Matrix& flat, int images, Matrix& act) const {
    const int ch = last_channels();
    const int px = last_pixels();
    act.resize(Eigen::Index(images) * px, ch);
    for (int n = 0; n < images; ++n) {
      for (int c = 0; c < ch; ++c) {
        for (int q = 0; q < px; ++q) act(Eigen::Index(n) * px + q, c) = flat(Eigen::Index(c) * px + q, n);
      }
    }
  }

  ModelConfig config_;
  ParamLayout layout_;
  std::vector<nn::ConvShape> shapes_;
};

void check_params(const ModelParams& params, const ParamLayout& layout) {
  if (params.size() != layout.total()) {
    throw ConfigError("parameter vector has " + std::to_string(params.size()) +
                      " entries, model layout needs " + std::to_string(layout.total()));
  }
}

}  // namespace

ModelOutput forward(const ModelParams& params, const ModelConfig& config,
                    std::span<const HistoryStep> history) {
  const Network net(config);
  check_params(params, net.layout());
  Batch batch;
  batch.size = 1;
  batch.steps = config.history;
  batch.pixels = config.pixels();
  batch.frames.resize(Eigen::Index(config.history) * config.pixels(), 1);
  batch.poses.resize(4, config.history);
  fill_inputs(batch, 0, history, config);

  ForwardCache cache;
  net.forward(params.values, batch, cache);
  ModelOutput out;
  out.velocity = {cache.velocity(0, 0), cache.velocity(1, 0)};
  if (config.aux_enabled) {
    out.depth.emplace(cache.depth.data(), cache.depth.data() + cache.depth.size());
  }
  return out;
}

LossTerms loss(const ModelOutput& output, Vec2 target_velocity, const DepthFrame& target_depth,
               const DepthFrame& current, const ModelConfig& config) {
  LossTerms t;
  t.weight = proximity_weight(current, config);
  t.velocity = t.weight * (target_velocity - output.velocity).squared_norm();
  if (config.aux_enabled) {
    if (!output.depth || output.depth->size() != target_depth.pixels.size()) {
      throw ConfigError("predicted and target depth sizes differ");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < target_depth.pixels.size(); ++i) {
      const double e = double(target_depth.pixels[i]) - (*output.depth)[i];
      sum += e * e;
    }
    t.depth = t.weight * sum / double(target_depth.pixels.size());
  }
  t.total = t.velocity + config.aux_weight * t.depth;
  return t;
}

LossTerms batch_loss(const ModelParams& params, const ModelConfig& config, const Batch& batch,
                     Eigen::VectorXd* gradient) {
  if (batch.size < 1) throw ConfigError("empty batch");
  if (batch.steps != config.history || batch.pixels != config.pixels()) {
    throw ConfigError("batch shape does not match the model config");
  }
  const Network net(config);
  check_params(params, net.layout());
  ForwardCache cache;
  net.forward(params.values, batch, cache);

  const double inv_n = 1.0 / batch.size;
  const Matrix v_err = cache.velocity - batch.target_velocity;
  LossTerms terms;
  terms.weight = batch.weight.mean();
  Eigen::VectorXd depth_se = Eigen::VectorXd::Zero(batch.size);
  Matrix d_err;
  if (config.aux_enabled) {
    d_err = cache.depth - batch.target_depth;
    depth_se = d_err.colwise().squaredNorm().transpose() / double(batch.pixels);
  }
  for (int i = 0; i < batch.size; ++i) {
    const double lv = batch.weight[i] * v_err.col(i).squaredNorm();
    const double ld = batch.weight[i] * depth_se[i];
    terms.velocity += lv;
    terms.depth += ld;
    terms.total += lv + config.aux_weight * ld;
  }
  terms.velocity *= inv_n;
  terms.depth *= inv_n;
  terms.total *= inv_n;

  if (gradient) {
    gradient->setZero(Eigen::Index(net.layout().total()));
    const Eigen::RowVectorXd scale = batch.weight.transpose() * (2.0 * inv_n);
    const Matrix d_velocity = v_err.array().rowwise() * scale.array();
    Matrix d_depth_pre;
    if (config.aux_enabled) {
      const Eigen::RowVectorXd ds = scale * (config.aux_weight / batch.pixels);
      d_depth_pre = (d_err.array().rowwise() * ds.array()) * cache.depth.array() *
                    (1.0 - cache.depth.array());
    }
    net.backward(params.values, batch, cache, d_velocity,
                 config.aux_enabled ? &d_depth_pre : nullptr, *gradient);
  }
  return terms;
}

}  // namespace socnav
