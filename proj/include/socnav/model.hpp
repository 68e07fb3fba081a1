#pragma once

// Recurrent depth-and-pose policy network: a shared convolutional frame
// encoder and a pose/goal embedding feed a two-layer LSTM whose last hidden
// state drives a velocity head and an auxiliary next-frame depth head.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "socnav/depth_render.hpp"
#include "socnav/world.hpp"

namespace socnav {

class KvDocument;

struct ConvSpec {
  int channels = 8;
  int kernel = 3;
  int stride = 2;
  bool operator==(const ConvSpec&) const = default;
};

struct ModelConfig {
  int history = 10;  // T
  int depth_width = 32;
  int depth_height = 24;
  std::vector<ConvSpec> conv{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
  int frame_embed = 128;
  int pose_embed = 32;
  int lstm_hidden = 128;
  static constexpr int kLstmLayers = 2;
  std::vector<int> velocity_hidden{64};
  double aux_weight = 0.1;            // k
  double proximity_weight = 2.0;      // c
  double proximity_threshold = 0.1;   // beta, normalized depth
  bool aux_enabled = true;

  void validate() const;
  int pixels() const { return depth_width * depth_height; }

  static ModelConfig from_kv(const KvDocument& doc);
  void append_to(KvDocument& doc) const;
  // Digest of the canonical key=value form.
  std::uint64_t digest() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 1;
  std::size_t offset = 0;
  std::size_t size() const { return std::size_t(rows) * cols; }
};

class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t total() const { return total_; }
  // Throws ConfigError for an unknown name.
  const ParamBlock& block(const std::string& name) const;

 private:
  void add(std::string name, int rows, int cols);
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

struct ModelParams {
  Eigen::VectorXd values;

  static ModelParams zeros(const ModelConfig& config);
  // Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases 0 except LSTM forget
  // gates, which start at 1.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
  bool all_finite() const;
  std::size_t size() const { return std::size_t(values.size()); }
};

// One history entry; position and goal are normalized coordinates.
struct HistoryStep {
  Vec2 position;
  Vec2 goal;
  const DepthFrame* depth = nullptr;
};

struct ModelOutput {
  Vec2 velocity;
  // Present iff aux is enabled; row-major like DepthFrame, values in (0, 1).
  std::optional<std::vector<double>> depth;
};

// Column-packed training batch. Sample b at step t is image/column t * size + b.
struct Batch {
  int size = 0;
  int steps = 0;
  int pixels = 0;
  Eigen::MatrixXd frames;           // (steps * size * pixels) x 1
  Eigen::MatrixXd poses;            // 4 x (steps * size)
  Eigen::MatrixXd target_velocity;  // 2 x size
  Eigen::MatrixXd target_depth;     // pixels x size
  Eigen::VectorXd weight;           // w per sample

  Batch() = default;
  Batch(const ModelConfig& config, int size);
  // history.size() == steps; weight comes from history.back().depth.
  void set(int index, std::span<const HistoryStep> history, Vec2 target_velocity,
           const DepthFrame& target_depth, const ModelConfig& config);
};

struct LossTerms {
  double total = 0.0;
  double velocity = 0.0;  // L_v (weighted)
  double depth = 0.0;     // L_D (weighted, before k)
  double weight = 1.0;
};

// c when the current frame's minimum pixel is below beta, else 1.
double proximity_weight(const DepthFrame& current, const ModelConfig& config);

ModelOutput forward(const ModelParams& params, const ModelConfig& config,
                    std::span<const HistoryStep> history);

LossTerms loss(const ModelOutput& output, Vec2 target_velocity, const DepthFrame& target_depth,
               const DepthFrame& current, const ModelConfig& config);

// Mean loss over the batch; fills `gradient` (same size as params) when given.
LossTerms batch_loss(const ModelParams& params, const ModelConfig& config, const Batch& batch,
                     Eigen::VectorXd* gradient);

}  // namespace socnav
