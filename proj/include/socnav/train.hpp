#pragma once

// Supervised training over rendered sample shards: sliding history windows,
// Adam, per-epoch loss logs, ablation variants, checkpoints, and the policy
// adapter that runs a trained network in closed loop.

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "socnav/baselines.hpp"
#include "socnav/dataset_io.hpp"
#include "socnav/model.hpp"

namespace socnav {

class KvDocument;

enum class Schedule { kPretrain, kFinetune };
std::string to_string(Schedule s);
// Throws ConfigError for anything but "pretrain" / "finetune".
Schedule parse_schedule(const std::string& name);

struct TrainConfig {
  int batch_size = 32;
  int pretrain_epochs = 15;
  double pretrain_lr = 1e-3;
  int finetune_epochs = 10;
  double finetune_lr = 1e-4;
  std::uint64_t seed = 0;
  // Keep every n-th window of each sequence.
  int window_stride = 1;

  int epochs(Schedule s) const { return s == Schedule::kPretrain ? pretrain_epochs : finetune_epochs; }
  double learning_rate(Schedule s) const { return s == Schedule::kPretrain ? pretrain_lr : finetune_lr; }

  void validate() const;
  static TrainConfig from_kv(const KvDocument& doc);
  void append_to(KvDocument& doc) const;
};

// Windows over per-agent, time-ordered sample sequences. Window j of a
// sequence uses records j-T+1..j as history (the first record repeats when
// j < T-1) and record j+1 as the velocity and depth target.
class WindowDataset {
 public:
  WindowDataset() = default;
  WindowDataset(std::span<const SampleRecord> records, int history, int stride = 1);

  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }
  std::vector<std::uint32_t> agent_ids() const;
  // Keeps only sequences whose agent id is listed.
  WindowDataset subset(std::span<const std::uint32_t> ids) const;

  void fill(Batch& batch, int slot, std::size_t window, const ModelConfig& config) const;
  Batch make_batch(std::span<const std::size_t> windows, const ModelConfig& config) const;

 private:
  struct Window {
    std::size_t sequence = 0;
    int index = 0;
  };
  int history_ = 1;
  int stride_ = 1;
  std::vector<std::vector<SampleRecord>> sequences_;
  std::vector<Window> windows_;
  void build_windows();
};

class Adam {
 public:
  Adam(std::size_t n, double lr);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

 private:
  double lr_;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

struct EpochLog {
  int epoch = 0;
  Schedule schedule = Schedule::kPretrain;
  double train_loss = 0.0;
  double eval_loss = 0.0;  // NaN when there is no eval set
  double velocity_loss = 0.0;
  double depth_loss = 0.0;
};

// Runs config.epochs(schedule) epochs of Adam at config.learning_rate(schedule).
// Batch order is a seeded shuffle per epoch. Throws NumericError naming the
// epoch and batch when a loss or gradient is not finite.
std::vector<EpochLog> train(ModelParams& params, const ModelConfig& model,
                            const WindowDataset& train_set, const WindowDataset& eval_set,
                            const TrainConfig& config, Schedule schedule);

// Mean loss over every window (no update).
LossTerms evaluate_loss(const ModelParams& params, const ModelConfig& model,
                        const WindowDataset& set, int batch_size);

// "epoch,schedule,train_loss,eval_loss,L_v,L_D" header plus one row per epoch.
std::string format_loss_log(std::span<const EpochLog> log);

enum class Ablation { kFull, kNoAux, kT1, kHalfPretrain, kNoPretrain };
std::string to_string(Ablation a);
// Accepts full, noaux, t1, halfpretrain, nopretrain; throws ConfigError.
Ablation parse_ablation(const std::string& name);

struct TrainingPlan {
  Ablation ablation = Ablation::kFull;
  ModelConfig model;
  TrainConfig train;
  bool half_pretrain_data = false;
};

TrainingPlan apply_ablation(Ablation a, const ModelConfig& model, const TrainConfig& train);
// noAux, T1, halfPreTrain, noPreTrain in that order.
std::vector<TrainingPlan> ablation_variants(const ModelConfig& model, const TrainConfig& train);
// The first floor(n/2) of the sorted distinct ids.
std::vector<std::uint32_t> first_half(std::span<const std::uint32_t> ids);

struct Checkpoint {
  ModelConfig model;
  NormalizationSpec normalization;
  CameraConfig camera;
  Schedule schedule = Schedule::kPretrain;
  std::uint64_t parent_digest = 0;  // 0 for a checkpoint trained from scratch
  ModelParams params;
};

// Little-endian: "SOCP", u32 version, u64 config digest, u64 parent digest,
// u32 n + n bytes of key=value metadata, u64 count, f64 x count parameters.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Runs the network in closed loop, keeping the last T observations.
class ModelPolicy : public Policy {
 public:
  ModelPolicy(ModelConfig config, ModelParams params, NormalizationSpec normalization);
  std::unique_ptr<Policy> clone() const override { return std::make_unique<ModelPolicy>(*this); }
  void reset() override { history_.clear(); }
  bool needs_depth() const override { return true; }
  Vec2 act(const PolicyInput& input, std::uint64_t step_index) override;

 private:
  struct Observation {
    Vec2 position;
    Vec2 goal;
    DepthFrame depth;
  };
  ModelConfig config_;
  ModelParams params_;
  NormalizationSpec normalization_;
  std::deque<Observation> history_;
};

}  // namespace socnav
