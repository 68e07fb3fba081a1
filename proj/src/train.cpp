#include "socnav/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "binary_io.hpp"
#include "socnav/error.hpp"
#include "socnav/kv_file.hpp"

namespace socnav {

std::string to_string(Schedule s) { return s == Schedule::kPretrain ? "pretrain" : "finetune"; }

Schedule parse_schedule(const std::string& name) {
  if (name == "pretrain") return Schedule::kPretrain;
  if (name == "finetune") return Schedule::kFinetune;
  throw ConfigError("unknown schedule '" + name + "' (expected pretrain or finetune)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (pretrain_epochs < 0 || finetune_epochs < 0) throw ConfigError("epochs must be >= 0");
  // lr = 0 is accepted as a frozen-parameter run.
  if (!(pretrain_lr >= 0.0) || !(finetune_lr >= 0.0) || !std::isfinite(pretrain_lr) ||
      !std::isfinite(finetune_lr)) {
    throw ConfigError("learning rates must be finite and >= 0");
  }
  if (window_stride < 1) throw ConfigError("window_stride must be >= 1");
}

TrainConfig TrainConfig::from_kv(const KvDocument& doc) {
  TrainConfig c;
  c.batch_size = static_cast<int>(doc.get_int("batch_size", c.batch_size));
  c.pretrain_epochs = static_cast<int>(doc.get_int("pretrain_epochs", c.pretrain_epochs));
  c.pretrain_lr = doc.get_double("pretrain_lr", c.pretrain_lr);
  c.finetune_epochs = static_cast<int>(doc.get_int("finetune_epochs", c.finetune_epochs));
  c.finetune_lr = doc.get_double("finetune_lr", c.finetune_lr);
  c.seed = static_cast<std::uint64_t>(doc.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.window_stride = static_cast<int>(doc.get_int("window_stride", c.window_stride));
  c.validate();
  return c;
}

void TrainConfig::append_to(KvDocument& doc) const {
  doc.add("batch_size", std::to_string(batch_size));
  doc.add("pretrain_epochs", std::to_string(pretrain_epochs));
  doc.add("pretrain_lr", pretrain_lr);
  doc.add("finetune_epochs", std::to_string(finetune_epochs));
  doc.add("finetune_lr", finetune_lr);
  doc.add("seed", std::to_string(seed));
  doc.add("window_stride", std::to_string(window_stride));
}

WindowDataset::WindowDataset(std::span<const SampleRecord> records, int history, int stride)
    : history_(history), stride_(stride) {
  if (history < 1 || stride < 1) throw ConfigError("window history and stride must be >= 1");
  std::map<std::uint32_t, std::vector<SampleRecord>> by_agent;
  for (const auto& r : records) by_agent[r.agent_id].push_back(r);
  for (auto& [id, seq] : by_agent) {
    std::stable_sort(seq.begin(), seq.end(),
                     [](const SampleRecord& a, const SampleRecord& b) { return a.t < b.t; });
    sequences_.push_back(std::move(seq));
  }
  build_windows();
}

void WindowDataset::build_windows() {
  windows_.clear();
  for (std::size_t s = 0; s < sequences_.size(); ++s) {
    const int n = int(sequences_[s].size());
    for (int j = 0; j + 1 < n; j += stride_) windows_.push_back({s, j});
  }
}

std::vector<std::uint32_t> WindowDataset::agent_ids() const {
  std::vector<std::uint32_t> ids;
  for (const auto& seq : sequences_) ids.push_back(seq.front().agent_id);
  return ids;
}

WindowDataset WindowDataset::subset(std::span<const std::uint32_t> ids) const {
  WindowDataset out;
  out.history_ = history_;
  out.stride_ = stride_;
  for (const auto& seq : sequences_) {
    if (std::find(ids.begin(), ids.end(), seq.front().agent_id) != ids.end()) {
      out.sequences_.push_back(seq);
    }
  }
  out.build_windows();
  return out;
}

void WindowDataset::fill(Batch& batch, int slot, std::size_t window, const ModelConfig& config) const {
  if (config.history != history_) throw ConfigError("window history differs from model history");
  const auto& w = windows_[window];
  const auto& seq = sequences_[w.sequence];
  std::vector<HistoryStep> steps(static_cast<std::size_t>(history_));
  for (int s = 0; s < history_; ++s) {
    const int idx = std::max(0, w.index - history_ + 1 + s);
    const auto& r = seq[std::size_t(idx)];
    steps[std::size_t(s)] = {r.position, r.goal, &r.depth};
  }
  const auto& next = seq[std::size_t(w.index) + 1];
  batch.set(slot, steps, next.velocity, next.depth, config);
}

Batch WindowDataset::make_batch(std::span<const std::size_t> windows, const ModelConfig& config) const {
  Batch batch(config, int(windows.size()));
  for (std::size_t i = 0; i < windows.size(); ++i) fill(batch, int(i), windows[i], config);
  return batch;
}

Adam::Adam(std::size_t n, double lr)
    : lr_(lr), m_(Eigen::VectorXd::Zero(Eigen::Index(n))), v_(Eigen::VectorXd::Zero(Eigen::Index(n))) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(kBeta1, double(t_));
  const double c2 = 1.0 - std::pow(kBeta2, double(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEpsilon);
}

namespace {

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = std::size_t(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

LossTerms evaluate_loss(const ModelParams& params, const ModelConfig& model,
                        const WindowDataset& set, int batch_size) {
  LossTerms sum;
  sum.weight = 0.0;
  if (set.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {nan, nan, nan, nan};
  }
  std::vector<std::size_t> ids(set.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  for (std::size_t start = 0; start < ids.size(); start += std::size_t(batch_size)) {
    const std::size_t n = std::min(std::size_t(batch_size), ids.size() - start);
    const Batch batch = set.make_batch(std::span(ids).subspan(start, n), model);
    const LossTerms t = batch_loss(params, model, batch, nullptr);
    sum.total += t.total * double(n);
    sum.velocity += t.velocity * double(n);
    sum.depth += t.depth * double(n);
    sum.weight += t.weight * double(n);
  }
  const double inv = 1.0 / double(ids.size());
  return {sum.total * inv, sum.velocity * inv, sum.depth * inv, sum.weight * inv};
}

std::vector<EpochLog> train(ModelParams& params, const ModelConfig& model,
                            const WindowDataset& train_set, const WindowDataset& eval_set,
                            const TrainConfig& config, Schedule schedule) {
  config.validate();
  std::vector<EpochLog> log;
  const int epochs = config.epochs(schedule);
  if (epochs == 0) return log;
  if (train_set.empty()) throw ConfigError("training set has no windows");

  std::mt19937_64 rng(config.seed * 2 + (schedule == Schedule::kPretrain ? 0 : 1));
  Adam adam(params.size(), config.learning_rate(schedule));
  std::vector<std::size_t> order(train_set.size());
  Eigen::VectorXd grad;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    EpochLog row;
    row.epoch = epoch;
    row.schedule = schedule;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size), ++batch_index) {
      const std::size_t n = std::min(std::size_t(config.batch_size), order.size() - start);
      const Batch batch = train_set.make_batch(std::span(order).subspan(start, n), model);
      const LossTerms t = batch_loss(params, model, batch, &grad);
      if (!std::isfinite(t.total) || !grad.allFinite()) {
        throw NumericError("non-finite loss or gradient in " + to_string(schedule) + " epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch_index));
      }
      row.train_loss += t.total * double(n);
      row.velocity_loss += t.velocity * double(n);
      row.depth_loss += t.depth * double(n);
      adam.step(params.values, grad);
    }
    const double inv = 1.0 / double(order.size());
    row.train_loss *= inv;
    row.velocity_loss *= inv;
    row.depth_loss *= inv;
    row.eval_loss = evaluate_loss(params, model, eval_set, config.batch_size).total;
    log.push_back(row);
  }
  return log;
}

std::string format_loss_log(std::span<const EpochLog> log) {
  std::string out = "epoch,schedule,train_loss,eval_loss,L_v,L_D\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch) + "," + to_string(r.schedule) + "," + format_double(r.train_loss) +
           "," + format_double(r.eval_loss) + "," + format_double(r.velocity_loss) + "," +
           format_double(r.depth_loss) + "\n";
  }
  return out;
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoAux: return "noaux";
    case Ablation::kT1: return "t1";
    case Ablation::kHalfPretrain: return "halfpretrain";
    case Ablation::kNoPretrain: return "nopretrain";
  }
  return "full";
}

Ablation parse_ablation(const std::string& name) {
  for (auto a : {Ablation::kFull, Ablation::kNoAux, Ablation::kT1, Ablation::kHalfPretrain,
                 Ablation::kNoPretrain}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation '" + name + "' (expected noaux, t1, halfpretrain or nopretrain)");
}

TrainingPlan apply_ablation(Ablation a, const ModelConfig& model, const TrainConfig& train) {
  TrainingPlan plan{a, model, train, false};
  switch (a) {
    case Ablation::kFull: break;
    case Ablation::kNoAux: plan.model.aux_enabled = false; break;
    case Ablation::kT1: plan.model.history = 1; break;
    case Ablation::kHalfPretrain: plan.half_pretrain_data = true; break;
    case Ablation::kNoPretrain: plan.train.pretrain_epochs = 0; break;
  }
  plan.model.validate();
  return plan;
}

std::vector<TrainingPlan> ablation_variants(const ModelConfig& model, const TrainConfig& train) {
  std::vector<TrainingPlan> out;
  for (auto a : {Ablation::kNoAux, Ablation::kT1, Ablation::kHalfPretrain, Ablation::kNoPretrain}) {
    out.push_back(apply_ablation(a, model, train));
  }
  return out;
}

std::vector<std::uint32_t> first_half(std::span<const std::uint32_t> ids) {
  std::vector<std::uint32_t> sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  sorted.resize(sorted.size() / 2);
  return sorted;
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_metadata(const Checkpoint& ckpt) {
  KvDocument doc;
  doc.add("schedule", to_string(ckpt.schedule));
  ckpt.model.append_to(doc);
  ckpt.normalization.append_to(doc);
  KvDocument cam;
  ckpt.camera.append_to(cam);
  for (const auto& e : cam.entries()) doc.add("camera_" + e.key, e.value);
  return doc.to_string();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const ParamLayout layout(ckpt.model);
  if (ckpt.params.size() != layout.total()) {
    throw ConfigError("checkpoint parameters do not match the model layout");
  }
  const std::string meta = checkpoint_metadata(ckpt);
  detail::ByteWriter out;
  out.bytes("SOCP");
  out.u32(kCheckpointVersion);
  out.u64(ckpt.model.digest());
  out.u64(ckpt.parent_digest);
  out.u32(static_cast<std::uint32_t>(meta.size()));
  out.bytes(meta);
  out.u64(ckpt.params.size());
  for (Eigen::Index i = 0; i < ckpt.params.values.size(); ++i) out.f64(ckpt.params.values[i]);
  return out.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& source) {
  using Code = ShardError::Code;
  detail::ByteReader in(bytes);
  std::string magic;
  if (!in.bytes(4, magic)) throw ShardError(Code::kTruncated, source + ": truncated header");
  if (magic != "SOCP") throw ShardError(Code::kBadMagic, source + ": not a checkpoint");
  std::uint32_t version = 0, meta_len = 0;
  std::uint64_t config_digest = 0, count = 0;
  Checkpoint ckpt;
  if (!in.u32(version)) throw ShardError(Code::kTruncated, source + ": truncated header");
  if (version != kCheckpointVersion) throw ShardError(Code::kBadVersion, source + ": unsupported version");
  std::string meta;
  if (!in.u64(config_digest) || !in.u64(ckpt.parent_digest) || !in.u32(meta_len) ||
      !in.bytes(meta_len, meta) || !in.u64(count)) {
    throw ShardError(Code::kTruncated, source + ": truncated header");
  }
  const KvDocument doc = KvDocument::parse(meta, source);
  ckpt.schedule = parse_schedule(doc.require_string("schedule"));
  ckpt.model = ModelConfig::from_kv(doc);
  ckpt.normalization = NormalizationSpec::from_kv(doc);
  KvDocument cam(source);
  for (const auto& e : doc.entries()) {
    if (e.key.starts_with("camera_")) cam.add(e.key.substr(7), e.value);
  }
  ckpt.camera = CameraConfig::from_kv(cam);
  if (ckpt.model.digest() != config_digest) {
    throw ShardError(Code::kDimensionMismatch, source + ": config digest does not match metadata");
  }
  if (count != ParamLayout(ckpt.model).total()) {
    throw ShardError(Code::kDimensionMismatch, source + ": parameter count does not match the model");
  }
  if (in.remaining() < count * 8) throw ShardError(Code::kTruncated, source + ": truncated parameters");
  ckpt.params.values.resize(Eigen::Index(count));
  for (std::uint64_t i = 0; i < count; ++i) in.f64(ckpt.params.values[Eigen::Index(i)]);
  if (in.remaining() != 0) throw ShardError(Code::kTrailingData, source + ": trailing bytes");
  if (!ckpt.params.all_finite()) throw NumericError(source + ": non-finite parameters");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  detail::write_binary_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(detail::read_binary_file(path), path);
}

ModelPolicy::ModelPolicy(ModelConfig config, ModelParams params, NormalizationSpec normalization)
    : config_(std::move(config)), params_(std::move(params)), normalization_(normalization) {
  if (params_.size() != ParamLayout(config_).total()) {
    throw ConfigError("policy parameters do not match the model layout");
  }
}

Vec2 ModelPolicy::act(const PolicyInput& input, std::uint64_t) {
  if (!input.depth) throw ConfigError("model policy needs a rendered depth frame");
  history_.push_back({normalize(input.position, normalization_), normalize(input.goal, normalization_),
                      *input.depth});
  while (int(history_.size()) > config_.history) history_.pop_front();
  std::vector<HistoryStep> steps(static_cast<std::size_t>(config_.history));
  const int pad = config_.history - int(history_.size());
  for (int s = 0; s < config_.history; ++s) {
    const auto& o = history_[std::size_t(std::max(0, s - pad))];
    steps[std::size_t(s)] = {o.position, o.goal, &o.depth};
  }
  return forward(params_, config_, steps).velocity;
}

}  // namespace socnav
