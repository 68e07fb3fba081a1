#include "socnav_cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>

#include "socnav/augment.hpp"
#include "socnav/baselines.hpp"
#include "socnav/dataset_io.hpp"
#include "socnav/error.hpp"
#include "socnav/eval_harness.hpp"
#include "socnav/kv_file.hpp"
#include "socnav/train.hpp"

namespace socnav::cli {

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Manifest {
 public:
  explicit Manifest(const std::string& subcommand) {
    doc_.add("tool", "socnav");
    doc_.add("tool_version", kToolVersion);
    doc_.add("subcommand", subcommand);
  }
  void file(const std::string& role, const std::string& path) {
    doc_.add(role, path);
    doc_.add(role + "_digest", hex_digest(file_digest(path)));
  }
  void value(const std::string& key, const std::string& v) { doc_.add(key, v); }
  void append(const KvDocument& other, const std::string& prefix = "") {
    for (const auto& e : other.entries()) doc_.add(prefix + e.key, e.value);
  }
  // Records the artifact's own digest and writes `<artifact>.manifest`.
  void write(const std::string& artifact) {
    doc_.add("output", artifact);
    doc_.add("output_digest", hex_digest(file_digest(artifact)));
    doc_.save(manifest_path(artifact));
  }

 private:
  KvDocument doc_;
};

KvDocument load_optional(const std::string& path) {
  return path.empty() ? KvDocument("<defaults>") : KvDocument::load(path);
}

KvDocument prefixed(const KvDocument& doc, const std::string& prefix) {
  KvDocument out(doc.source());
  for (const auto& e : doc.entries()) {
    if (e.key.starts_with(prefix)) out.add(e.key.substr(prefix.size()), e.value);
  }
  return out;
}

double control_dt(const KvDocument& doc) {
  const double dt = doc.get_double("dt", 0.1);
  if (!(dt > 0.0)) throw ConfigError(doc.source() + ": dt must be > 0");
  return dt;
}

// ---- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string traj, map, out, config;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const KvDocument cfg = load_optional(a.config);
  const double dt = control_dt(cfg);
  const StaticMap map = load_map(a.map);
  const auto raw = parse_trajectory_file(a.traj);
  std::vector<Trajectory> trajs;
  for (const auto& t : raw) {
    Trajectory r = resample(t, dt);
    if (r.samples.size() >= 2) trajs.push_back(std::move(r));
  }
  write_trajectory_shard(trajs, a.out);

  Manifest m("ingest");
  m.file("traj", a.traj);
  m.file("map", a.map);
  if (!a.config.empty()) m.file("config", a.config);
  m.value("dt", format_double(dt));
  KvDocument norm;
  NormalizationSpec::from_maps(std::span(&map, 1)).append_to(norm);
  m.append(norm);
  m.value("trajectories", std::to_string(trajs.size()));
  m.write(a.out);
  out << "ingested " << trajs.size() << " trajectories into " << a.out << "\n";
  return kOk;
}

// ---- render ----------------------------------------------------------------

struct RenderArgs {
  std::string traj, camera, out, config;
  std::vector<std::string> maps;
};

int cmd_render(const RenderArgs& a, std::ostream& out, std::ostream& err) {
  const KvDocument cam_doc = KvDocument::load(a.camera);
  const CameraConfig camera = CameraConfig::from_kv(cam_doc);
  const KvDocument cfg = load_optional(a.config);
  std::vector<StaticMap> maps;
  for (const auto& p : a.maps) maps.push_back(load_map(p));
  const NormalizationSpec norm = NormalizationSpec::from_maps(maps);

  Scene scene;
  scene.map = maps.front();
  scene.trajectories = read_trajectory_shard(a.traj);
  scene.dt = control_dt(cfg);
  const auto records = render_samples(scene, camera, norm, [&err](std::size_t n) {
    err << "rendered " << n << " frames\n";
  });
  write_sample_shard(records, a.out);

  Manifest m("render");
  m.file("traj", a.traj);
  for (const auto& p : a.maps) m.file("map", p);
  m.file("camera", a.camera);
  if (!a.config.empty()) m.file("config", a.config);
  m.value("dt", format_double(scene.dt));
  KvDocument extra;
  norm.append_to(extra);
  m.append(extra);
  KvDocument cam;
  camera.append_to(cam);
  m.append(cam, "camera_");
  m.value("records", std::to_string(records.size()));
  m.write(a.out);
  out << "rendered " << records.size() << " samples into " << a.out << "\n";
  return kOk;
}

// ---- augment ---------------------------------------------------------------

struct AugmentArgs {
  std::string map, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> count;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out) {
  const StaticMap map = load_map(a.map);
  AugmentConfig config = AugmentConfig::from_kv(load_optional(a.config));
  if (a.seed) config.seed = *a.seed;
  if (a.count) config.count = *a.count;
  config.validate();
  const auto trajs = generate_trajectories(map, config);
  write_trajectory_shard(trajs, a.out);

  Manifest m("augment");
  m.file("map", a.map);
  if (!a.config.empty()) m.file("config", a.config);
  m.value("seed", std::to_string(config.seed));
  m.value("count", std::to_string(config.count));
  m.write(a.out);
  out << "generated " << trajs.size() << " trajectories into " << a.out << "\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> shards;
  std::string config, schedule = "pretrain", init, ablation = "full", out;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const KvDocument cfg = load_optional(a.config);
  TrainConfig train_cfg = TrainConfig::from_kv(cfg);
  if (a.seed) train_cfg.seed = *a.seed;
  const Schedule schedule = parse_schedule(a.schedule);
  const Ablation ablation = parse_ablation(a.ablation);

  // Shards carry their normalization and camera in their manifests; agent
  // ids are offset per shard so sequences never merge across shards.
  std::vector<SampleRecord> records;
  std::optional<NormalizationSpec> norm;
  std::optional<CameraConfig> camera;
  std::uint32_t offset = 0;
  for (const auto& path : a.shards) {
    const KvDocument man = KvDocument::load(manifest_path(path));
    const NormalizationSpec n = NormalizationSpec::from_kv(man);
    const CameraConfig c = CameraConfig::from_kv(prefixed(man, "camera_"));
    if (norm && (n.min != norm->min || n.max != norm->max)) {
      throw ConfigError(path + ": normalization differs from the first shard");
    }
    if (camera && (c.width != camera->width || c.height != camera->height ||
                   c.fov_horizontal_deg != camera->fov_horizontal_deg || c.d_max != camera->d_max ||
                   c.eye_height != camera->eye_height)) {
      throw ConfigError(path + ": camera differs from the first shard");
    }
    norm = n;
    camera = c;
    auto shard = read_sample_shard(path);
    std::uint32_t max_id = 0;
    for (auto& r : shard) {
      max_id = std::max(max_id, r.agent_id);
      r.agent_id += offset;
    }
    if (!shard.empty()) offset += max_id + 1;
    records.insert(records.end(), std::make_move_iterator(shard.begin()),
                   std::make_move_iterator(shard.end()));
  }

  std::optional<Checkpoint> parent;
  ModelConfig model;
  if (!a.init.empty()) {
    parent = load_checkpoint(a.init);
    model = parent->model;
    if (parent->normalization.min != norm->min || parent->normalization.max != norm->max) {
      throw ConfigError(a.init + ": normalization differs from the training shards");
    }
  } else {
    model = apply_ablation(ablation, ModelConfig::from_kv(cfg), train_cfg).model;
  }
  const TrainingPlan plan = apply_ablation(ablation, model, train_cfg);
  if (parent && !(plan.model == parent->model)) {
    throw ConfigError("ablation '" + a.ablation + "' does not match the initial checkpoint's model");
  }
  if (camera->width != model.depth_width || camera->height != model.depth_height) {
    throw ConfigError("shard frames are " + std::to_string(camera->width) + "x" +
                      std::to_string(camera->height) + " but the model expects " +
                      std::to_string(model.depth_width) + "x" + std::to_string(model.depth_height));
  }

  const WindowDataset all(records, model.history, plan.train.window_stride);
  const auto ids = all.agent_ids();
  const std::vector<int> int_ids(ids.begin(), ids.end());
  const DatasetSplit split = split_dataset(int_ids, plan.train.seed);
  std::vector<std::uint32_t> train_ids(split.train.begin(), split.train.end());
  const std::vector<std::uint32_t> eval_ids(split.eval.begin(), split.eval.end());
  if (schedule == Schedule::kPretrain && plan.half_pretrain_data) train_ids = first_half(train_ids);
  const WindowDataset train_set = all.subset(train_ids);
  const WindowDataset eval_set = all.subset(eval_ids);

  ModelParams params = parent ? parent->params : ModelParams::initialize(model, plan.train.seed);
  const auto log = train(params, model, train_set, eval_set, plan.train, schedule);

  Checkpoint ckpt{model, *norm, *camera, schedule, parent ? file_digest(a.init) : 0, params};
  save_checkpoint(ckpt, a.out);
  const std::string log_path = a.out + ".loss.csv";
  write_text_file(log_path, format_loss_log(log));

  Manifest m("train");
  for (const auto& s : a.shards) m.file("shard", s);
  if (!a.config.empty()) m.file("config", a.config);
  if (parent) m.file("parent", a.init);
  m.value("schedule", to_string(schedule));
  m.value("ablation", to_string(ablation));
  m.value("seed", std::to_string(plan.train.seed));
  m.value("train_trajectories", std::to_string(train_ids.size()));
  m.value("eval_trajectories", std::to_string(eval_ids.size()));
  m.value("train_windows", std::to_string(train_set.size()));
  m.value("loss_log", log_path);
  m.value("model_digest", hex_digest(model.digest()));
  m.write(a.out);
  for (const auto& row : log) {
    out << to_string(row.schedule) << " epoch " << row.epoch << ": train " << row.train_loss
        << ", eval " << row.eval_loss << "\n";
  }
  out << "wrote " << a.out << "\n";
  return kOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> scenes;
  std::string map, policy, config, camera, out;
  std::optional<std::size_t> count;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const KvDocument cfg = load_optional(a.config);
  const EvalConfig config = EvalConfig::from_kv(cfg);
  const SocialZones zones;
  CameraConfig camera = a.camera.empty() ? CameraConfig{} : CameraConfig::from_kv(KvDocument::load(a.camera));

  std::vector<Scene> scenes;
  const StaticMap map = load_map(a.map);
  for (const auto& path : a.scenes) {
    Scene s;
    s.map = map;
    s.map.name = std::filesystem::path(path).stem().string();
    s.trajectories = read_trajectory_shard(path);
    s.dt = config.dt();
    scenes.push_back(std::move(s));
  }
  const auto episodes = select_episodes(scenes, a.count.value_or(SIZE_MAX), config.goal_radius);

  EvalReport report;
  std::string name = a.policy;
  if (a.policy == "sfm") {
    const SfmPolicy policy(SfmParams::from_kv(cfg), config.dt());
    report = run_evaluation(scenes, episodes, policy, name, config, zones, camera);
  } else if (a.policy == "rvo") {
    const RvoPolicy policy(RvoParams::from_kv(cfg), config.dt());
    report = run_evaluation(scenes, episodes, policy, name, config, zones, camera);
  } else if (a.policy == "gt") {
    report = run_evaluation(scenes, episodes, gt_replay_factory(), name, config, zones, camera);
  } else if (a.policy.starts_with("checkpoint:")) {
    const std::string path = a.policy.substr(11);
    const Checkpoint ckpt = load_checkpoint(path);
    camera = ckpt.camera;
    name = "model";
    const ModelPolicy policy(ckpt.model, ckpt.params, ckpt.normalization);
    report = run_evaluation(scenes, episodes, policy, name, config, zones, camera);
  } else {
    throw UsageError("unknown policy '" + a.policy + "' (expected sfm, rvo, gt or checkpoint:<path>)");
  }
  write_text_file(a.out, format_report(report));

  Manifest m("eval");
  for (const auto& s : a.scenes) m.file("scene", s);
  m.file("map", a.map);
  if (!a.config.empty()) m.file("config", a.config);
  if (a.policy.starts_with("checkpoint:")) m.file("checkpoint", a.policy.substr(11));
  m.value("policy", a.policy);
  m.value("episodes", std::to_string(episodes.size()));
  m.write(a.out);
  const auto& agg = report.over_episodes;
  out << name << ": episodes " << episodes.size() << ", social " << agg.social_score << ", collisions "
      << agg.collisions << ", success " << agg.success << ", ade " << agg.ade << ", fde "
      << agg.fde_goal << "\n";
  return kOk;
}

// ---- pgm -------------------------------------------------------------------

struct PgmArgs {
  std::string samples, out;
  std::size_t index = 0;
};

int cmd_pgm(const PgmArgs& a, std::ostream& out) {
  const auto records = read_sample_shard(a.samples);
  if (a.index >= records.size()) {
    throw ConfigError("record " + std::to_string(a.index) + " out of range (shard has " +
                      std::to_string(records.size()) + ")");
  }
  write_pgm(records[a.index].depth, a.out);
  out << "wrote " << a.out << "\n";
  return kOk;
}

void apply_thread_cap(std::ostream& err) {
  const char* env = std::getenv("SOCNAV_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    err << "warning: ignoring SOCNAV_THREADS='" << env << "'\n";
    return;
  }
  omp_set_num_threads(int(n));
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Social navigation dataset, training and evaluation pipeline", "socnav"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Parse an annotation file and resample it to the control rate");
  c_ingest->add_option("--traj", ingest.traj, "Trajectory text file")->required();
  c_ingest->add_option("--map", ingest.map, "Map file")->required();
  c_ingest->add_option("--out", ingest.out, "Output trajectory shard")->required();
  c_ingest->add_option("--config", ingest.config, "Optional config (dt)");

  RenderArgs render;
  auto* c_render = app.add_subcommand("render", "Render first-person depth samples for every agent");
  c_render->add_option("--traj", render.traj, "Trajectory shard")->required();
  c_render->add_option("--map", render.maps, "Map file; the first is the scene, all set the normalization")
      ->required();
  c_render->add_option("--camera", render.camera, "Camera config")->required();
  c_render->add_option("--out", render.out, "Output sample shard")->required();
  c_render->add_option("--config", render.config, "Optional config (dt)");

  AugmentArgs augment;
  auto* c_augment = app.add_subcommand("augment", "Generate synthetic trajectories");
  c_augment->add_option("--map", augment.map, "Map file")->required();
  c_augment->add_option("--config", augment.config, "Augmentation config");
  c_augment->add_option("--out", augment.out, "Output trajectory shard")->required();
  c_augment->add_option("--seed", augment.seed, "Override the config seed");
  c_augment->add_option("--count", augment.count, "Override the trajectory count");

  TrainArgs trainer;
  auto* c_train = app.add_subcommand("train", "Pretrain or finetune the policy network");
  c_train->add_option("shards", trainer.shards, "Sample shards")->required();
  c_train->add_option("--config", trainer.config, "Model and training config");
  c_train->add_option("--schedule", trainer.schedule, "pretrain or finetune")
      ->check(CLI::IsMember({"pretrain", "finetune"}));
  c_train->add_option("--init", trainer.init, "Checkpoint to continue from");
  c_train->add_option("--ablation", trainer.ablation, "noaux, t1, halfpretrain or nopretrain")
      ->check(CLI::IsMember({"full", "noaux", "t1", "halfpretrain", "nopretrain"}));
  c_train->add_option("--seed", trainer.seed, "Override the config seed");
  c_train->add_option("--out", trainer.out, "Output checkpoint")->required();

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Closed-loop evaluation against replayed scenes");
  c_eval->add_option("scenes", eval.scenes, "Trajectory shards, one scene each")->required();
  c_eval->add_option("--map", eval.map, "Map file")->required();
  c_eval->add_option("--policy", eval.policy, "sfm, rvo, gt or checkpoint:<path>")->required();
  c_eval->add_option("--config", eval.config, "Eval config (plus sfm_*/rvo_* parameters)");
  c_eval->add_option("--camera", eval.camera, "Camera config for depth-based policies");
  c_eval->add_option("--out", eval.out, "Output report")->required();
  c_eval->add_option("--count", eval.count, "Maximum number of episodes");

  PgmArgs pgm;
  auto* c_pgm = app.add_subcommand("pgm", "Export one depth frame as a PGM image");
  c_pgm->add_option("samples", pgm.samples, "Sample shard")->required();
  c_pgm->add_option("--index", pgm.index, "Record index");
  c_pgm->add_option("--out", pgm.out, "Output image")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  apply_thread_cap(err);
  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest, out);
    if (c_render->parsed()) return cmd_render(render, out, err);
    if (c_augment->parsed()) return cmd_augment(augment, out);
    if (c_train->parsed()) return cmd_train(trainer, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_pgm->parsed()) return cmd_pgm(pgm, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ShardError& e) {
    err << "format error: " << e.what() << "\n";
    return kParse;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  }
  return kUsage;
}

}  // namespace socnav::cli
