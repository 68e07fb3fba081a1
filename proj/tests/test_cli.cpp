#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "../tools/socnav_cli.hpp"
#include "socnav/dataset_io.hpp"
#include "socnav/kv_file.hpp"
#include "socnav/train.hpp"
#include "test_support.hpp"

using namespace socnav;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "socnav");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(int(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string bytes_of(const fs::path& p) { return read_text_file(p.string()); }

struct Workspace {
  fs::path dir;
  std::string map, camera, traj_text;

  explicit Workspace(const std::string& name) : dir(testing::scratch_dir(name)) {
    map = (dir / "room.map").string();
    write_text_file(map, format_map(testing::two_obstacle_map()));
    camera = (dir / "camera.cfg").string();
    CameraConfig cam;
    cam.width = 16;
    cam.height = 12;
    KvDocument doc;
    cam.append_to(doc);
    doc.save(camera);
    const std::vector<Trajectory> raw{testing::line_trajectory(1, {2, 2}, {2, 18}, 0.0, 12.0, 0.4),
                                      testing::line_trajectory(2, {18, 2}, {10, 18}, 0.0, 12.0, 0.4)};
    traj_text = (dir / "walk.txt").string();
    write_text_file(traj_text, format_trajectory_text(raw, 2.5));
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("cli usage and exit codes") {
  const Workspace w("cli_codes");
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"--version"}).code == cli::kOk);

  const Run missing = run({"ingest", "--traj", w.path("nope.txt"), "--map", w.map, "--out", w.path("x.soct")});
  CHECK(missing.code == cli::kIo);
  CHECK(missing.err.find("file not found") != std::string::npos);

  std::string text = read_text_file(w.traj_text);
  std::istringstream lines(text);
  std::string l, broken;
  for (int n = 1; std::getline(lines, l); ++n) broken += (n == 4 ? std::string("12 1 oops") : l) + "\n";
  write_text_file(w.path("broken.txt"), broken);
  const Run bad = run({"ingest", "--traj", w.path("broken.txt"), "--map", w.map, "--out", w.path("x.soct")});
  CHECK(bad.code == cli::kParse);
  CHECK(bad.err.find(":4:") != std::string::npos);

  REQUIRE(run({"ingest", "--traj", w.traj_text, "--map", w.map, "--out", w.path("walk.soct")}).code == cli::kOk);
  write_text_file(w.path("bad_camera.cfg"), "width = 16\nheight = 12\nd_max = -1\n");
  CHECK(run({"render", "--traj", w.path("walk.soct"), "--map", w.map, "--camera", w.path("bad_camera.cfg"), "--out",
             w.path("x.socs")})
            .code == cli::kConfig);

  CHECK(run({"eval", w.path("walk.soct"), "--map", w.map, "--policy", "teleport", "--out", w.path("r.csv")}).code ==
        cli::kUsage);
  CHECK(run({"train", w.path("x.socs"), "--ablation", "nolstm", "--out", w.path("m.ckpt")}).code == cli::kUsage);
  CHECK(run({"train", w.path("x.socs"), "--schedule", "forever", "--out", w.path("m.ckpt")}).code == cli::kUsage);

  write_text_file(w.path("junk.socs"), "not a shard");
  CHECK(run({"pgm", w.path("junk.socs"), "--out", w.path("x.pgm")}).code == cli::kParse);
}

TEST_CASE("cli ingest, render and eval") {
  const Workspace w("cli_render");
  const std::string shard = w.path("walk.soct");
  REQUIRE(run({"ingest", "--traj", w.traj_text, "--map", w.map, "--out", shard}).code == cli::kOk);
  const auto trajs = read_trajectory_shard(shard);
  REQUIRE(trajs.size() == 2);
  CHECK(trajs[0].samples.size() == 121);
  CHECK(fs::exists(manifest_path(shard)));
  const KvDocument man = KvDocument::load(manifest_path(shard));
  CHECK(man.require_string("subcommand") == "ingest");
  CHECK(man.require_string("output_digest") == hex_digest(file_digest(shard)));

  // One agent, ten steps.
  Trajectory ten = testing::line_trajectory(0, {3, 3}, {3, 3.9}, 0.0, 0.9, 0.1);
  REQUIRE(ten.samples.size() == 10);
  write_trajectory_shard(std::vector<Trajectory>{ten}, w.path("ten.soct"));
  REQUIRE(run({"render", "--traj", w.path("ten.soct"), "--map", w.map, "--camera", w.camera, "--out", w.path("ten.socs")})
              .code == cli::kOk);
  const auto records = read_sample_shard(w.path("ten.socs"));
  CHECK(records.size() == 10);
  CHECK(records[0].depth.width == 16);

  write_trajectory_shard(std::vector<Trajectory>{}, w.path("empty.soct"));
  REQUIRE(run({"render", "--traj", w.path("empty.soct"), "--map", w.map, "--camera", w.camera, "--out",
               w.path("empty.socs")})
              .code == cli::kOk);
  CHECK(read_sample_shard(w.path("empty.socs")).empty());

  for (const char* name : {"a.socs", "b.socs"}) {
    REQUIRE(run({"render", "--traj", shard, "--map", w.map, "--camera", w.camera, "--out", w.path(name)}).code ==
            cli::kOk);
  }
  CHECK(bytes_of(w.path("a.socs")) == bytes_of(w.path("b.socs")));
  CHECK(bytes_of(manifest_path(w.path("a.socs"))).size() > 0);

  REQUIRE(run({"pgm", w.path("a.socs"), "--index", "5", "--out", w.path("f.pgm")}).code == cli::kOk);
  CHECK(bytes_of(w.path("f.pgm")).starts_with("P5\n16 12\n255\n"));
  CHECK(run({"pgm", w.path("a.socs"), "--index", "100000", "--out", w.path("f.pgm")}).code == cli::kConfig);

  const Run gt = run({"eval", shard, "--map", w.map, "--policy", "gt", "--out", w.path("gt.csv")});
  REQUIRE(gt.code == cli::kOk);
  CHECK(gt.out.find("ade 0,") != std::string::npos);
  const Run sfm1 = run({"eval", shard, "--map", w.map, "--policy", "sfm", "--out", w.path("sfm1.csv")});
  const Run sfm2 = run({"eval", shard, "--map", w.map, "--policy", "sfm", "--out", w.path("sfm2.csv")});
  REQUIRE(sfm1.code == cli::kOk);
  CHECK(bytes_of(w.path("sfm1.csv")) == bytes_of(w.path("sfm2.csv")));
  CHECK(run({"eval", shard, "--map", w.map, "--policy", "rvo", "--count", "1", "--out", w.path("rvo.csv")}).code ==
        cli::kOk);
}

TEST_CASE("cli augment, pretrain and finetune") {
  const Workspace w("cli_train");
  write_text_file(w.path("augment.cfg"), "seed = 5\nagents_per_rollout = 3\n");
  const Run aug = run({"augment", "--map", w.map, "--config", w.path("augment.cfg"), "--count", "10", "--out",
                       w.path("synth.soct")});
  REQUIRE(aug.code == cli::kOk);
  CHECK(read_trajectory_shard(w.path("synth.soct")).size() == 10);
  REQUIRE(run({"augment", "--map", w.map, "--config", w.path("augment.cfg"), "--count", "10", "--out",
               w.path("synth2.soct")})
              .code == cli::kOk);
  CHECK(bytes_of(w.path("synth.soct")) == bytes_of(w.path("synth2.soct")));
  REQUIRE(run({"augment", "--map", w.map, "--config", w.path("augment.cfg"), "--count", "10", "--seed", "6", "--out",
               w.path("synth3.soct")})
              .code == cli::kOk);
  CHECK(bytes_of(w.path("synth.soct")) != bytes_of(w.path("synth3.soct")));

  REQUIRE(run({"render", "--traj", w.path("synth.soct"), "--map", w.map, "--camera", w.camera, "--out",
               w.path("synth.socs")})
              .code == cli::kOk);
  REQUIRE(run({"ingest", "--traj", w.traj_text, "--map", w.map, "--out", w.path("real.soct")}).code == cli::kOk);
  REQUIRE(run({"render", "--traj", w.path("real.soct"), "--map", w.map, "--camera", w.camera, "--out",
               w.path("real.socs")})
              .code == cli::kOk);

  ModelConfig model;
  model.history = 3;
  model.depth_width = 16;
  model.depth_height = 12;
  model.conv = {{4, 3, 2}};
  model.frame_embed = 16;
  model.pose_embed = 8;
  model.lstm_hidden = 16;
  model.velocity_hidden = {16};
  TrainConfig train;
  train.pretrain_epochs = 1;
  train.finetune_epochs = 1;
  train.window_stride = 4;
  KvDocument doc;
  model.append_to(doc);
  train.append_to(doc);
  doc.save(w.path("train.cfg"));

  const std::string pre = w.path("pre.ckpt"), fine = w.path("fine.ckpt");
  const Run r1 = run({"train", w.path("synth.socs"), "--config", w.path("train.cfg"), "--schedule", "pretrain",
                      "--out", pre});
  REQUIRE_MESSAGE(r1.code == cli::kOk, r1.err);
  const Run r2 = run({"train", w.path("real.socs"), "--config", w.path("train.cfg"), "--schedule", "finetune",
                      "--init", pre, "--out", fine});
  REQUIRE_MESSAGE(r2.code == cli::kOk, r2.err);
  const Checkpoint a = load_checkpoint(pre), b = load_checkpoint(fine);
  CHECK(a.parent_digest == 0);
  CHECK(b.parent_digest == file_digest(pre));
  CHECK(b.schedule == Schedule::kFinetune);
  CHECK(KvDocument::load(manifest_path(fine)).require_string("parent_digest") == hex_digest(file_digest(pre)));
  CHECK(fs::exists(fine + ".loss.csv"));

  // An ablation whose model differs from the parent checkpoint is refused.
  CHECK(run({"train", w.path("real.socs"), "--config", w.path("train.cfg"), "--schedule", "finetune", "--init", pre,
             "--ablation", "t1", "--out", w.path("bad.ckpt")})
            .code == cli::kConfig);

  const Run again = run({"train", w.path("synth.socs"), "--config", w.path("train.cfg"), "--schedule", "pretrain",
                         "--out", w.path("pre2.ckpt")});
  REQUIRE(again.code == cli::kOk);
  CHECK(bytes_of(pre) == bytes_of(w.path("pre2.ckpt")));
  CHECK(bytes_of(pre + ".loss.csv") == bytes_of(w.path("pre2.ckpt") + ".loss.csv"));

  const Run ev = run({"eval", w.path("real.soct"), "--map", w.map, "--policy", "checkpoint:" + fine, "--out",
                      w.path("model.csv")});
  REQUIRE_MESSAGE(ev.code == cli::kOk, ev.err);
  CHECK(ev.out.starts_with("model: episodes 2"));
}
