#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mos/error.hpp"
#include "mos/harness.hpp"

using namespace mos;

namespace {

RunConfig toy_run() {
  RunConfig c;
  c.bank_size = 3;
  c.update_period = 8;
  c.early_set_scenes = 8;
  c.detector.half_extent = 8.0;
  c.detector.grid = 16;
  c.detector.layers = {{8, 3, 2}, {8, 3, 1}};
  c.stream.half_extent = 8.0;
  c.stream.ground_points = 300;
  c.stream.scenes_per_batch = 2;
  c.stream.batches = 32;
  c.stream.min_objects = 1;
  c.stream.max_objects = 3;
  c.stream.target.point_density = 0.7;
  c.stream.corruption_schedule = {{CorruptionKind::none}, {CorruptionKind::fog}};
  c.stream.corruption_segment = 8;
  c.pretrain.steps = 300;
  c.pretrain.scenes_per_step = 2;
  return c;
}

const ParamVector& toy_source() {
  static const ParamVector source = pretrain_source(toy_run());
  return source;
}

RunReport run_mode(RunMode mode, RunConfig c = toy_run()) {
  c.mode = mode;
  return run_tta(c, toy_source());
}

std::string metrics_stream(const RunReport& r) {
  std::string out;
  for (const auto& rec : r.records) out += to_json_line(rec) + "\n";
  return out;
}

}  // namespace

TEST(RunTta, BankUpdatesFollowSchedule) {
  const RunReport r = run_mode(RunMode::mos_sw_first);
  ASSERT_EQ(r.records.size(), 32u);
  EXPECT_EQ(r.evictions, 3u);
  std::vector<std::size_t> update_batches;
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.phase, rec.batch < 3 ? "warmup" : "adapt");
    if (rec.batch >= 2) EXPECT_EQ(rec.bank.size(), 3u);
    if (rec.evicted) update_batches.push_back(rec.batch);
    if (rec.batch >= 3) {
      ASSERT_EQ(rec.weights.size(), 3u);
      double sum = 0.0;
      for (double w : rec.weights) sum += w;
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
  EXPECT_EQ(update_batches, (std::vector<std::size_t>{10, 18, 26}));
  EXPECT_EQ(r.final_bank.size(), 3u);
  EXPECT_EQ(r.final_bank_params.size(), 3u);
}

TEST(RunTta, AtMostOneTrainingStepPerBatch) {
  const RunReport r = run_mode(RunMode::mos_sw_first);
  std::size_t trained = 0;
  for (const auto& rec : r.records) trained += rec.trained;
  EXPECT_EQ(trained, r.training_steps);
  EXPECT_LE(r.training_steps, r.records.size());
  EXPECT_GT(r.training_steps, 0u);
}

TEST(RunTta, NoAdaptKeepsSourceParams) {
  const RunReport r = run_mode(RunMode::no_adapt);
  EXPECT_EQ(r.final_model, toy_source());
  EXPECT_EQ(r.training_steps, 0u);
  EXPECT_EQ(r.evictions, 0u);
  for (const auto& rec : r.records) EXPECT_EQ(rec.phase, "frozen");
}

TEST(RunTta, MeanOfIdenticalCheckpointsEqualsSingleModel) {
  RunConfig c = toy_run();
  c.learning_rate = 0.0;
  const RunReport mean = run_mode(RunMode::mean_ensemble, c);
  const RunReport frozen = run_mode(RunMode::no_adapt, c);
  for (std::size_t t = 0; t < mean.records.size(); ++t) {
    EXPECT_EQ(mean.records[t].batch_ap, frozen.records[t].batch_ap);
    EXPECT_EQ(mean.records[t].classes.size(), frozen.records[t].classes.size());
    if (t >= 3) {
      for (double w : mean.records[t].weights) EXPECT_EQ(w, 1.0 / 3.0);
    }
  }
  EXPECT_EQ(mean.final.ap, frozen.final.ap);
}

TEST(RunTta, LatestFirstHoldsMostRecentCheckpoints) {
  const RunReport r = run_mode(RunMode::mos_latest_first);
  EXPECT_EQ(r.evictions, 32u - 3u);
  const auto& last = r.records.back().bank;
  EXPECT_EQ(last, (std::vector<std::uint64_t>{29, 30, 31}));
}

TEST(RunTta, NoEnsembleUsesCurrentModelOnly) {
  const RunReport r = run_mode(RunMode::no_ensemble);
  for (const auto& rec : r.records) {
    EXPECT_TRUE(rec.weights.empty());
    EXPECT_TRUE(rec.bank.empty());
  }
  EXPECT_EQ(r.evictions, 0u);
}

TEST(RunTta, IdenticalInputsGiveIdenticalMetrics) {
  EXPECT_EQ(metrics_stream(run_mode(RunMode::mos_sw_first)), metrics_stream(run_mode(RunMode::mos_sw_first)));
  RunConfig other = toy_run();
  other.seed = 1;
  EXPECT_NE(metrics_stream(run_mode(RunMode::mos_sw_first)), metrics_stream(run_mode(RunMode::mos_sw_first, other)));
}

TEST(RunTta, DiskCheckpointsMatchMemory) {
  RunConfig c = toy_run();
  c.stream.batches = 14;
  const auto dir = std::filesystem::temp_directory_path() / "mos_harness_ckpt";
  std::filesystem::remove_all(dir);
  RunOptions opts;
  opts.checkpoint_dir = dir;
  std::size_t callbacks = 0;
  opts.on_record = [&](const MetricsRecord&) { ++callbacks; };
  const RunReport disk = run_tta(c, toy_source(), opts);
  const RunReport memory = run_tta(c, toy_source());
  EXPECT_EQ(callbacks, 14u);
  EXPECT_EQ(metrics_stream(disk), metrics_stream(memory));
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 3u);
  std::filesystem::remove_all(dir);
}

TEST(RunTta, LayoutMismatchRejected) {
  RunConfig c = toy_run();
  c.detector.layers = {{4, 3, 2}};
  EXPECT_THROW(run_tta(c, toy_source()), Error);
}

TEST(MetricsRecord, JsonLineFields) {
  const RunReport r = run_mode(RunMode::mos_sw_first);
  const auto j = nlohmann::json::parse(to_json_line(r.records[10]));
  EXPECT_EQ(j.at("batch"), 10);
  EXPECT_EQ(j.at("recall_positions"), 40);
  EXPECT_TRUE(j.contains("evicted"));
  EXPECT_EQ(j.at("weights").size(), 3u);
  const double ap = j.at("running_ap");
  EXPECT_GE(ap, 0.0);
  EXPECT_LE(ap, 1.0);
  EXPECT_EQ(to_json_line(r.records[10]).find('\n'), std::string::npos);
}

TEST(Replay, RepeatableAndReportsBothModels) {
  const RunReport r = run_mode(RunMode::mos_sw_first);
  const ReplayReport a = replay_early_set(r), b = replay_early_set(r);
  EXPECT_EQ(a.scenes, 8u);
  EXPECT_EQ(a.final_bank.ap, b.final_bank.ap);
  EXPECT_EQ(a.warmup_end.ap, b.warmup_end.ap);
  EXPECT_EQ(a.final_bank.recall, b.final_bank.recall);
}

TEST(Replay, DegenerateRunEqualsWarmupModel) {
  RunConfig c = toy_run();
  c.bank_size = 1;
  c.stream.batches = 1;
  const RunReport r = run_mode(RunMode::mos_sw_first, c);
  ASSERT_EQ(r.final_bank_params.size(), 1u);
  EXPECT_EQ(r.final_bank_params[0], r.warmup_end);
  const ReplayReport rep = replay_early_set(r);
  EXPECT_EQ(rep.final_bank.ap, rep.warmup_end.ap);
  EXPECT_EQ(rep.final_bank.recall, rep.warmup_end.recall);
}

TEST(Outputs, FilesWritten) {
  const RunReport r = run_mode(RunMode::mos_sw_first);
  const auto dir = std::filesystem::temp_directory_path() / "mos_outputs_test";
  std::filesystem::remove_all(dir);
  write_run_outputs(dir, r, replay_early_set(r));
  for (const char* name : {"metrics.jsonl", "summary.json", "curve.csv", "config.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  std::ifstream in(dir / "metrics.jsonl");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), metrics_stream(r));
  const auto summary = nlohmann::json::parse(std::ifstream(dir / "summary.json"));
  EXPECT_TRUE(summary.contains("early_set"));
  EXPECT_EQ(dump_run_config(load_run_config(dir / "config.json")), dump_run_config(r.config));
  std::filesystem::remove_all(dir);
}
