#pragma once

// End-to-end test-time adaptation: source pretraining, the warm-up / synergy /
// bank-update loop with its ablation modes, per-batch metrics, the early-set
// replay study and the on-disk result files.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mos/bank.hpp"
#include "mos/config.hpp"
#include "mos/detector.hpp"
#include "mos/evaluation.hpp"
#include "mos/params.hpp"
#include "mos/simstream.hpp"

namespace mos {

struct MetricsRecord {
  std::size_t batch = 0;
  std::string phase;  ///< "warmup", "adapt" or "frozen"
  CorruptionSpec corruption{};
  std::vector<ClassMetrics> classes;  ///< this batch only
  double batch_ap = 0.0;
  double running_ap = 0.0;  ///< cumulative over batches 0..batch
  std::vector<double> weights;
  std::vector<double> raw_weights;
  std::vector<std::uint64_t> bank;  ///< checkpoint ids after this batch
  std::optional<std::uint64_t> evicted;
  std::size_t pseudo_labels = 0;
  bool trained = false;
  bool diverged = false;
};

/// One compact JSON object, no trailing newline.
std::string to_json_line(const MetricsRecord& record);

struct RunReport {
  RunConfig config;
  std::vector<MetricsRecord> records;
  EvalSummary final;  ///< cumulative over the whole stream
  std::size_t evictions = 0;
  std::size_t training_steps = 0;
  std::size_t diverged_steps = 0;
  ParamVector source;
  ParamVector warmup_end;   ///< current model after the last warm-up batch
  ParamVector final_model;  ///< current model after the last batch
  std::vector<CheckpointRecord> final_bank;
  std::vector<ParamVector> final_bank_params;
};

/// Adam on clean source-domain scenes with ground-truth labels. Depends only
/// on the fields captured by source_model_key.
ParamVector pretrain_source(const RunConfig& config,
                            const std::function<void(std::size_t step, double loss)>& progress = {});

/// pretrain_source with a checkpoint cache keyed by source_model_key.
ParamVector load_or_pretrain_source(const RunConfig& config, const std::filesystem::path& cache_dir);

struct RunOptions {
  std::filesystem::path checkpoint_dir;  ///< empty keeps checkpoints in memory
  std::function<void(const MetricsRecord&)> on_record;
};

RunReport run_tta(const RunConfig& config, const ParamVector& source, const RunOptions& options = {});

struct ReplayReport {
  std::size_t scenes = 0;
  EvalSummary final_bank;  ///< super model of the final bank, reweighted per batch
  EvalSummary warmup_end;
};

/// Re-evaluates the first `early_set_scenes` clouds of the stream with the
/// final bank and with the checkpoint saved at the end of warm-up.
ReplayReport replay_early_set(const RunReport& run);

/// Super-model evaluation of a fixed bank over the given batches.
EvalSummary evaluate_bank(const RunConfig& config, const std::vector<ParamVector>& bank,
                          const std::vector<SceneBatch>& batches, std::size_t max_scenes);

std::string summary_json(const RunReport& run, const std::optional<ReplayReport>& replay = std::nullopt);
std::string curve_csv(const RunReport& run);

/// Writes metrics.jsonl, summary.json, curve.csv and config.json into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunReport& run,
                       const std::optional<ReplayReport>& replay = std::nullopt);

}  // namespace mos
