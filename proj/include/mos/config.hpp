#pragma once

// Run configuration for test-time adaptation experiments, read from JSON.
// Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "mos/boxsim.hpp"
#include "mos/detector.hpp"
#include "mos/featsim.hpp"
#include "mos/simstream.hpp"

namespace mos {

enum class RunMode { mos_sw_first, mos_latest_first, mean_ensemble, no_ensemble, no_adapt };

std::string_view to_string(RunMode mode);
RunMode parse_run_mode(std::string_view name);
FeatSimMode parse_featsim_mode(std::string_view name);
std::string_view to_string(FeatSimMode mode);

/// Adam pretraining of the source model on clean source-domain scenes.
struct PretrainConfig {
  std::size_t steps = 600;
  std::size_t scenes_per_step = 4;
  double learning_rate = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 20240601;
  std::uint64_t init_seed = 1;
  bool augment = true;  ///< strong world scaling on every step
};

struct RunConfig {
  RunMode mode = RunMode::mos_sw_first;
  std::uint64_t seed = 0;
  std::size_t bank_size = 5;        ///< K
  std::size_t update_period = 112;  ///< L
  double learning_rate = 1e-3;      ///< single-step adaptation
  double grad_clip = 5.0;           ///< global-norm clip, 0 disables
  bool augment = false;             ///< strong world scaling on the training view
  std::size_t early_set_scenes = 32;
  double eval_iou = 0.7;
  PseudoLabelConfig pseudo{};
  FeatSimOptions feat{};
  BoxSimOptions box{};
  DetectorConfig detector{};
  StreamConfig stream{};
  PretrainConfig pretrain{};

  /// Throws ConfigError.
  void validate() const;
  std::size_t early_set_batches() const;
};

RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

/// Canonical JSON of the fields that determine the pretrained source model.
std::string source_model_key(const RunConfig& config);

}  // namespace mos
