// mos_cli: run test-time adaptation experiments on the synthetic stream.
//
//   mos_cli run      --config cfg.json --out results/ [--seed N] [--mode M] ...
//   mos_cli baseline --config cfg.json --mode no_adapt --out results/
//   mos_cli replay   --config cfg.json --out results/
//   mos_cli pretrain --config cfg.json
//   mos_cli oracle   [--seed N]

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mos/config.hpp"
#include "mos/error.hpp"
#include "mos/harness.hpp"
#include "oracles.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "mos_out";
  std::string cache = ".mos_cache";
  std::optional<std::string> mode;
  std::optional<std::size_t> bank_size;
  std::optional<std::size_t> update_period;
  std::optional<std::string> featsim;
  std::optional<std::size_t> batches;
  bool quiet = false;
};

void add_run_flags(CLI::App* cmd, Overrides& o, bool mode_required) {
  cmd->add_option("--config", o.config_path, "run configuration (JSON)");
  cmd->add_option("--seed", o.seed, "stream and augmentation seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--cache", o.cache, "source-model cache directory");
  auto* m = cmd->add_option("--mode", o.mode, "mos_sw_first|mos_latest_first|mean_ensemble|no_ensemble|no_adapt");
  if (mode_required) m->required();
  cmd->add_option("--bank-size", o.bank_size, "bank capacity K");
  cmd->add_option("--update-period", o.update_period, "bank update period L");
  cmd->add_option("--featsim", o.featsim, "rank|cosine");
  cmd->add_option("--batches", o.batches, "stream length T");
  cmd->add_flag("--quiet", o.quiet, "suppress per-batch progress");
}

mos::RunConfig resolve(const Overrides& o) {
  mos::RunConfig c = o.config_path.empty() ? mos::RunConfig{} : mos::load_run_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.mode = mos::parse_run_mode(*o.mode);
  if (o.bank_size) c.bank_size = *o.bank_size;
  if (o.update_period) c.update_period = *o.update_period;
  if (o.featsim) c.feat.mode = mos::parse_featsim_mode(*o.featsim);
  if (o.batches) c.stream.batches = *o.batches;
  c.validate();
  return c;
}

int run(const Overrides& o, bool replay) {
  const auto config = resolve(o);
  const auto source = mos::load_or_pretrain_source(config, o.cache);
  mos::RunOptions options;
  options.checkpoint_dir = std::filesystem::path(o.out) / "checkpoints";
  if (!o.quiet)
    options.on_record = [](const mos::MetricsRecord& r) {
      std::fprintf(stderr, "batch %4zu  %-6s  ap %.4f  running %.4f%s\n", r.batch, r.phase.c_str(), r.batch_ap,
                   r.running_ap, r.evicted ? "  (bank update)" : "");
    };
  const auto report = mos::run_tta(config, source, options);
  std::optional<mos::ReplayReport> early;
  if (replay) early = mos::replay_early_set(report);
  mos::write_run_outputs(o.out, report, early);
  std::cout << mos::summary_json(report, early);
  return 0;
}

int pretrain(const Overrides& o) {
  const auto config = resolve(o);
  mos::load_or_pretrain_source(config, o.cache);
  std::cout << "source model cached in " << o.cache << "\n";
  return 0;
}

int oracle(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : mos::oracle::run_all_oracles(seed)) {
    std::printf("%-28s %s  trials=%zu mismatches=%zu max_error=%.3g\n", r.name.c_str(),
                r.mismatches == 0 ? "PASS" : "FAIL", r.trials, r.mismatches, r.max_error);
    ok = ok && r.mismatches == 0;
  }
  return ok ? 0 : 1;
}

int report_error(const mos::Error& e) {
  nlohmann::ordered_json j = {{"error", std::string(mos::to_string(e.code()))}, {"message", e.what()}};
  std::cerr << j.dump() << "\n";
  return e.code() == mos::ErrorCode::ConfigError ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-synergy test-time adaptation on a synthetic LiDAR stream"};
  app.require_subcommand(1);
  Overrides o;
  std::uint64_t oracle_seed = 1;
  auto* run_cmd = app.add_subcommand("run", "full adaptation run");
  add_run_flags(run_cmd, o, false);
  auto* baseline_cmd = app.add_subcommand("baseline", "adaptation run with a required mode override");
  add_run_flags(baseline_cmd, o, true);
  auto* replay_cmd = app.add_subcommand("replay", "run, then evaluate the final bank on the early set");
  add_run_flags(replay_cmd, o, false);
  auto* pretrain_cmd = app.add_subcommand("pretrain", "train and cache the source model");
  add_run_flags(pretrain_cmd, o, false);
  auto* oracle_cmd = app.add_subcommand("oracle", "compare core routines against brute-force references");
  oracle_cmd->add_option("--seed", oracle_seed, "random seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd || *baseline_cmd) return run(o, false);
    if (*replay_cmd) return run(o, true);
    if (*pretrain_cmd) return pretrain(o);
    return oracle(oracle_seed);
  } catch (const mos::Error& e) {
    return report_error(e);
  }
}
