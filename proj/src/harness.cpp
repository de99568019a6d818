#include "mos/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mos/checkpoint_io.hpp"
#include "mos/error.hpp"
#include "mos/synergy.hpp"

namespace mos {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kAugmentTag = 0x617567;  // "aug"

bool uses_bank(RunMode mode) {
  return mode == RunMode::mos_sw_first || mode == RunMode::mos_latest_first || mode == RunMode::mean_ensemble;
}

std::mt19937_64 augment_rng(std::uint64_t seed, std::size_t batch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(batch), static_cast<std::uint32_t>(kAugmentTag)};
  return std::mt19937_64(seq);
}

std::vector<BoxSet> boxes_of(std::vector<SceneOutput>&& outputs) {
  std::vector<BoxSet> out;
  out.reserve(outputs.size());
  for (auto& o : outputs) out.push_back(std::move(o.boxes));
  return out;
}

SynergyWeights bank_weights(const RunConfig& config, const Detector& detector,
                            const std::function<ParamVector(std::size_t)>& load, std::size_t k,
                            std::span<const PointCloud> clouds) {
  if (config.mode == RunMode::mean_ensemble || k == 1) return uniform_weights(k);
  std::vector<CheckpointOutputs> outputs;
  outputs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) outputs.push_back(detector.infer(load(i), clouds));
  return synergy_weights(gram_matrix(outputs, {config.feat, config.box}, config.detector.exec));
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ojson summary_to_json(const EvalSummary& s) {
  ojson classes = ojson::array();
  for (const auto& c : s.classes)
    classes.push_back({{"class_id", c.class_id},
                       {"num_gt", c.num_gt},
                       {"tp", c.true_positives},
                       {"fp", c.false_positives},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"ap", c.ap}});
  return {{"ap", s.ap}, {"precision", s.precision}, {"recall", s.recall}, {"classes", classes}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
  ojson classes = ojson::array();
  for (const auto& c : r.classes)
    classes.push_back({{"class_id", c.class_id}, {"precision", c.precision}, {"recall", c.recall}, {"num_gt", c.num_gt}});
  ojson j = {{"batch", r.batch},
             {"phase", r.phase},
             {"corruption", std::string(to_string(r.corruption.kind))},
             {"severity", std::string(to_string(r.corruption.severity))},
             {"classes", classes},
             {"batch_ap", r.batch_ap},
             {"running_ap", r.running_ap},
             {"recall_positions", kRecallPositions},
             {"weights", r.weights},
             {"raw_weights", r.raw_weights},
             {"bank", r.bank},
             {"evicted", r.evicted ? ojson(*r.evicted) : ojson(nullptr)},
             {"pseudo_labels", r.pseudo_labels},
             {"trained", r.trained},
             {"diverged", r.diverged}};
  return j.dump();
}

ParamVector pretrain_source(const RunConfig& config,
                            const std::function<void(std::size_t, double)>& progress) {
  config.validate();
  const Detector detector(config.detector);
  const auto& pc = config.pretrain;
  StreamConfig source_stream = config.stream;
  source_stream.scenes_per_batch = pc.scenes_per_step;

  auto p = detector.init_params(pc.init_seed).to_double();
  std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0), g(p.size());
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t step = 0; step < pc.steps; ++step) {
    SceneBatch batch = generate_source_batch(source_stream, pc.seed, step);
    std::vector<TrainTarget> targets(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) targets[s].labels = batch.gt[s];
    if (pc.augment) {
      auto rng = augment_rng(pc.seed, step);
      apply_world_scale(batch.clouds, targets, sample_world_scale(AugmentStrength::strong, rng));
    }
    const auto loss = detector.loss_and_grad(p, batch.clouds, targets, g);
    if (!std::isfinite(loss.total)) throw Error(ErrorCode::TrainingDiverged, "source pretraining diverged");
    b1t *= pc.beta1;
    b2t *= pc.beta2;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = pc.beta1 * m[i] + (1.0 - pc.beta1) * g[i];
      v[i] = pc.beta2 * v[i] + (1.0 - pc.beta2) * g[i] * g[i];
      const double mh = m[i] / (1.0 - b1t), vh = v[i] / (1.0 - b2t);
      p[i] -= pc.learning_rate * mh / (std::sqrt(vh) + pc.epsilon);
    }
    if (progress) progress(step, loss.total);
  }
  return ParamVector::from_double(detector.layout(), p);
}

ParamVector load_or_pretrain_source(const RunConfig& config, const std::filesystem::path& cache_dir) {
  char name[40];
  std::snprintf(name, sizeof name, "source_%016llx.mosc",
                static_cast<unsigned long long>(fnv1a(source_model_key(config))));
  const auto path = cache_dir / name;
  if (std::filesystem::exists(path)) {
    auto cached = read_checkpoint(path);
    if (cached.layout() == Detector(config.detector).layout()) return cached;
  }
  auto params = pretrain_source(config);
  std::filesystem::create_directories(cache_dir);
  write_checkpoint(path, params);
  return params;
}

RunReport run_tta(const RunConfig& config, const ParamVector& source, const RunOptions& options) {
  config.validate();
  const Detector detector(config.detector);
  if (source.layout() != detector.layout())
    throw Error(ErrorCode::LayoutMismatch, "source model does not match the detector architecture");

  const RunMode mode = config.mode;
  const bool adapt = mode != RunMode::no_adapt;
  const bool banked = uses_bank(mode);
  const std::size_t k = config.bank_size;

  RunReport report;
  report.config = config;
  report.source = source;
  report.warmup_end = source;

  CheckpointStore store = options.checkpoint_dir.empty() ? CheckpointStore() : CheckpointStore(options.checkpoint_dir);
  ModelBank bank(k, config.update_period);
  ParamVector current = source;
  EvalAccumulator running(config.eval_iou);

  for (std::size_t t = 0; t < config.stream.batches; ++t) {
    const SceneBatch batch = generate_target_batch(config.stream, config.seed, t);
    MetricsRecord rec;
    rec.batch = t;
    rec.corruption = batch.corruption;
    const bool warm = banked && !bank.warmup_complete();

    // Predictions on x_t; with a full bank they come from the super model.
    std::vector<BoxSet> predictions;
    SynergyWeights w;
    if (banked && !warm) {
      rec.phase = "adapt";
      const auto& ckpts = bank.checkpoints();
      auto load = [&](std::size_t i) { return store.load(ckpts[i].id); };
      w = bank_weights(config, detector, load, k, batch.clouds);
      const ParamVector super = assemble_sequential(k, load, w.weights);
      predictions = boxes_of(detector.infer(super, batch.clouds));
      rec.weights = w.weights;
      rec.raw_weights = w.raw;
    } else {
      rec.phase = !adapt ? "frozen" : warm ? "warmup" : "adapt";
      predictions = boxes_of(detector.infer(current, batch.clouds));
    }

    const EvalSummary batch_eval = evaluate(predictions, batch.gt, config.eval_iou);
    rec.classes = batch_eval.classes;
    rec.batch_ap = batch_eval.ap;
    running.add(predictions, batch.gt);
    rec.running_ap = running.summary().ap;

    if (adapt) {
      const PseudoLabelSet labels = pseudo_label(predictions, config.pseudo);
      for (const auto& l : labels.labels) rec.pseudo_labels += l.size();
      std::vector<PointCloud> clouds = batch.clouds;
      std::vector<TrainTarget> targets = labels.targets();
      if (config.augment) {
        auto rng = augment_rng(config.seed, t);
        apply_world_scale(clouds, targets, sample_world_scale(AugmentStrength::strong, rng));
      }
      try {
        current = detector.train_step(current, clouds, targets, config.learning_rate, config.grad_clip);
        rec.trained = !labels.empty() && config.learning_rate > 0.0;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TrainingDiverged) throw;
        rec.diverged = true;
      }
      report.training_steps += rec.trained ? 1 : 0;
      report.diverged_steps += rec.diverged ? 1 : 0;

      const CheckpointRecord ckpt{t, t};
      if (warm) {
        store.save(t, current);
        bank.push_warmup(ckpt);
        if (bank.warmup_complete()) report.warmup_end = current;
      } else if (mode == RunMode::mos_latest_first) {
        store.save(t, current);
        rec.evicted = bank.replace_oldest(ckpt);
      } else if (banked) {
        bank.record_weights(w.weights);
        if (bank.update_due()) {
          store.save(t, current);
          rec.evicted = bank.update(ckpt);
        }
      } else if (t + 1 == k) {
        report.warmup_end = current;
      }
      if (rec.evicted) {
        store.remove(*rec.evicted);
        ++report.evictions;
      }
    }
    for (const auto& c : bank.checkpoints()) rec.bank.push_back(c.id);
    if (options.on_record) options.on_record(rec);
    report.records.push_back(std::move(rec));
  }

  report.final = running.summary();
  report.final_model = current;
  if (banked && bank.size() > 0) {
    report.final_bank = bank.checkpoints();
    for (const auto& c : report.final_bank) report.final_bank_params.push_back(store.load(c.id));
  } else {
    report.final_bank_params.push_back(current);
  }
  return report;
}

EvalSummary evaluate_bank(const RunConfig& config, const std::vector<ParamVector>& bank,
                          const std::vector<SceneBatch>& batches, std::size_t max_scenes) {
  if (bank.empty()) throw Error(ErrorCode::LayoutMismatch, "cannot evaluate an empty bank");
  const Detector detector(config.detector);
  EvalAccumulator acc(config.eval_iou);
  std::size_t seen = 0;
  for (const auto& batch : batches) {
    if (seen >= max_scenes) break;
    const std::size_t n = std::min(batch.size(), max_scenes - seen);
    const std::span<const PointCloud> clouds(batch.clouds.data(), n);
    auto load = [&](std::size_t i) { return bank[i]; };
    const auto w = bank_weights(config, detector, load, bank.size(), clouds);
    const auto super = assemble(bank, w.weights, config.detector.exec);
    const auto predictions = boxes_of(detector.infer(super, clouds));
    acc.add(predictions, std::span<const BoxSet>(batch.gt.data(), n));
    seen += n;
  }
  return acc.summary();
}

ReplayReport replay_early_set(const RunReport& run) {
  const RunConfig& config = run.config;
  const std::size_t count = std::min(config.early_set_batches(), config.stream.batches);
  std::vector<SceneBatch> early;
  for (std::size_t t = 0; t < count; ++t) early.push_back(generate_target_batch(config.stream, config.seed, t));
  ReplayReport out;
  out.scenes = std::min(config.early_set_scenes, count * config.stream.scenes_per_batch);
  out.final_bank = evaluate_bank(config, run.final_bank_params, early, out.scenes);
  out.warmup_end = evaluate_bank(config, {run.warmup_end}, early, out.scenes);
  return out;
}

std::string summary_json(const RunReport& run, const std::optional<ReplayReport>& replay) {
  ojson bank = ojson::array();
  for (const auto& c : run.final_bank) bank.push_back({{"id", c.id}, {"created_at_batch", c.created_at_batch}});
  ojson j = {{"mode", std::string(to_string(run.config.mode))},
             {"seed", run.config.seed},
             {"batches", run.records.size()},
             {"bank_size", run.config.bank_size},
             {"update_period", run.config.update_period},
             {"iou_threshold", run.config.eval_iou},
             {"recall_positions", kRecallPositions},
             {"final", summary_to_json(run.final)},
             {"evictions", run.evictions},
             {"training_steps", run.training_steps},
             {"diverged_steps", run.diverged_steps},
             {"final_bank", bank}};
  if (replay)
    j["early_set"] = {{"scenes", replay->scenes},
                      {"final_bank", summary_to_json(replay->final_bank)},
                      {"warmup_end", summary_to_json(replay->warmup_end)}};
  return j.dump(2) + "\n";
}

std::string curve_csv(const RunReport& run) {
  std::ostringstream out;
  out.precision(17);
  out << "batch,phase,corruption,severity,batch_ap,running_ap,evicted";
  for (std::size_t i = 0; i < run.config.bank_size; ++i) out << ",w" << i;
  out << "\n";
  for (const auto& r : run.records) {
    out << r.batch << ',' << r.phase << ',' << to_string(r.corruption.kind) << ',' << to_string(r.corruption.severity)
        << ',' << r.batch_ap << ',' << r.running_ap << ',';
    if (r.evicted) out << *r.evicted;
    for (std::size_t i = 0; i < run.config.bank_size; ++i) {
      out << ',';
      if (i < r.weights.size()) out << r.weights[i];
    }
    out << "\n";
  }
  return out.str();
}

void write_run_outputs(const std::filesystem::path& dir, const RunReport& run,
                       const std::optional<ReplayReport>& replay) {
  std::filesystem::create_directories(dir);
  std::string lines;
  for (const auto& r : run.records) lines += to_json_line(r) + "\n";
  write_text(dir / "metrics.jsonl", lines);
  write_text(dir / "summary.json", summary_json(run, replay));
  write_text(dir / "curve.csv", curve_csv(run));
  write_text(dir / "config.json", dump_run_config(run.config) + "\n");
}

}  // namespace mos
