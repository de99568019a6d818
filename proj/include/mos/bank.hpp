#pragma once

// The model bank: K checkpoint slots filled during warm-up, an L x K history
// of synergy weights, and the eviction policy that drops the checkpoint with
// the lowest mean weight every L batches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "mos/params.hpp"

namespace mos {

struct CheckpointRecord {
  std::uint64_t id = 0;
  std::size_t created_at_batch = 0;
  bool operator==(const CheckpointRecord&) const = default;
};

class ModelBank {
 public:
  ModelBank(std::size_t capacity, std::size_t update_period);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t update_period() const noexcept { return period_; }
  std::size_t size() const noexcept { return checkpoints_.size(); }
  bool warmup_complete() const noexcept { return checkpoints_.size() == capacity_; }
  bool update_due() const noexcept { return history_.size() == period_; }

  const std::vector<CheckpointRecord>& checkpoints() const noexcept { return checkpoints_; }
  const std::vector<std::vector<double>>& weight_history() const noexcept { return history_; }

  /// Appends during warm-up. Throws BankFull once K checkpoints are held.
  void push_warmup(const CheckpointRecord& ckpt);

  /// Appends one row of synergy weights (one per held checkpoint). Throws
  /// UpdateDue if L rows are already stored.
  void record_weights(std::span<const double> weights);

  /// Column means of the weight history.
  std::vector<double> mean_weights() const;

  /// Evicts the checkpoint with the lowest mean weight (oldest on ties),
  /// inserts `current`, clears the history and returns the evicted id.
  /// Throws UpdateNotDue unless L rows are stored.
  std::uint64_t update(const CheckpointRecord& current);

  /// Latest-first policy: evicts the oldest checkpoint and inserts `current`.
  std::uint64_t replace_oldest(const CheckpointRecord& current);

 private:
  void require_newer(const CheckpointRecord& ckpt) const;

  std::size_t capacity_;
  std::size_t period_;
  std::vector<CheckpointRecord> checkpoints_;  // ascending id
  std::vector<std::vector<double>> history_;
};

/// Parameter storage keyed by checkpoint id. With a directory, checkpoints
/// live on disk in the MOSC format and are loaded on demand; without one they
/// are kept in memory.
class CheckpointStore {
 public:
  CheckpointStore() = default;
  explicit CheckpointStore(std::filesystem::path directory);

  void save(std::uint64_t id, const ParamVector& params);
  ParamVector load(std::uint64_t id) const;
  void remove(std::uint64_t id);
  bool contains(std::uint64_t id) const;
  std::filesystem::path path_for(std::uint64_t id) const;
  bool on_disk() const noexcept { return !directory_.empty(); }

 private:
  std::filesystem::path directory_;
  std::map<std::uint64_t, ParamVector> memory_;
};

}  // namespace mos
