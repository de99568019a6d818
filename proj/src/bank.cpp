#include "mos/bank.hpp"

#include <algorithm>
#include <string>

#include "mos/checkpoint_io.hpp"
#include "mos/error.hpp"

namespace mos {

ModelBank::ModelBank(std::size_t capacity, std::size_t update_period)
    : capacity_(capacity), period_(update_period) {
  if (capacity_ == 0) throw Error(ErrorCode::ConfigError, "bank capacity must be at least 1");
  if (period_ == 0) throw Error(ErrorCode::ConfigError, "update period must be at least 1");
}

void ModelBank::require_newer(const CheckpointRecord& ckpt) const {
  if (!checkpoints_.empty() && ckpt.id <= checkpoints_.back().id)
    throw Error(ErrorCode::InvalidCheckpoint, "checkpoint ids must increase");
}

void ModelBank::push_warmup(const CheckpointRecord& ckpt) {
  if (warmup_complete()) throw Error(ErrorCode::BankFull, "bank already holds its capacity");
  require_newer(ckpt);
  checkpoints_.push_back(ckpt);
}

void ModelBank::record_weights(std::span<const double> weights) {
  if (!warmup_complete()) throw Error(ErrorCode::BankNotReady, "weights recorded before warm-up finished");
  if (update_due()) throw Error(ErrorCode::UpdateDue, "history is full; update the bank first");
  if (weights.size() != checkpoints_.size())
    throw Error(ErrorCode::ShapeMismatch, "one weight per checkpoint required");
  history_.emplace_back(weights.begin(), weights.end());
}

std::vector<double> ModelBank::mean_weights() const {
  std::vector<double> mean(checkpoints_.size(), 0.0);
  if (history_.empty()) return mean;
  for (const auto& row : history_)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
  for (auto& m : mean) m /= static_cast<double>(history_.size());
  return mean;
}

std::uint64_t ModelBank::update(const CheckpointRecord& current) {
  if (!update_due()) throw Error(ErrorCode::UpdateNotDue, "bank update requested before L batches");
  require_newer(current);
  const auto mean = mean_weights();
  std::size_t victim = 0;
  for (std::size_t k = 1; k < mean.size(); ++k) {
    const bool lower = mean[k] < mean[victim] ||
                       (mean[k] == mean[victim] && checkpoints_[k].id < checkpoints_[victim].id);
    if (lower) victim = k;
  }
  const std::uint64_t evicted = checkpoints_[victim].id;
  checkpoints_.erase(checkpoints_.begin() + static_cast<std::ptrdiff_t>(victim));
  checkpoints_.push_back(current);
  history_.clear();
  return evicted;
}

std::uint64_t ModelBank::replace_oldest(const CheckpointRecord& current) {
  if (!warmup_complete()) throw Error(ErrorCode::BankNotReady, "bank is still warming up");
  require_newer(current);
  const std::uint64_t evicted = checkpoints_.front().id;
  checkpoints_.erase(checkpoints_.begin());
  checkpoints_.push_back(current);
  history_.clear();
  return evicted;
}

CheckpointStore::CheckpointStore(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::filesystem::create_directories(directory_);
}

std::filesystem::path CheckpointStore::path_for(std::uint64_t id) const {
  return directory_ / ("ckpt_" + std::to_string(id) + ".mosc");
}

void CheckpointStore::save(std::uint64_t id, const ParamVector& params) {
  if (on_disk()) write_checkpoint(path_for(id), params);
  else memory_.insert_or_assign(id, params);
}

ParamVector CheckpointStore::load(std::uint64_t id) const {
  if (on_disk()) {
    if (!std::filesystem::exists(path_for(id)))
      throw Error(ErrorCode::InvalidCheckpoint, "unknown checkpoint " + std::to_string(id));
    return read_checkpoint(path_for(id));
  }
  const auto it = memory_.find(id);
  if (it == memory_.end()) throw Error(ErrorCode::InvalidCheckpoint, "unknown checkpoint " + std::to_string(id));
  return it->second;
}

void CheckpointStore::remove(std::uint64_t id) {
  if (on_disk()) std::filesystem::remove(path_for(id));
  else memory_.erase(id);
}

bool CheckpointStore::contains(std::uint64_t id) const {
  return on_disk() ? std::filesystem::exists(path_for(id)) : memory_.count(id) > 0;
}

}  // namespace mos
