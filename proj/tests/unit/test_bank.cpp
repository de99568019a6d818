#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "mos/bank.hpp"
#include "mos/checkpoint_io.hpp"
#include "mos/error.hpp"
#include "oracles.hpp"

using namespace mos;

namespace {

CheckpointRecord rec(std::uint64_t id) { return {id, static_cast<std::size_t>(id)}; }

template <class F>
void expect_error(ErrorCode code, F&& f) {
  try {
    f();
    FAIL() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code);
  }
}

ModelBank full_bank(std::size_t k, std::size_t l) {
  ModelBank bank(k, l);
  for (std::size_t i = 0; i < k; ++i) bank.push_warmup(rec(i));
  return bank;
}

ParamVector sample_params() {
  ParamLayout layout = {{"conv.w", {2, 3}}, {"conv.b", {2}}, {"scalar", {}}};
  std::vector<float> v = {1.5f, -0.0f, 3e-39f, 1e30f, -2.25f, 0.1f, 7.0f, -8.5f, 0.333f};
  return ParamVector(layout, v);
}

}  // namespace

TEST(ModelBank, WarmupFillsToCapacity) {
  ModelBank bank(5, 112);
  bank.push_warmup(rec(0));
  EXPECT_EQ(bank.size(), 1u);
  for (std::uint64_t i = 1; i < 4; ++i) bank.push_warmup(rec(i));
  EXPECT_FALSE(bank.warmup_complete());
  bank.push_warmup(rec(4));
  EXPECT_TRUE(bank.warmup_complete());
  expect_error(ErrorCode::BankFull, [&] { bank.push_warmup(rec(5)); });
}

TEST(ModelBank, ConfigAndOrderingErrors) {
  expect_error(ErrorCode::ConfigError, [] { ModelBank(0, 3); });
  expect_error(ErrorCode::ConfigError, [] { ModelBank(3, 0); });
  ModelBank bank(3, 2);
  bank.push_warmup(rec(4));
  expect_error(ErrorCode::InvalidCheckpoint, [&] { bank.push_warmup(rec(4)); });
  expect_error(ErrorCode::BankNotReady, [&] { bank.record_weights(std::vector<double>{1.0}); });
}

TEST(ModelBank, HistoryFillsToPeriod) {
  ModelBank bank = full_bank(3, 4);
  const std::vector<double> row = {0.2, 0.3, 0.5};
  bank.record_weights(row);
  EXPECT_EQ(bank.weight_history().size(), 1u);
  for (int i = 0; i < 2; ++i) bank.record_weights(row);
  EXPECT_FALSE(bank.update_due());
  bank.record_weights(row);
  EXPECT_TRUE(bank.update_due());
  expect_error(ErrorCode::UpdateDue, [&] { bank.record_weights(row); });
  expect_error(ErrorCode::ShapeMismatch, [&] {
    ModelBank other = full_bank(3, 4);
    other.record_weights(std::vector<double>{0.5, 0.5});
  });
}

TEST(ModelBank, EvictsLowestMeanColumn) {
  ModelBank bank = full_bank(3, 3);
  bank.record_weights(std::vector<double>{0.4, 0.4, 0.2});
  bank.record_weights(std::vector<double>{0.3, 0.5, 0.2});
  bank.record_weights(std::vector<double>{0.2, 0.3, 0.5});
  // Means: 0.3, 0.4, 0.3 -> tie between 0 and 2, oldest wins.
  EXPECT_EQ(bank.update(rec(10)), 0u);

  ModelBank strict = full_bank(3, 3);
  strict.record_weights(std::vector<double>{0.4, 0.4, 0.2});
  strict.record_weights(std::vector<double>{0.3, 0.5, 0.2});
  strict.record_weights(std::vector<double>{0.3, 0.3, 0.4});
  EXPECT_EQ(strict.update(rec(10)), 2u);
  EXPECT_EQ(strict.size(), 3u);
  EXPECT_TRUE(strict.weight_history().empty());
  EXPECT_EQ(strict.checkpoints().back().id, 10u);
}

TEST(ModelBank, EqualMeansEvictOldest) {
  ModelBank bank = full_bank(4, 2);
  for (int i = 0; i < 2; ++i) bank.record_weights(std::vector<double>(4, 0.25));
  EXPECT_EQ(bank.update(rec(9)), 0u);
}

TEST(ModelBank, UpdateBeforeDueThrows) {
  ModelBank bank = full_bank(2, 2);
  bank.record_weights(std::vector<double>{0.5, 0.5});
  expect_error(ErrorCode::UpdateNotDue, [&] { bank.update(rec(5)); });
}

TEST(ModelBank, ReplaceOldestKeepsMostRecent) {
  ModelBank bank = full_bank(3, 1);
  EXPECT_EQ(bank.replace_oldest(rec(3)), 0u);
  EXPECT_EQ(bank.replace_oldest(rec(4)), 1u);
  std::vector<std::uint64_t> ids;
  for (const auto& c : bank.checkpoints()) ids.push_back(c.id);
  EXPECT_EQ(ids, (std::vector<std::uint64_t>{2, 3, 4}));
}

TEST(ModelBank, RandomHistoriesMatchBruteForce) {
  std::mt19937_64 rng(41);
  std::uniform_int_distribution<int> quarter(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 1 + rng() % 6, l = 1 + rng() % 8;
    ModelBank bank = full_bank(k, l);
    std::vector<std::vector<double>> history;
    for (std::size_t r = 0; r < l; ++r) {
      // Coarse values make exact ties common.
      std::vector<double> row(k);
      for (auto& v : row) v = quarter(rng) / 4.0;
      history.push_back(row);
      bank.record_weights(row);
    }
    const auto means = bank.mean_weights();
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (const auto& row : history) s += row[c];
      EXPECT_EQ(means[c], s / static_cast<double>(l));
    }
    const auto expected = bank.checkpoints()[oracle::argmin_column_mean(history)].id;
    EXPECT_EQ(bank.update(rec(100)), expected);
    EXPECT_EQ(bank.size(), k);
  }
}

TEST(ModelBank, EvictionCountOverStream) {
  for (std::size_t k : {1u, 3u, 5u})
    for (std::size_t l : {1u, 4u, 16u})
      for (std::size_t t : {k, k + 7, std::size_t{64}}) {
        ModelBank bank(k, l);
        std::size_t evictions = 0;
        for (std::size_t b = 0; b < t; ++b) {
          if (!bank.warmup_complete()) {
            bank.push_warmup(rec(b));
            continue;
          }
          bank.record_weights(std::vector<double>(k, 1.0 / static_cast<double>(k)));
          if (bank.update_due()) {
            bank.update(rec(b));
            ++evictions;
          }
          EXPECT_EQ(bank.size(), k);
        }
        EXPECT_EQ(evictions, (t - k) / l);
      }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ParamVector p = sample_params();
  const auto bytes = encode_checkpoint(p);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MOSC");
  EXPECT_EQ(bytes[4], 1);
  const ParamVector back = decode_checkpoint(bytes);
  EXPECT_EQ(back.layout(), p.layout());
  ASSERT_EQ(back.size(), p.size());
  EXPECT_EQ(std::memcmp(back.values().data(), p.values().data(), p.size() * sizeof(float)), 0);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, FloatsAreLittleEndian) {
  const ParamVector p(ParamLayout{{"x", {1}}}, std::vector<float>{1.0f});
  const auto bytes = encode_checkpoint(p);
  const std::vector<std::uint8_t> tail(bytes.end() - 4, bytes.end());
  EXPECT_EQ(tail, (std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f}));
}

TEST(Checkpoint, CorruptInputThrows) {
  auto bytes = encode_checkpoint(sample_params());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  auto truncated = bytes;
  truncated.pop_back();
  for (const auto& b : {bad_magic, truncated}) expect_error(ErrorCode::IoError, [&] { decode_checkpoint(b); });
}

TEST(CheckpointStore, MemoryAndDisk) {
  const auto dir = std::filesystem::temp_directory_path() / "mos_store_test";
  std::filesystem::remove_all(dir);
  for (bool disk : {false, true}) {
    CheckpointStore store = disk ? CheckpointStore(dir) : CheckpointStore();
    EXPECT_EQ(store.on_disk(), disk);
    store.save(7, sample_params());
    EXPECT_TRUE(store.contains(7));
    EXPECT_EQ(store.load(7), sample_params());
    if (disk) EXPECT_TRUE(std::filesystem::exists(store.path_for(7)));
    store.remove(7);
    EXPECT_FALSE(store.contains(7));
    expect_error(ErrorCode::InvalidCheckpoint, [&] { store.load(7); });
  }
  std::filesystem::remove_all(dir);
}
