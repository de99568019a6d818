#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mos {

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> shape;

  std::size_t numel() const noexcept;
  bool operator==(const TensorSpec&) const = default;
};

using ParamLayout = std::vector<TensorSpec>;

std::size_t layout_size(const ParamLayout& layout) noexcept;

/// Flat float32 parameter storage with a named-tensor manifest. This is the
/// unit that gets checkpointed, averaged and restored.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout);
  ParamVector(ParamLayout layout, std::vector<float> values);

  const ParamLayout& layout() const noexcept { return layout_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<float> values() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Offset of the named tensor in the flat array; throws LayoutMismatch.
  std::size_t offset_of(const std::string& name) const;

  std::vector<double> to_double() const;
  static ParamVector from_double(ParamLayout layout, std::span<const double> values);

  bool all_finite() const noexcept;

  bool operator==(const ParamVector&) const = default;

 private:
  ParamLayout layout_;
  std::vector<float> values_;
};

/// Throws LayoutMismatch unless both vectors share an identical manifest.
void require_same_layout(const ParamVector& a, const ParamVector& b);

}  // namespace mos
