#include "mos/params.hpp"

#include <algorithm>
#include <cmath>

#include "mos/error.hpp"

namespace mos {

std::size_t TensorSpec::numel() const noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::size_t layout_size(const ParamLayout& layout) noexcept {
  std::size_t n = 0;
  for (const auto& t : layout) n += t.numel();
  return n;
}

ParamVector::ParamVector(ParamLayout layout)
    : layout_(std::move(layout)), values_(layout_size(layout_), 0.0f) {}

ParamVector::ParamVector(ParamLayout layout, std::vector<float> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_size(layout_))
    throw Error(ErrorCode::LayoutMismatch, "value count does not match manifest");
}

std::size_t ParamVector::offset_of(const std::string& name) const {
  std::size_t offset = 0;
  for (const auto& t : layout_) {
    if (t.name == name) return offset;
    offset += t.numel();
  }
  throw Error(ErrorCode::LayoutMismatch, "no tensor named " + name);
}

std::vector<double> ParamVector::to_double() const { return {values_.begin(), values_.end()}; }

ParamVector ParamVector::from_double(ParamLayout layout, std::span<const double> values) {
  std::vector<float> v(values.size());
  std::transform(values.begin(), values.end(), v.begin(), [](double x) { return static_cast<float>(x); });
  return ParamVector(std::move(layout), std::move(v));
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

void require_same_layout(const ParamVector& a, const ParamVector& b) {
  if (a.layout() != b.layout()) throw Error(ErrorCode::LayoutMismatch, "parameter manifests differ");
}

}  // namespace mos
