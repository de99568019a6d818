#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference
// (kernels::serial) and an OpenMP implementation (kernels::omp); the public
// entry points dispatch on Exec. Each output element is produced by exactly
// one thread with a fixed summation order, so results do not depend on the
// thread count.

#include <cstddef>
#include <span>

namespace mos {

enum class Exec { serial, parallel };

namespace kernels {

/// Square-kernel 2D convolution over HWC tensors with zero padding.
/// Weights are laid out [out_c][kernel][kernel][in_c].
struct ConvShape {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t out_c = 0;
  std::size_t kernel = 3, stride = 1, pad = 1;

  std::size_t out_h() const noexcept { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const noexcept { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const noexcept { return in_h * in_w * in_c; }
  std::size_t output_size() const noexcept { return out_h() * out_w() * out_c; }
  std::size_t weight_size() const noexcept { return out_c * kernel * kernel * in_c; }
};

namespace serial {
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void conv2d_backward_weights(const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weight,
                             std::span<double> grad_bias);
void conv2d_backward_input(const ConvShape& s, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input);
void weighted_sum(std::span<const std::span<const float>> sources, std::span<const double> weights,
                  std::span<float> out);
}  // namespace serial

namespace omp {
void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);
void conv2d_backward_weights(const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weight,
                             std::span<double> grad_bias);
void conv2d_backward_input(const ConvShape& s, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input);
void weighted_sum(std::span<const std::span<const float>> sources, std::span<const double> weights,
                  std::span<float> out);
}  // namespace omp

/// output = conv(input) + bias (no activation).
void conv2d_forward(Exec exec, const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias, std::span<double> output);

/// Overwrites grad_weight and grad_bias.
void conv2d_backward_weights(Exec exec, const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weight,
                             std::span<double> grad_bias);

/// Overwrites grad_input.
void conv2d_backward_input(Exec exec, const ConvShape& s, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input);

/// out[p] = sum_i weights[i] * sources[i][p], accumulated in double.
void weighted_sum(Exec exec, std::span<const std::span<const float>> sources,
                  std::span<const double> weights, std::span<float> out);

}  // namespace kernels
}  // namespace mos
