// Straightforward reference loops. Slow, but each one reads like the
// definition it implements; the OpenMP versions are tested against these.

#include <algorithm>

#include "mos/kernels.hpp"

namespace mos::kernels::serial {

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oc = 0; oc < s.out_c; ++oc) {
        double acc = bias[oc];
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
            for (std::size_t ic = 0; ic < s.in_c; ++ic)
              acc += weight[((oc * k + ky) * k + kx) * s.in_c + ic] *
                     input[(static_cast<std::size_t>(iy) * s.in_w + static_cast<std::size_t>(ix)) * s.in_c + ic];
          }
        }
        output[(oy * ow + ox) * s.out_c + oc] = acc;
      }
}

void conv2d_backward_weights(const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weight,
                             std::span<double> grad_bias) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  for (std::size_t oc = 0; oc < s.out_c; ++oc) {
    double gb = 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) gb += grad_output[(oy * ow + ox) * s.out_c + oc];
    grad_bias[oc] = gb;
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx)
        for (std::size_t ic = 0; ic < s.in_c; ++ic) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
              acc += grad_output[(oy * ow + ox) * s.out_c + oc] *
                     input[(static_cast<std::size_t>(iy) * s.in_w + static_cast<std::size_t>(ix)) * s.in_c + ic];
            }
          }
          grad_weight[((oc * k + ky) * k + kx) * s.in_c + ic] = acc;
        }
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel;
  std::fill(grad_input.begin(), grad_input.end(), 0.0);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t oc = 0; oc < s.out_c; ++oc) {
        const double g = grad_output[(oy * ow + ox) * s.out_c + oc];
        for (std::size_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - static_cast<std::ptrdiff_t>(s.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - static_cast<std::ptrdiff_t>(s.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w)) continue;
            for (std::size_t ic = 0; ic < s.in_c; ++ic)
              grad_input[(static_cast<std::size_t>(iy) * s.in_w + static_cast<std::size_t>(ix)) * s.in_c + ic] +=
                  g * weight[((oc * k + ky) * k + kx) * s.in_c + ic];
          }
        }
      }
}

void weighted_sum(std::span<const std::span<const float>> sources, std::span<const double> weights,
                  std::span<float> out) {
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sources.size(); ++i) acc += weights[i] * static_cast<double>(sources[i][p]);
    out[p] = static_cast<float>(acc);
  }
}

}  // namespace mos::kernels::serial
