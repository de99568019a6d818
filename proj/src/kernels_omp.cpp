#include <algorithm>

#include "mos/kernels.hpp"

namespace mos::kernels {

namespace {

inline bool tap(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent,
                std::size_t& in) {
  const std::size_t pos = out * stride + k;
  if (pos < pad || pos - pad >= extent) return false;
  in = pos - pad;
  return true;
}

}  // namespace

namespace omp {

void conv2d_forward(const ConvShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel, ic_n = s.in_c;
  const double* in = input.data();
  const double* w = weight.data();
  double* out = output.data();
#pragma omp parallel for schedule(static)
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* dst = out + (oy * ow + ox) * s.out_c;
      for (std::size_t oc = 0; oc < s.out_c; ++oc) {
        double acc = bias[oc];
        const double* wo = w + oc * k * k * ic_n;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t iy = 0;
          if (!tap(oy, ky, s.stride, s.pad, s.in_h, iy)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ix = 0;
            if (!tap(ox, kx, s.stride, s.pad, s.in_w, ix)) continue;
            const double* src = in + (iy * s.in_w + ix) * ic_n;
            const double* wk = wo + (ky * k + kx) * ic_n;
            for (std::size_t ic = 0; ic < ic_n; ++ic) acc += wk[ic] * src[ic];
          }
        }
        dst[oc] = acc;
      }
    }
  }
}

void conv2d_backward_weights(const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weight,
                             std::span<double> grad_bias) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel, ic_n = s.in_c;
  const double* in = input.data();
  const double* go = grad_output.data();
  double* gw = grad_weight.data();
#pragma omp parallel for schedule(static)
  for (std::size_t oc = 0; oc < s.out_c; ++oc) {
    double* gwo = gw + oc * k * k * ic_n;
    std::fill(gwo, gwo + k * k * ic_n, 0.0);
    double gb = 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double g = go[(oy * ow + ox) * s.out_c + oc];
        gb += g;
        // ReLU leaves most upstream gradients at exactly zero.
        if (g == 0.0) continue;
        for (std::size_t ky = 0; ky < k; ++ky) {
          std::size_t iy = 0;
          if (!tap(oy, ky, s.stride, s.pad, s.in_h, iy)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            std::size_t ix = 0;
            if (!tap(ox, kx, s.stride, s.pad, s.in_w, ix)) continue;
            const double* src = in + (iy * s.in_w + ix) * ic_n;
            double* dst = gwo + (ky * k + kx) * ic_n;
            for (std::size_t ic = 0; ic < ic_n; ++ic) dst[ic] += g * src[ic];
          }
        }
      }
    }
    grad_bias[oc] = gb;
  }
}

void conv2d_backward_input(const ConvShape& s, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), k = s.kernel, ic_n = s.in_c;
  const double* w = weight.data();
  const double* go = grad_output.data();
  double* gi = grad_input.data();
#pragma omp parallel for schedule(static)
  for (std::size_t iy = 0; iy < s.in_h; ++iy) {
    for (std::size_t ix = 0; ix < s.in_w; ++ix) {
      double* dst = gi + (iy * s.in_w + ix) * ic_n;
      std::fill(dst, dst + ic_n, 0.0);
      // Descending kernel taps visit (oy, ox) in ascending order, which is
      // the serial kernel's accumulation order.
      for (std::size_t ky = k; ky-- > 0;) {
        const std::size_t py = iy + s.pad;
        if (py < ky || (py - ky) % s.stride != 0) continue;
        const std::size_t oy = (py - ky) / s.stride;
        if (oy >= oh) continue;
        for (std::size_t kx = k; kx-- > 0;) {
          const std::size_t px = ix + s.pad;
          if (px < kx || (px - kx) % s.stride != 0) continue;
          const std::size_t ox = (px - kx) / s.stride;
          if (ox >= ow) continue;
          const double* g = go + (oy * ow + ox) * s.out_c;
          for (std::size_t oc = 0; oc < s.out_c; ++oc) {
            const double* wk = w + ((oc * k + ky) * k + kx) * ic_n;
            for (std::size_t ic = 0; ic < ic_n; ++ic) dst[ic] += g[oc] * wk[ic];
          }
        }
      }
    }
  }
}

void weighted_sum(std::span<const std::span<const float>> sources, std::span<const double> weights,
                  std::span<float> out) {
  const std::size_t n = out.size(), m = sources.size();
  float* dst = out.data();
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < n; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += weights[i] * static_cast<double>(sources[i][p]);
    dst[p] = static_cast<float>(acc);
  }
}

}  // namespace omp

void conv2d_forward(Exec exec, const ConvShape& s, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias, std::span<double> output) {
  if (exec == Exec::serial) serial::conv2d_forward(s, input, weight, bias, output);
  else omp::conv2d_forward(s, input, weight, bias, output);
}

void conv2d_backward_weights(Exec exec, const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_weight,
                             std::span<double> grad_bias) {
  if (exec == Exec::serial) serial::conv2d_backward_weights(s, input, grad_output, grad_weight, grad_bias);
  else omp::conv2d_backward_weights(s, input, grad_output, grad_weight, grad_bias);
}

void conv2d_backward_input(Exec exec, const ConvShape& s, std::span<const double> weight,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  if (exec == Exec::serial) serial::conv2d_backward_input(s, weight, grad_output, grad_input);
  else omp::conv2d_backward_input(s, weight, grad_output, grad_input);
}

void weighted_sum(Exec exec, std::span<const std::span<const float>> sources,
                  std::span<const double> weights, std::span<float> out) {
  if (exec == Exec::serial) serial::weighted_sum(sources, weights, out);
  else omp::weighted_sum(sources, weights, out);
}

}  // namespace mos::kernels
