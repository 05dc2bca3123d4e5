#pragma once

#include "stereo/tensor.hpp"

namespace stereo {

// Convolution geometry. For stride-1 odd kernels the named constructors pick
// "same" padding dilation*(k-1)/2 so spatial extents are preserved.
struct ConvSpec {
  std::vector<int> kernel;          // per spatial axis
  std::vector<int> stride;
  std::vector<int> dilation;
  std::vector<int> padding;
  std::vector<int> output_padding;  // transposed convs only
  int in_channels = 0;
  int out_channels = 0;
  bool transposed = false;

  int rank() const { return static_cast<int>(kernel.size()); }
  void validate() const;
  // Weight tensor shape: [out,in,k...] for forward convs, [in,out,k...] for
  // transposed ones.
  std::vector<int> weight_shape() const;
  std::vector<int> out_extents(const std::vector<int>& in_extents) const;

  static ConvSpec same2d(int cin, int cout, int k, int stride = 1, int dilation = 1);
  static ConvSpec same3d(int cin, int cout, int k, int stride = 1, int dilation = 1);
  // Stride-s transposed conv that exactly multiplies extents by s (k odd).
  static ConvSpec up3d(int cin, int cout, int k, int stride);
};

Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias = Tensor());
Tensor conv3d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias = Tensor());

// kTrain: batch statistics, running stats updated. kEval: running stats.
// kBatchStats: batch statistics without touching the running stats — the
// inference mode of choice here, because batch-size-1 training makes the
// running averages unrepresentative of any single sample.
enum class BnMode { kTrain, kEval, kBatchStats };

struct BatchNormStats {
  std::vector<real> mean;
  std::vector<real> var;
  bool initialized = false;
  real momentum = real(0.1);
  real eps = real(1e-5);
};

// Channel axis is 1; statistics are taken over every other axis.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, BnMode mode);

// Window-g average pooling with stride g; remainder windows average over the
// valid cells only. Input [N,C,H,W].
Tensor pool_avg_grid(const Tensor& input, int g);
Tensor pool_global_avg(const Tensor& input);

// Align-corners linear resampling.
Tensor interp_bilinear2d(const Tensor& input, int out_h, int out_w);
Tensor interp_trilinear3d(const Tensor& input, int out_d, int out_h, int out_w);

// Analytic multiply-accumulate audit, fed by every conv call when enabled and
// usable standalone for shape-only counting.
struct MacCount {
  i64 conv2d = 0;
  i64 conv3d = 0;
  i64 total() const { return conv2d + conv3d; }
  MacCount& operator+=(const MacCount& o) {
    conv2d += o.conv2d;
    conv3d += o.conv3d;
    return *this;
  }
};
i64 conv_macs(const ConvSpec& spec, const std::vector<int>& in_extents);
void mac_counter_enable(bool on);
void mac_counter_reset();
MacCount mac_counter();

}  // namespace stereo
