#include "stereo/nn.hpp"

namespace stereo {

namespace detail {
Tensor conv_nd3(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                const Tensor& bias, bool count_as_2d);
}

// 2D convolution rides the 3D kernels with a depth-1 axis.
Tensor conv2d(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
              const Tensor& bias) {
  spec.validate();
  if (spec.rank() != 2) fail_config("conv2d requires a rank-2 spec");
  if (input.ndim() != 4)
    fail_shape("conv2d input must be [N,C,H,W], got " + shape_str(input.shape()));
  if (weights.shape() != spec.weight_shape())
    fail_shape("conv2d weight shape " + shape_str(weights.shape()) + " != expected " +
               shape_str(spec.weight_shape()));

  ConvSpec s3 = spec;
  s3.kernel.insert(s3.kernel.begin(), 1);
  s3.stride.insert(s3.stride.begin(), 1);
  s3.dilation.insert(s3.dilation.begin(), 1);
  s3.padding.insert(s3.padding.begin(), 0);
  if (s3.transposed) s3.output_padding.insert(s3.output_padding.begin(), 0);

  Tensor in5 = reshape(input, {input.dim(0), input.dim(1), 1, input.dim(2), input.dim(3)});
  std::vector<int> w5 = weights.shape();
  w5.insert(w5.begin() + 2, 1);
  Tensor out5 = detail::conv_nd3(in5, s3, reshape(weights, w5), bias, /*count_as_2d=*/true);
  return reshape(out5, {out5.dim(0), out5.dim(1), out5.dim(3), out5.dim(4)});
}

}  // namespace stereo
