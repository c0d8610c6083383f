#pragma once

#include "splitseg/tensor.hpp"

namespace splitseg {

/// Convolution descriptor covering plain, grouped/depthwise, strided and
/// transposed variants.
///
/// Weight layout:
///   normal:     (out_channels, in_channels / groups, kernel, kernel)
///   transposed: (in_channels, out_channels / groups, kernel, kernel)
///
/// Transposed convs use output_padding = stride - 1, so with "same" padding
/// a stride-2 up-conv exactly doubles each spatial dim.
struct ConvSpec {
    int kernel = 1;
    int in_channels = 0;
    int out_channels = 0;
    int groups = 1;
    int stride = 1;
    bool transposed = false;
    int padding = 0;
    Tensor weights;
    Tensor bias;  // length out_channels; empty = no bias

    /// Zero-initialized spec with "same" padding (kernel / 2).
    static ConvSpec conv(int kernel, int in_channels, int out_channels, int groups = 1,
                         int stride = 1);
    static ConvSpec up_conv(int kernel, int in_channels, int out_channels, int groups = 1,
                            int stride = 1);

    void validate(const Tensor& input) const;
};

/// Inference-form batch normalization followed by ReLU.
struct BatchNormSpec {
    Tensor mean;
    Tensor variance;
    Tensor gamma;
    Tensor beta;
    float epsilon = 1e-5f;

    static BatchNormSpec identity(int channels);
    void validate(int channels) const;
};

Tensor conv2d(const Tensor& input, const ConvSpec& spec);
Tensor conv_transpose2d(const Tensor& input, const ConvSpec& spec);

/// out = max(0, gamma * (x - mean) / sqrt(var + eps) + beta), per channel.
Tensor batchnorm_relu(const Tensor& input, const BatchNormSpec& spec);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Row softmax, stabilized by row-max subtraction. Rows sum to 1.
Tensor softmax_rows(const Tensor& a);

/// Bilinear upsampling, corner-unaligned convention.
Tensor upsample_bilinear(const Tensor& input, int factor_y, int factor_x);

/// Elementwise round half away from zero.
QTensor quantize(const Tensor& t);

/// d x h x w  ->  (h*w) x d token matrix, height-major flattening.
Tensor tokens_from_map(const Tensor& fmap);
/// Inverse of tokens_from_map.
Tensor map_from_tokens(const Tensor& tokens, int channels, int height, int width);

}  // namespace splitseg
