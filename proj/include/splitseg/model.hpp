#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "splitseg/attention.hpp"

namespace splitseg {

enum class DecoderVariant { baseline_d, joint_jd };

std::string variant_name(DecoderVariant v);
DecoderVariant variant_from_name(std::string_view name);

/// Architecture hyperparameters shared by the decoders and the codec stacks.
/// codec_channels == 0 means "equal to dim": the decoders operate directly on
/// the codec's feature grid, so the two counts cannot diverge.
struct DecoderConfig {
    DecoderVariant variant = DecoderVariant::joint_jd;
    int dim = 48;             // d
    int downsample = 8;       // k
    int codec_channels = 0;   // F, 0 -> dim
    int groups = 0;           // G for DW layers, 0 -> channel count (depthwise)
    int classes = 150;        // S
    int stride = 2;           // rho

    int feature_channels() const { return codec_channels > 0 ? codec_channels : dim; }
    int conv_groups(int channels) const { return groups > 0 ? groups : channels; }
    void validate() const;

    static DecoderConfig baseline(int classes);
    static DecoderConfig joint(int dim, int classes);
};

/// Segmentation map with 1-based class labels.
struct SegMap {
    int height = 0;
    int width = 0;
    std::vector<uint16_t> labels;  // row-major, entries in {1..S}

    uint16_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    bool operator==(const SegMap& other) const {
        return height == other.height && width == other.width && labels == other.labels;
    }
};

/// Full decoding head. The JD variant carries the grouped transposed conv
/// stage; the baseline D goes straight from context mining to the head.
struct SegModel {
    DecoderConfig config;
    ContextMiningWeights mining;
    bool has_upconv = false;
    ConvSpec upconv;           // DWUpConv(5x5, d, G, rho=2), JD only
    BatchNormSpec upconv_bn;
    ConvSpec head;             // Conv(1x1, S)
    int upsample_factor = 4;
};

struct SegResult {
    Tensor probabilities;  // S x H x W, channel softmax applied
    SegMap map;
};

SegModel build_model(const DecoderConfig& config, uint64_t seed);

/// Runs the decoding head on features shaped d x H/k x W/k. Logits are
/// softmax-normalized over the class axis; argmax ties break toward the
/// lowest class index.
SegResult segment(const SegModel& model, const Tensor& features);

/// FE: DWConv(3x3,F,G,rho=2) -> BN+ReLU -> Conv(1x1,F) -> BN+ReLU
/// FD: UpConv(1x1,F) -> BN+ReLU -> DWUpConv(3x3,F,G,rho=2) -> BN+ReLU
struct FeatureCodecWeights {
    ConvSpec fe_dwconv;
    BatchNormSpec fe_bn1;
    ConvSpec fe_conv;
    BatchNormSpec fe_bn2;
    ConvSpec fd_upconv;
    BatchNormSpec fd_bn1;
    ConvSpec fd_dwupconv;
    BatchNormSpec fd_bn2;
};

Tensor feature_encode(const Tensor& z, const FeatureCodecWeights& w);
Tensor feature_decode(const Tensor& r_hat, const FeatureCodecWeights& w);

/// HE: Conv(3x3,F,rho=2) -> BN+ReLU -> Conv(1x1,F) -> BN+ReLU
/// HD: UpConv(1x1,F) -> BN+ReLU -> UpConv(3x3,F,rho=2) -> BN+ReLU
struct HyperWeights {
    ConvSpec he_conv1;
    BatchNormSpec he_bn1;
    ConvSpec he_conv2;
    BatchNormSpec he_bn2;
    ConvSpec hd_upconv1;
    BatchNormSpec hd_bn1;
    ConvSpec hd_upconv2;
    BatchNormSpec hd_bn2;
};

Tensor hyper_encode(const Tensor& r, const HyperWeights& w);
/// HD forward without the sigma floor; the codec clamps afterwards.
Tensor hyper_decode_raw(const Tensor& h_hat, const HyperWeights& w);

/// Stand-in for the image encoder E: three strided convs taking C x H x W
/// to F x H/4 x W/4.
struct StubEncoderWeights {
    ConvSpec conv1;
    BatchNormSpec bn1;
    ConvSpec conv2;
    BatchNormSpec bn2;
    ConvSpec conv3;
};

Tensor stub_encode(const Tensor& image, const StubEncoderWeights& w);

StubEncoderWeights build_stub_encoder(int image_channels, int feature_channels, uint64_t seed);
FeatureCodecWeights build_feature_codec(const DecoderConfig& config, uint64_t seed);
HyperWeights build_hyper(const DecoderConfig& config, uint64_t seed);

/// Everything one deployment needs: encoder stub, feature codec, hyperprior
/// stacks, decoding head, and the factorized-model channel scales.
struct Pipeline {
    DecoderConfig config;
    StubEncoderWeights stub;
    FeatureCodecWeights feature;
    HyperWeights hyper;
    SegModel decoder;
    Tensor factorized_scales;  // per hyper channel
};

Pipeline build_pipeline(const DecoderConfig& config, uint64_t seed);

/// Deterministic per-parameter random stream: splitmix64 keyed by seed and
/// parameter name, so init does not depend on construction order.
class ParamRng {
public:
    ParamRng(uint64_t seed, std::string_view name);
    double next_unit();                    // [0, 1)
    float next_symmetric(double bound);    // [-bound, bound]

private:
    uint64_t state_;
};

uint64_t fnv1a64(std::string_view s);

}  // namespace splitseg
