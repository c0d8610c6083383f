#include "splitseg/model.hpp"

#include <cmath>
#include <string>

namespace splitseg {

namespace {

void init_tensor(Tensor& t, uint64_t seed, const std::string& name, double bound) {
    ParamRng rng(seed, name);
    for (float& v : t.values()) v = rng.next_symmetric(bound);
}

void init_conv(ConvSpec& spec, uint64_t seed, const std::string& name) {
    const int fan_in = (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    init_tensor(spec.weights, seed, name + ".weight", bound);
    init_tensor(spec.bias, seed, name + ".bias", bound);
}

ProjectionWeights make_projection(int dim, uint64_t seed, const std::string& name) {
    ProjectionWeights p;
    p.conv = ConvSpec::conv(1, dim, dim);
    init_conv(p.conv, seed, name + ".conv");
    p.bn = BatchNormSpec::identity(dim);
    return p;
}

SelfAttentionWeights make_self_attention(int dim, uint64_t seed, const std::string& name) {
    SelfAttentionWeights w;
    w.query = make_projection(dim, seed, name + ".q");
    w.key = make_projection(dim, seed, name + ".k");
    w.value = make_projection(dim, seed, name + ".v");
    w.out = make_projection(dim, seed, name + ".out");
    return w;
}

CrossAttentionWeights make_cross_attention(int dim, int classes, uint64_t seed,
                                           const std::string& name) {
    CrossAttentionWeights w;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    w.w_query = Tensor({dim, dim});
    w.b_query = Tensor({dim});
    w.w_key = Tensor({dim, dim});
    w.b_key = Tensor({dim});
    init_tensor(w.w_query, seed, name + ".wq.weight", bound);
    init_tensor(w.b_query, seed, name + ".wq.bias", bound);
    init_tensor(w.w_key, seed, name + ".wk.weight", bound);
    init_tensor(w.b_key, seed, name + ".wk.bias", bound);
    w.tokens.tokens = Tensor({classes, dim});
    init_tensor(w.tokens.tokens, seed, name + ".tokens", bound);
    return w;
}

}  // namespace

std::string variant_name(DecoderVariant v) {
    return v == DecoderVariant::baseline_d ? "d" : "jd";
}

DecoderVariant variant_from_name(std::string_view name) {
    if (name == "d" || name == "baseline-d" || name == "baseline") return DecoderVariant::baseline_d;
    if (name == "jd" || name == "joint-jd" || name == "joint") return DecoderVariant::joint_jd;
    throw ShapeError("unknown decoder variant '" + std::string(name) + "'");
}

void DecoderConfig::validate() const {
    if (classes < 1) throw ShapeError("config: classes must be >= 1");
    if (dim < 1) throw ShapeError("config: dim must be >= 1");
    if (stride < 1) throw ShapeError("config: stride must be >= 1");
    if (variant == DecoderVariant::baseline_d) {
        if (dim != 256 || downsample != 4) {
            throw ShapeError("config: baseline-d requires d=256, k=4 (got d=" +
                             std::to_string(dim) + ", k=" + std::to_string(downsample) + ")");
        }
    } else {
        if (downsample != 8) {
            throw ShapeError("config: joint-jd requires k=8 (got k=" + std::to_string(downsample) +
                             ")");
        }
    }
    if (codec_channels > 0 && codec_channels != dim) {
        throw ShapeError("config: codec_channels " + std::to_string(codec_channels) +
                         " must equal dim " + std::to_string(dim) +
                         " (the decoder reads the codec grid directly)");
    }
    if (groups > 0 && feature_channels() % groups != 0) {
        throw ShapeError("config: groups " + std::to_string(groups) +
                         " does not divide channel count " + std::to_string(feature_channels()));
    }
}

DecoderConfig DecoderConfig::baseline(int classes) {
    DecoderConfig c;
    c.variant = DecoderVariant::baseline_d;
    c.dim = 256;
    c.downsample = 4;
    c.classes = classes;
    return c;
}

DecoderConfig DecoderConfig::joint(int dim, int classes) {
    DecoderConfig c;
    c.variant = DecoderVariant::joint_jd;
    c.dim = dim;
    c.downsample = 8;
    c.classes = classes;
    return c;
}

SegModel build_model(const DecoderConfig& config, uint64_t seed) {
    config.validate();
    SegModel m;
    m.config = config;
    const int d = config.dim;

    m.mining.stage1 = make_self_attention(d, seed, "dec.cm.stage1");
    m.mining.stage2 = make_self_attention(d, seed, "dec.cm.stage2");
    m.mining.skip = ConvSpec::conv(1, d, d);
    init_conv(m.mining.skip, seed, "dec.cm.skip");
    m.mining.cross = make_cross_attention(d, config.classes, seed, "dec.cm.cross");

    if (config.variant == DecoderVariant::joint_jd) {
        m.has_upconv = true;
        m.upconv = ConvSpec::up_conv(5, d, d, config.conv_groups(d), config.stride);
        init_conv(m.upconv, seed, "dec.up");
        m.upconv_bn = BatchNormSpec::identity(d);
    }

    m.head = ConvSpec::conv(1, d, config.classes);
    init_conv(m.head, seed, "dec.head");
    m.upsample_factor = 4;
    return m;
}

SegResult segment(const SegModel& model, const Tensor& features) {
    if (features.rank() != 3 || features.dim(0) != model.config.dim) {
        throw ShapeError("segment: features must be d x H/k x W/k with d = " +
                         std::to_string(model.config.dim));
    }

    Tensor n = context_mining(features, model.mining);
    if (model.has_upconv) {
        n = batchnorm_relu(conv_transpose2d(n, model.upconv), model.upconv_bn);
    }
    Tensor logits = conv2d(n, model.head);
    logits = upsample_bilinear(logits, model.upsample_factor, model.upsample_factor);

    // Channel softmax: per-pixel probabilities summing to one.
    const int s = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    SegResult result;
    result.probabilities = Tensor({s, h, w});
    result.map.height = h;
    result.map.width = w;
    result.map.labels.resize(static_cast<std::size_t>(h) * w);
    std::vector<double> e(static_cast<std::size_t>(s));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float mx = logits.at(0, y, x);
            int arg = 0;
            for (int c = 1; c < s; ++c) {
                const float v = logits.at(c, y, x);
                if (v > mx) {
                    mx = v;
                    arg = c;
                }
            }
            double sum = 0.0;
            for (int c = 0; c < s; ++c) {
                e[c] = std::exp(static_cast<double>(logits.at(c, y, x)) - static_cast<double>(mx));
                sum += e[c];
            }
            for (int c = 0; c < s; ++c) {
                result.probabilities.at(c, y, x) = static_cast<float>(e[c] / sum);
            }
            result.map.labels[static_cast<std::size_t>(y) * w + x] =
                static_cast<uint16_t>(arg + 1);
        }
    }
    return result;
}

Tensor feature_encode(const Tensor& z, const FeatureCodecWeights& w) {
    Tensor t = batchnorm_relu(conv2d(z, w.fe_dwconv), w.fe_bn1);
    return batchnorm_relu(conv2d(t, w.fe_conv), w.fe_bn2);
}

Tensor feature_decode(const Tensor& r_hat, const FeatureCodecWeights& w) {
    Tensor t = batchnorm_relu(conv_transpose2d(r_hat, w.fd_upconv), w.fd_bn1);
    return batchnorm_relu(conv_transpose2d(t, w.fd_dwupconv), w.fd_bn2);
}

Tensor hyper_encode(const Tensor& r, const HyperWeights& w) {
    Tensor t = batchnorm_relu(conv2d(r, w.he_conv1), w.he_bn1);
    return batchnorm_relu(conv2d(t, w.he_conv2), w.he_bn2);
}

Tensor hyper_decode_raw(const Tensor& h_hat, const HyperWeights& w) {
    Tensor t = batchnorm_relu(conv_transpose2d(h_hat, w.hd_upconv1), w.hd_bn1);
    return batchnorm_relu(conv_transpose2d(t, w.hd_upconv2), w.hd_bn2);
}

Tensor stub_encode(const Tensor& image, const StubEncoderWeights& w) {
    Tensor t = batchnorm_relu(conv2d(image, w.conv1), w.bn1);
    t = batchnorm_relu(conv2d(t, w.conv2), w.bn2);
    return conv2d(t, w.conv3);
}

StubEncoderWeights build_stub_encoder(int image_channels, int feature_channels, uint64_t seed) {
    StubEncoderWeights w;
    w.conv1 = ConvSpec::conv(3, image_channels, feature_channels, 1, 2);
    init_conv(w.conv1, seed, "stub.conv1");
    w.bn1 = BatchNormSpec::identity(feature_channels);
    w.conv2 = ConvSpec::conv(3, feature_channels, feature_channels, 1, 2);
    init_conv(w.conv2, seed, "stub.conv2");
    w.bn2 = BatchNormSpec::identity(feature_channels);
    w.conv3 = ConvSpec::conv(1, feature_channels, feature_channels);
    init_conv(w.conv3, seed, "stub.conv3");
    return w;
}

FeatureCodecWeights build_feature_codec(const DecoderConfig& config, uint64_t seed) {
    const int f = config.feature_channels();
    const int g = config.conv_groups(f);
    FeatureCodecWeights w;
    w.fe_dwconv = ConvSpec::conv(3, f, f, g, config.stride);
    init_conv(w.fe_dwconv, seed, "fe.dwconv");
    w.fe_bn1 = BatchNormSpec::identity(f);
    w.fe_conv = ConvSpec::conv(1, f, f);
    init_conv(w.fe_conv, seed, "fe.conv");
    w.fe_bn2 = BatchNormSpec::identity(f);

    w.fd_upconv = ConvSpec::up_conv(1, f, f);
    init_conv(w.fd_upconv, seed, "fd.upconv");
    w.fd_bn1 = BatchNormSpec::identity(f);
    w.fd_dwupconv = ConvSpec::up_conv(3, f, f, g, config.stride);
    init_conv(w.fd_dwupconv, seed, "fd.dwupconv");
    w.fd_bn2 = BatchNormSpec::identity(f);
    return w;
}

HyperWeights build_hyper(const DecoderConfig& config, uint64_t seed) {
    const int f = config.feature_channels();
    HyperWeights w;
    w.he_conv1 = ConvSpec::conv(3, f, f, 1, config.stride);
    init_conv(w.he_conv1, seed, "he.conv1");
    w.he_bn1 = BatchNormSpec::identity(f);
    w.he_conv2 = ConvSpec::conv(1, f, f);
    init_conv(w.he_conv2, seed, "he.conv2");
    w.he_bn2 = BatchNormSpec::identity(f);

    w.hd_upconv1 = ConvSpec::up_conv(1, f, f);
    init_conv(w.hd_upconv1, seed, "hd.upconv1");
    w.hd_bn1 = BatchNormSpec::identity(f);
    w.hd_upconv2 = ConvSpec::up_conv(3, f, f, 1, config.stride);
    init_conv(w.hd_upconv2, seed, "hd.upconv2");
    w.hd_bn2 = BatchNormSpec::identity(f);
    return w;
}

Pipeline build_pipeline(const DecoderConfig& config, uint64_t seed) {
    config.validate();
    Pipeline p;
    p.config = config;
    const int f = config.feature_channels();
    p.stub = build_stub_encoder(3, f, seed);
    p.feature = build_feature_codec(config, seed);
    p.hyper = build_hyper(config, seed);
    p.decoder = build_model(config, seed);

    // Per-channel Laplacian scales for the factorized model, log-spaced-ish
    // via the seeded stream; stored in the weight container like any tensor.
    p.factorized_scales = Tensor({f});
    ParamRng rng(seed, "codec.factorized.scales");
    for (float& v : p.factorized_scales.values()) {
        const double u = rng.next_unit();
        v = static_cast<float>(std::exp(std::log(0.4) + u * (std::log(2.5) - std::log(0.4))));
    }
    return p;
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

ParamRng::ParamRng(uint64_t seed, std::string_view name)
    : state_(seed ^ fnv1a64(name)) {}

double ParamRng::next_unit() {
    // splitmix64
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
}

float ParamRng::next_symmetric(double bound) {
    return static_cast<float>((2.0 * next_unit() - 1.0) * bound);
}

}  // namespace splitseg
