#include "splitseg/ops.hpp"

#include <cmath>
#include <string>

namespace splitseg {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

void require_rank3(const Tensor& t, const char* who) {
    require(t.rank() == 3, std::string(who) + ": expected rank-3 input, got rank " +
                               std::to_string(t.rank()));
}

}  // namespace

ConvSpec ConvSpec::conv(int kernel, int in_channels, int out_channels, int groups, int stride) {
    ConvSpec s;
    s.kernel = kernel;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.groups = groups;
    s.stride = stride;
    s.padding = kernel / 2;
    s.weights = Tensor({out_channels, in_channels / groups, kernel, kernel});
    s.bias = Tensor({out_channels});
    return s;
}

ConvSpec ConvSpec::up_conv(int kernel, int in_channels, int out_channels, int groups, int stride) {
    ConvSpec s;
    s.kernel = kernel;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.groups = groups;
    s.stride = stride;
    s.transposed = true;
    s.padding = kernel / 2;
    s.weights = Tensor({in_channels, out_channels / groups, kernel, kernel});
    s.bias = Tensor({out_channels});
    return s;
}

void ConvSpec::validate(const Tensor& input) const {
    require_rank3(input, transposed ? "conv_transpose2d" : "conv2d");
    const char* who = transposed ? "conv_transpose2d" : "conv2d";
    require(groups >= 1, std::string(who) + ": groups must be >= 1");
    require(in_channels % groups == 0,
            std::string(who) + ": in_channels " + std::to_string(in_channels) +
                " not divisible by groups " + std::to_string(groups));
    require(out_channels % groups == 0,
            std::string(who) + ": out_channels " + std::to_string(out_channels) +
                " not divisible by groups " + std::to_string(groups));
    require(input.dim(0) == in_channels,
            std::string(who) + ": input channel axis is " + std::to_string(input.dim(0)) +
                ", spec expects " + std::to_string(in_channels));
    std::vector<int> expect = transposed
                                  ? std::vector<int>{in_channels, out_channels / groups, kernel, kernel}
                                  : std::vector<int>{out_channels, in_channels / groups, kernel, kernel};
    require(weights.shape() == expect, std::string(who) + ": weight shape " +
                                           shape_to_string(weights.shape()) + " != expected " +
                                           shape_to_string(expect));
    if (!bias.empty()) {
        require(bias.shape() == std::vector<int>{out_channels},
                std::string(who) + ": bias length " + std::to_string(bias.size()) +
                    " != out_channels " + std::to_string(out_channels));
    }
    if (!transposed) {
        require(input.dim(1) + 2 * padding >= kernel,
                std::string(who) + ": height " + std::to_string(input.dim(1)) +
                    " too small for kernel " + std::to_string(kernel));
        require(input.dim(2) + 2 * padding >= kernel,
                std::string(who) + ": width " + std::to_string(input.dim(2)) +
                    " too small for kernel " + std::to_string(kernel));
    }
}

Tensor conv2d(const Tensor& input, const ConvSpec& spec) {
    require(!spec.transposed, "conv2d: spec is transposed; use conv_transpose2d");
    spec.validate(input);

    const int in_h = input.dim(1), in_w = input.dim(2);
    const int out_h = (in_h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    const int out_w = (in_w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
    const int group_in = spec.in_channels / spec.groups;
    const int group_out = spec.out_channels / spec.groups;

    Tensor out({spec.out_channels, out_h, out_w});
    const float* w = spec.weights.data();
    for (int oc = 0; oc < spec.out_channels; ++oc) {
        const int g = oc / group_out;
        const float b = spec.bias.empty() ? 0.0f : spec.bias.data()[oc];
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = b;
                for (int ic = 0; ic < group_in; ++ic) {
                    const int c = g * group_in + ic;
                    for (int ky = 0; ky < spec.kernel; ++ky) {
                        const int iy = oy * spec.stride - spec.padding + ky;
                        if (iy < 0 || iy >= in_h) continue;
                        for (int kx = 0; kx < spec.kernel; ++kx) {
                            const int ix = ox * spec.stride - spec.padding + kx;
                            if (ix < 0 || ix >= in_w) continue;
                            const std::size_t widx =
                                ((static_cast<std::size_t>(oc) * group_in + ic) * spec.kernel + ky) *
                                    spec.kernel +
                                kx;
                            acc += static_cast<double>(input.at(c, iy, ix)) * w[widx];
                        }
                    }
                }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

Tensor conv_transpose2d(const Tensor& input, const ConvSpec& spec) {
    require(spec.transposed, "conv_transpose2d: spec is not transposed");
    spec.validate(input);

    const int in_h = input.dim(1), in_w = input.dim(2);
    const int out_pad = spec.stride - 1;
    const int out_h = (in_h - 1) * spec.stride - 2 * spec.padding + spec.kernel + out_pad;
    const int out_w = (in_w - 1) * spec.stride - 2 * spec.padding + spec.kernel + out_pad;
    require(out_h > 0 && out_w > 0, "conv_transpose2d: empty output grid");
    const int group_in = spec.in_channels / spec.groups;
    const int group_out = spec.out_channels / spec.groups;

    // Scatter-add in double, then store as float per output element.
    std::vector<double> acc(static_cast<std::size_t>(spec.out_channels) * out_h * out_w, 0.0);
    const float* w = spec.weights.data();
    for (int ic = 0; ic < spec.in_channels; ++ic) {
        const int g = ic / group_in;
        for (int iy = 0; iy < in_h; ++iy) {
            for (int ix = 0; ix < in_w; ++ix) {
                const double v = input.at(ic, iy, ix);
                for (int oc = 0; oc < group_out; ++oc) {
                    const int c = g * group_out + oc;
                    for (int ky = 0; ky < spec.kernel; ++ky) {
                        const int oy = iy * spec.stride - spec.padding + ky;
                        if (oy < 0 || oy >= out_h) continue;
                        for (int kx = 0; kx < spec.kernel; ++kx) {
                            const int ox = ix * spec.stride - spec.padding + kx;
                            if (ox < 0 || ox >= out_w) continue;
                            const std::size_t widx =
                                ((static_cast<std::size_t>(ic) * group_out + oc) * spec.kernel + ky) *
                                    spec.kernel +
                                kx;
                            acc[(static_cast<std::size_t>(c) * out_h + oy) * out_w + ox] +=
                                v * w[widx];
                        }
                    }
                }
            }
        }
    }

    Tensor out({spec.out_channels, out_h, out_w});
    float* o = out.data();
    for (int c = 0; c < spec.out_channels; ++c) {
        const double b = spec.bias.empty() ? 0.0 : spec.bias.data()[c];
        const std::size_t base = static_cast<std::size_t>(c) * out_h * out_w;
        for (std::size_t i = 0; i < static_cast<std::size_t>(out_h) * out_w; ++i) {
            o[base + i] = static_cast<float>(acc[base + i] + b);
        }
    }
    return out;
}

BatchNormSpec BatchNormSpec::identity(int channels) {
    BatchNormSpec s;
    s.mean = Tensor({channels});
    s.variance = Tensor::full({channels}, 1.0f);
    s.gamma = Tensor::full({channels}, 1.0f);
    s.beta = Tensor({channels});
    return s;
}

void BatchNormSpec::validate(int channels) const {
    const std::vector<int> expect{channels};
    if (mean.shape() != expect || variance.shape() != expect || gamma.shape() != expect ||
        beta.shape() != expect) {
        throw ShapeError("batchnorm_relu: per-channel stats do not match channel count " +
                         std::to_string(channels));
    }
    if (epsilon <= 0.0f) throw ShapeError("batchnorm_relu: epsilon must be > 0");
    for (std::size_t i = 0; i < variance.size(); ++i) {
        if (variance.data()[i] < 0.0f) throw ShapeError("batchnorm_relu: negative variance");
    }
}

Tensor batchnorm_relu(const Tensor& input, const BatchNormSpec& spec) {
    require_rank3(input, "batchnorm_relu");
    const int channels = input.dim(0);
    spec.validate(channels);

    Tensor out(input.shape());
    const std::size_t plane = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
    for (int c = 0; c < channels; ++c) {
        const double scale =
            spec.gamma.data()[c] / std::sqrt(static_cast<double>(spec.variance.data()[c]) +
                                             static_cast<double>(spec.epsilon));
        const double mean = spec.mean.data()[c];
        const double shift = spec.beta.data()[c];
        const float* in = input.data() + static_cast<std::size_t>(c) * plane;
        float* o = out.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double v = (static_cast<double>(in[i]) - mean) * scale + shift;
            o[i] = v > 0.0 ? static_cast<float>(v) : 0.0f;
        }
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul: expected rank-2 operands");
    require(a.dim(1) == b.dim(0), "matmul: inner dims differ, " + std::to_string(a.dim(1)) +
                                      " vs " + std::to_string(b.dim(0)));
    const int rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
    Tensor out({rows, cols});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int k = 0; k < inner; ++k) {
                acc += static_cast<double>(a.at(r, k)) * static_cast<double>(b.at(k, c));
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    require(a.rank() == 2, "softmax_rows: expected rank-2 input");
    const int rows = a.dim(0), cols = a.dim(1);
    require(cols > 0, "softmax_rows: empty rows");
    Tensor out({rows, cols});
    std::vector<double> e(static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        float mx = a.at(r, 0);
        for (int c = 1; c < cols; ++c) mx = std::max(mx, a.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            e[c] = std::exp(static_cast<double>(a.at(r, c)) - static_cast<double>(mx));
            sum += e[c];
        }
        for (int c = 0; c < cols; ++c) out.at(r, c) = static_cast<float>(e[c] / sum);
    }
    return out;
}

Tensor upsample_bilinear(const Tensor& input, int factor_y, int factor_x) {
    require_rank3(input, "upsample_bilinear");
    require(factor_y >= 1 && factor_x >= 1, "upsample_bilinear: factors must be >= 1");
    const int channels = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const int out_h = in_h * factor_y, out_w = in_w * factor_x;
    Tensor out({channels, out_h, out_w});
    const double sy = 1.0 / factor_y, sx = 1.0 / factor_x;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        if (fy < 0.0) fy = 0.0;
        int y0 = static_cast<int>(fy);
        if (y0 > in_h - 1) y0 = in_h - 1;
        const int y1 = std::min(y0 + 1, in_h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            if (fx < 0.0) fx = 0.0;
            int x0 = static_cast<int>(fx);
            if (x0 > in_w - 1) x0 = in_w - 1;
            const int x1 = std::min(x0 + 1, in_w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < channels; ++c) {
                const double top = (1.0 - wx) * input.at(c, y0, x0) + wx * input.at(c, y0, x1);
                const double bot = (1.0 - wx) * input.at(c, y1, x0) + wx * input.at(c, y1, x1);
                out.at(c, oy, ox) = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

QTensor quantize(const Tensor& t) {
    QTensor q;
    q.shape = t.shape();
    q.values.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        q.values[i] = static_cast<int32_t>(std::lround(t.data()[i]));
    }
    return q;
}

Tensor tokens_from_map(const Tensor& fmap) {
    require_rank3(fmap, "tokens_from_map");
    const int d = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2);
    Tensor tokens({h * w, d});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int t = y * w + x;
            for (int c = 0; c < d; ++c) tokens.at(t, c) = fmap.at(c, y, x);
        }
    }
    return tokens;
}

Tensor map_from_tokens(const Tensor& tokens, int channels, int height, int width) {
    require(tokens.rank() == 2, "map_from_tokens: expected rank-2 tokens");
    require(tokens.dim(0) == height * width,
            "map_from_tokens: token count " + std::to_string(tokens.dim(0)) + " != " +
                std::to_string(height) + "*" + std::to_string(width));
    require(tokens.dim(1) == channels, "map_from_tokens: token dim " +
                                           std::to_string(tokens.dim(1)) + " != channels " +
                                           std::to_string(channels));
    Tensor fmap({channels, height, width});
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const int t = y * width + x;
            for (int c = 0; c < channels; ++c) fmap.at(c, y, x) = tokens.at(t, c);
        }
    }
    return fmap;
}

}  // namespace splitseg
