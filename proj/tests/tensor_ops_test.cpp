#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "splitseg/ops.hpp"

using namespace splitseg;

namespace {

Tensor random_tensor(std::vector<int> shape, uint32_t seed, float spread = 1.0f) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> dist(-spread, spread);
    Tensor t(std::move(shape));
    for (float& v : t.values()) v = dist(rng);
    return t;
}

// Independent gather-style oracle for plain (non-grouped) convolution.
Tensor conv_oracle(const Tensor& in, const ConvSpec& s) {
    const int out_h = (in.dim(1) + 2 * s.padding - s.kernel) / s.stride + 1;
    const int out_w = (in.dim(2) + 2 * s.padding - s.kernel) / s.stride + 1;
    Tensor out({s.out_channels, out_h, out_w});
    for (int oc = 0; oc < s.out_channels; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = s.bias.empty() ? 0.0 : s.bias.data()[oc];
                for (int ic = 0; ic < s.in_channels; ++ic) {
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            const int iy = oy * s.stride - s.padding + ky;
                            const int ix = ox * s.stride - s.padding + kx;
                            if (iy < 0 || iy >= in.dim(1) || ix < 0 || ix >= in.dim(2)) continue;
                            const float w = s.weights.values()[((static_cast<std::size_t>(oc) *
                                                                     s.in_channels +
                                                                 ic) *
                                                                    s.kernel +
                                                                ky) *
                                                                   s.kernel +
                                                               kx];
                            acc += static_cast<double>(in.at(ic, iy, ix)) * w;
                        }
                    }
                }
                out.at(oc, oy, ox) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("conv2d 1x1 identity weights pass input through") {
    const int c = 5;
    ConvSpec s = ConvSpec::conv(1, c, c);
    for (int i = 0; i < c; ++i) s.weights.values()[i * c + i] = 1.0f;
    const Tensor in = random_tensor({c, 6, 7}, 11);
    const Tensor out = conv2d(in, s);
    CHECK(max_abs_diff(out, in) == 0.0f);
}

TEST_CASE("conv2d zero depthwise kernel with stride 2 halves the grid") {
    ConvSpec s = ConvSpec::conv(3, 4, 4, /*groups=*/4, /*stride=*/2);
    const Tensor in = random_tensor({4, 8, 8}, 12);
    const Tensor out = conv2d(in, s);
    CHECK(out.shape() == std::vector<int>{4, 4, 4});
    for (float v : out.values()) CHECK(v == 0.0f);
}

TEST_CASE("conv2d 1x1 projection matches the naive-loop oracle") {
    ConvSpec s = ConvSpec::conv(1, 4, 6);
    std::mt19937 rng(13);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : s.weights.values()) v = dist(rng);
    for (float& v : s.bias.values()) v = dist(rng);
    const Tensor in = random_tensor({4, 8, 8}, 14);
    CHECK(max_abs_diff(conv2d(in, s), conv_oracle(in, s)) < 1e-5f);
}

TEST_CASE("conv2d strided 3x3 matches the naive-loop oracle") {
    ConvSpec s = ConvSpec::conv(3, 3, 5, 1, 2);
    std::mt19937 rng(15);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : s.weights.values()) v = dist(rng);
    for (float& v : s.bias.values()) v = dist(rng);
    const Tensor in = random_tensor({3, 9, 11}, 16);
    CHECK(max_abs_diff(conv2d(in, s), conv_oracle(in, s)) < 1e-5f);
}

TEST_CASE("grouped conv equals independent convolutions over channel slices") {
    const int groups = 3, in_per = 2, out_per = 2;
    ConvSpec s = ConvSpec::conv(3, groups * in_per, groups * out_per, groups);
    std::mt19937 rng(17);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : s.weights.values()) v = dist(rng);
    for (float& v : s.bias.values()) v = dist(rng);
    const Tensor in = random_tensor({groups * in_per, 6, 6}, 18);
    const Tensor full = conv2d(in, s);

    for (int g = 0; g < groups; ++g) {
        ConvSpec slice = ConvSpec::conv(3, in_per, out_per);
        for (int oc = 0; oc < out_per; ++oc) {
            slice.bias.values()[oc] = s.bias.values()[g * out_per + oc];
            for (std::size_t i = 0; i < static_cast<std::size_t>(in_per) * 9; ++i) {
                slice.weights.values()[oc * in_per * 9 + i] =
                    s.weights.values()[(g * out_per + oc) * in_per * 9 + i];
            }
        }
        Tensor sub({in_per, 6, 6});
        for (int ic = 0; ic < in_per; ++ic) {
            for (int y = 0; y < 6; ++y) {
                for (int x = 0; x < 6; ++x) sub.at(ic, y, x) = in.at(g * in_per + ic, y, x);
            }
        }
        const Tensor part = conv_oracle(sub, slice);
        for (int oc = 0; oc < out_per; ++oc) {
            for (int y = 0; y < 6; ++y) {
                for (int x = 0; x < 6; ++x) {
                    CHECK(full.at(g * out_per + oc, y, x) ==
                          doctest::Approx(part.at(oc, y, x)).epsilon(1e-5));
                }
            }
        }
    }
}

TEST_CASE("conv_transpose2d 1x1 identity at stride 1") {
    const int c = 3;
    ConvSpec s = ConvSpec::up_conv(1, c, c);
    for (int i = 0; i < c; ++i) s.weights.values()[i * c + i] = 1.0f;
    const Tensor in = random_tensor({c, 5, 4}, 19);
    CHECK(max_abs_diff(conv_transpose2d(in, s), in) == 0.0f);
}

TEST_CASE("conv_transpose2d stride 2 doubles spatial dims") {
    ConvSpec s = ConvSpec::up_conv(3, 6, 6, 6, 2);
    const Tensor in = random_tensor({6, 8, 8}, 20);
    CHECK(conv_transpose2d(in, s).shape() == std::vector<int>{6, 16, 16});

    ConvSpec s5 = ConvSpec::up_conv(5, 4, 4, 4, 2);
    const Tensor in5 = random_tensor({4, 7, 9}, 21);
    CHECK(conv_transpose2d(in5, s5).shape() == std::vector<int>{4, 14, 18});
}

TEST_CASE("conv_transpose2d matches the gradient-of-conv scatter oracle") {
    ConvSpec s = ConvSpec::up_conv(3, 2, 3, 1, 2);
    std::mt19937 rng(22);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : s.weights.values()) v = dist(rng);
    for (float& v : s.bias.values()) v = dist(rng);
    const Tensor in = random_tensor({2, 5, 5}, 23);
    const Tensor out = conv_transpose2d(in, s);

    // Gather form: out[oc,oy,ox] = sum over (ic,ky,kx) with iy*stride-pad+ky == oy.
    const int out_h = out.dim(1), out_w = out.dim(2);
    for (int oc = 0; oc < 3; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = s.bias.values()[oc];
                for (int ic = 0; ic < 2; ++ic) {
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ny = oy + s.padding - ky;
                            const int nx = ox + s.padding - kx;
                            if (ny % 2 != 0 || nx % 2 != 0) continue;
                            const int iy = ny / 2, ix = nx / 2;
                            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                            acc += static_cast<double>(in.at(ic, iy, ix)) *
                                   s.weights.values()[((ic * 3 + oc) * 3 + ky) * 3 + kx];
                        }
                    }
                }
                CHECK(out.at(oc, oy, ox) == doctest::Approx(acc).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("batchnorm_relu identity stats pass non-negative input through") {
    const Tensor in = random_tensor({3, 4, 4}, 24, 1.0f);
    Tensor pos(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) pos.data()[i] = std::abs(in.data()[i]);
    const BatchNormSpec bn = BatchNormSpec::identity(3);
    CHECK(max_abs_diff(batchnorm_relu(pos, bn), pos) < 1e-6f);
}

TEST_CASE("batchnorm_relu clamps everything when gamma=0, beta=-1") {
    BatchNormSpec bn = BatchNormSpec::identity(3);
    for (float& v : bn.gamma.values()) v = 0.0f;
    for (float& v : bn.beta.values()) v = -1.0f;
    const Tensor in = random_tensor({3, 5, 5}, 25, 10.0f);
    for (float v : batchnorm_relu(in, bn).values()) CHECK(v == 0.0f);
}

TEST_CASE("batchnorm_relu matches the scalar-formula oracle") {
    std::mt19937 rng(26);
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    BatchNormSpec bn = BatchNormSpec::identity(4);
    for (float& v : bn.mean.values()) v = dist(rng);
    for (float& v : bn.variance.values()) v = std::abs(dist(rng)) + 0.1f;
    for (float& v : bn.gamma.values()) v = dist(rng);
    for (float& v : bn.beta.values()) v = dist(rng);
    const Tensor in = random_tensor({4, 6, 6}, 27, 3.0f);
    const Tensor out = batchnorm_relu(in, bn);
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 6; ++x) {
                const double z = bn.gamma.values()[c] *
                                     (in.at(c, y, x) - bn.mean.values()[c]) /
                                     std::sqrt(static_cast<double>(bn.variance.values()[c]) +
                                               bn.epsilon) +
                                 bn.beta.values()[c];
                const double expect = z > 0.0 ? z : 0.0;
                CHECK(out.at(c, y, x) == doctest::Approx(expect).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("matmul identity, shape law, and hand arithmetic") {
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
    const Tensor a = random_tensor({3, 3}, 28);
    CHECK(max_abs_diff(matmul(eye, a), a) == 0.0f);

    const Tensor q = random_tensor({7, 4}, 29);
    const Tensor kt = random_tensor({4, 7}, 30);
    CHECK(matmul(q, kt).shape() == std::vector<int>{7, 7});

    const Tensor m1({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor m2({3, 3}, {1, 0, 2, 0, 1, 1, 1, 1, 0});
    const Tensor expect({3, 3}, {4, 5, 4, 10, 11, 13, 16, 17, 22});
    CHECK(max_abs_diff(matmul(m1, m2), expect) == 0.0f);
}

TEST_CASE("softmax_rows basics") {
    const Tensor constant({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1});
    const Tensor u = softmax_rows(constant);
    for (float v : u.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));

    const Tensor onehot({1, 2}, {1000.0f, 0.0f});
    const Tensor o = softmax_rows(onehot);
    CHECK(o.at(0, 0) == doctest::Approx(1.0));
    CHECK(o.at(0, 1) == doctest::Approx(0.0));

    const Tensor r = random_tensor({4, 4}, 31, 5.0f);
    const Tensor s = softmax_rows(r);
    for (int row = 0; row < 4; ++row) {
        double sum = 0.0, oracle_sum = 0.0;
        for (int c = 0; c < 4; ++c) oracle_sum += std::exp(static_cast<double>(r.at(row, c)));
        for (int c = 0; c < 4; ++c) {
            sum += s.at(row, c);
            const double direct = std::exp(static_cast<double>(r.at(row, c))) / oracle_sum;
            CHECK(s.at(row, c) == doctest::Approx(direct).epsilon(1e-6));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax_rows is invariant to adding a row constant") {
    const Tensor r = random_tensor({3, 5}, 32, 4.0f);
    Tensor shifted = r;
    for (int row = 0; row < 3; ++row) {
        for (int c = 0; c < 5; ++c) shifted.at(row, c) += 7.5f;
    }
    CHECK(max_abs_diff(softmax_rows(r), softmax_rows(shifted)) < 1e-6f);
}

TEST_CASE("upsample_bilinear keeps constants and scales the grid") {
    const Tensor c = Tensor::full({2, 3, 3}, 1.25f);
    const Tensor up = upsample_bilinear(c, 4, 4);
    CHECK(up.shape() == std::vector<int>{2, 12, 12});
    for (float v : up.values()) CHECK(v == doctest::Approx(1.25f));

    const Tensor tiny = random_tensor({1, 2, 2}, 33);
    CHECK(upsample_bilinear(tiny, 4, 4).shape() == std::vector<int>{1, 8, 8});
}

TEST_CASE("upsample_bilinear reproduces a linear ramp at interior points") {
    Tensor ramp({1, 4, 4});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) ramp.at(0, y, x) = 2.0f + 0.5f * x + 0.25f * y;
    }
    const Tensor up = upsample_bilinear(ramp, 2, 2);
    for (int oy = 0; oy < 8; ++oy) {
        for (int ox = 0; ox < 8; ++ox) {
            const double fy = (oy + 0.5) / 2.0 - 0.5;
            const double fx = (ox + 0.5) / 2.0 - 0.5;
            if (fy < 0.0 || fy > 3.0 || fx < 0.0 || fx > 3.0) continue;  // border clamp zone
            CHECK(up.at(0, oy, ox) ==
                  doctest::Approx(2.0 + 0.5 * fx + 0.25 * fy).epsilon(1e-6));
        }
    }
}

TEST_CASE("quantize rounds half away from zero") {
    const Tensor t({6}, {0.5f, -0.5f, 1.4f, -1.6f, 2.0f, -3.0f});
    const QTensor q = quantize(t);
    CHECK(q.values == std::vector<int32_t>{1, -1, 1, -2, 2, -3});

    const Tensor r = random_tensor({64}, 34, 40.0f);
    const QTensor qr = quantize(r);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(std::abs(r.data()[i] - static_cast<float>(qr.values[i])) <= 0.5f);
    }
}

TEST_CASE("token reshape round-trips height-major") {
    const Tensor fmap = random_tensor({3, 2, 4}, 35);
    const Tensor tokens = tokens_from_map(fmap);
    CHECK(tokens.shape() == std::vector<int>{8, 3});
    // token t = y*w + x
    CHECK(tokens.at(1, 0) == fmap.at(0, 0, 1));
    CHECK(tokens.at(4, 2) == fmap.at(2, 1, 0));
    CHECK(map_from_tokens(tokens, 3, 2, 4) == fmap);
}

TEST_CASE("ops are pure: repeated evaluation is bit-identical") {
    ConvSpec s = ConvSpec::conv(3, 3, 4, 1, 2);
    std::mt19937 rng(36);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (float& v : s.weights.values()) v = dist(rng);
    const Tensor in = random_tensor({3, 10, 10}, 37);
    CHECK(conv2d(in, s) == conv2d(in, s));
    CHECK(softmax_rows(tokens_from_map(in)) == softmax_rows(tokens_from_map(in)));
}

TEST_CASE("conv2d shape errors name the offending axis") {
    ConvSpec s = ConvSpec::conv(3, 4, 4);
    const Tensor in = random_tensor({3, 8, 8}, 38);
    CHECK_THROWS_WITH_AS(conv2d(in, s), doctest::Contains("channel"), ShapeError);

    const Tensor tiny = random_tensor({4, 1, 8}, 39);
    ConvSpec nopad = ConvSpec::conv(3, 4, 4);
    nopad.padding = 0;
    CHECK_THROWS_AS(conv2d(tiny, nopad), ShapeError);
}
