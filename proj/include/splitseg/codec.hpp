#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "splitseg/entropy.hpp"
#include "splitseg/model.hpp"
#include "splitseg/tensor.hpp"

namespace splitseg {

/// Transmitted message layout (all little-endian):
///   magic "SSBS", version u16, model-id u32, F u16, H u32, W u32,
///   latent dims 3 x u32, hyper dims 3 x u32, len(b_h) u32, len(b_r) u32,
///   then the hyper payload and the latent payload in that order.
struct BitstreamHeader {
    static constexpr std::array<uint8_t, 4> kMagic = {'S', 'S', 'B', 'S'};
    static constexpr uint16_t kVersion = 1;
    static constexpr std::size_t kSize = 52;

    uint32_t model_id = 0;
    uint16_t channels = 0;  // F
    uint32_t image_height = 0;
    uint32_t image_width = 0;
    std::array<uint32_t, 3> latent_dims = {0, 0, 0};
    std::array<uint32_t, 3> hyper_dims = {0, 0, 0};
    uint32_t hyper_bytes = 0;
    uint32_t latent_bytes = 0;
};

struct Bitstream {
    BitstreamHeader header;
    std::vector<uint8_t> hyper_payload;   // b_h
    std::vector<uint8_t> latent_payload;  // b_r

    std::vector<uint8_t> serialize() const;
    static Bitstream parse(std::span<const uint8_t> bytes);

    std::size_t total_bytes() const {
        return BitstreamHeader::kSize + hyper_payload.size() + latent_payload.size();
    }
};

/// sigma = HD(h_hat), clamped to gc-style floor elementwise.
Tensor hyper_sigma(const QTensor& h_hat, const HyperWeights& w, double sigma_min);

/// Full source-encoder path: hyper analysis, quantization, factorized coding
/// of h_hat, then sigma-conditioned Gaussian coding of r_hat.
Bitstream encode(const Tensor& r, const HyperWeights& w, const FactorizedModel& fm,
                 const GaussianConditional& gc, uint32_t model_id, int image_height,
                 int image_width);

/// Exact inverse of encode's quantized symbols.
QTensor decode(const Bitstream& b, const HyperWeights& w, const FactorizedModel& fm,
               const GaussianConditional& gc, uint32_t expected_model_id);

struct RateBreakdown {
    double latent_bits = 0.0;
    double hyper_bits = 0.0;

    double total_bits() const { return latent_bits + hyper_bits; }
    double bpp(int image_height, int image_width) const {
        return total_bits() / (static_cast<double>(image_height) * image_width);
    }
};

/// Expected bitrate from the coder's own tables:
/// (-log2 P_r(r_hat | sigma) - log2 P_h(h_hat)) summed over symbols.
RateBreakdown estimate_rate(const QTensor& r_hat, const QTensor& h_hat, const Tensor& sigma,
                            const FactorizedModel& fm, const GaussianConditional& gc);

double estimate_bpp(const QTensor& r_hat, const QTensor& h_hat, const Tensor& sigma,
                    const FactorizedModel& fm, const GaussianConditional& gc, int image_height,
                    int image_width);

/// Paired probability models built from a pipeline's stored channel scales.
struct CodecContext {
    FactorizedModel factorized;
    GaussianConditional gaussian;
};

CodecContext make_codec_context(const Tensor& factorized_scales, double sigma_min = 0.11);

}  // namespace splitseg
