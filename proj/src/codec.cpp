#include "splitseg/codec.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace splitseg {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint16_t get_u16(std::span<const uint8_t> b, std::size_t at) {
    return static_cast<uint16_t>(b[at] | (b[at + 1] << 8));
}

uint32_t get_u32(std::span<const uint8_t> b, std::size_t at) {
    return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
           (static_cast<uint32_t>(b[at + 2]) << 16) | (static_cast<uint32_t>(b[at + 3]) << 24);
}

std::vector<int> dims_to_shape(const std::array<uint32_t, 3>& dims) {
    return {static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])};
}

constexpr std::size_t kMaxDim = 1u << 20;

}  // namespace

std::vector<uint8_t> Bitstream::serialize() const {
    std::vector<uint8_t> out;
    out.reserve(total_bytes());
    out.insert(out.end(), BitstreamHeader::kMagic.begin(), BitstreamHeader::kMagic.end());
    put_u16(out, BitstreamHeader::kVersion);
    put_u32(out, header.model_id);
    put_u16(out, header.channels);
    put_u32(out, header.image_height);
    put_u32(out, header.image_width);
    for (uint32_t d : header.latent_dims) put_u32(out, d);
    for (uint32_t d : header.hyper_dims) put_u32(out, d);
    put_u32(out, static_cast<uint32_t>(hyper_payload.size()));
    put_u32(out, static_cast<uint32_t>(latent_payload.size()));
    out.insert(out.end(), hyper_payload.begin(), hyper_payload.end());
    out.insert(out.end(), latent_payload.begin(), latent_payload.end());
    return out;
}

Bitstream Bitstream::parse(std::span<const uint8_t> bytes) {
    if (bytes.size() < BitstreamHeader::kSize) throw CodecError("bitstream: header truncated");
    if (!std::equal(BitstreamHeader::kMagic.begin(), BitstreamHeader::kMagic.end(),
                    bytes.begin())) {
        throw CodecError("bitstream: bad magic");
    }
    const uint16_t version = get_u16(bytes, 4);
    if (version != BitstreamHeader::kVersion) {
        throw CodecError("bitstream: unsupported version " + std::to_string(version));
    }

    Bitstream b;
    b.header.model_id = get_u32(bytes, 6);
    b.header.channels = get_u16(bytes, 10);
    b.header.image_height = get_u32(bytes, 12);
    b.header.image_width = get_u32(bytes, 16);
    for (int i = 0; i < 3; ++i) b.header.latent_dims[i] = get_u32(bytes, 20 + 4 * i);
    for (int i = 0; i < 3; ++i) b.header.hyper_dims[i] = get_u32(bytes, 32 + 4 * i);
    b.header.hyper_bytes = get_u32(bytes, 44);
    b.header.latent_bytes = get_u32(bytes, 48);

    for (uint32_t d : b.header.latent_dims) {
        if (d > kMaxDim) throw CodecError("bitstream: latent dimension out of bounds");
    }
    for (uint32_t d : b.header.hyper_dims) {
        if (d > kMaxDim) throw CodecError("bitstream: hyper dimension out of bounds");
    }
    const std::size_t want = BitstreamHeader::kSize +
                             static_cast<std::size_t>(b.header.hyper_bytes) +
                             static_cast<std::size_t>(b.header.latent_bytes);
    if (bytes.size() != want) {
        throw CodecError("bitstream: payload length mismatch (header says " +
                         std::to_string(want) + " bytes, got " + std::to_string(bytes.size()) +
                         ")");
    }
    auto hyper_begin = bytes.begin() + BitstreamHeader::kSize;
    b.hyper_payload.assign(hyper_begin, hyper_begin + b.header.hyper_bytes);
    b.latent_payload.assign(hyper_begin + b.header.hyper_bytes, bytes.end());
    return b;
}

Tensor hyper_sigma(const QTensor& h_hat, const HyperWeights& w, double sigma_min) {
    Tensor sigma = hyper_decode_raw(h_hat.to_float(), w);
    const float floor = static_cast<float>(sigma_min);
    for (float& v : sigma.values()) {
        if (v < floor) v = floor;
    }
    return sigma;
}

Bitstream encode(const Tensor& r, const HyperWeights& w, const FactorizedModel& fm,
                 const GaussianConditional& gc, uint32_t model_id, int image_height,
                 int image_width) {
    if (!r.all_finite()) throw CodecError("encode: non-finite latent input");

    Bitstream b;
    b.header.model_id = model_id;
    b.header.image_height = static_cast<uint32_t>(image_height);
    b.header.image_width = static_cast<uint32_t>(image_width);

    if (r.empty()) return b;  // zero-dims header, empty payloads
    if (r.rank() != 3) throw CodecError("encode: latent must be F x h x w");
    b.header.channels = static_cast<uint16_t>(r.dim(0));
    for (int i = 0; i < 3; ++i) b.header.latent_dims[i] = static_cast<uint32_t>(r.dim(i));

    // Hyper path first: h = HE(r), quantize, factorized-code.
    const Tensor h = hyper_encode(r, w);
    const QTensor h_hat = quantize(h);
    for (int i = 0; i < 3; ++i) b.header.hyper_dims[i] = static_cast<uint32_t>(h.dim(i));
    if (static_cast<std::size_t>(h.dim(0)) != fm.channels.size()) {
        throw CodecError("encode: factorized model has " + std::to_string(fm.channels.size()) +
                         " channels, hyper latent has " + std::to_string(h.dim(0)));
    }
    {
        RangeEncoder enc;
        const std::size_t plane = static_cast<std::size_t>(h.dim(1)) * h.dim(2);
        for (int c = 0; c < h.dim(0); ++c) {
            const CdfTable& table = fm.channels[c];
            for (std::size_t i = 0; i < plane; ++i) {
                encode_symbol(enc, table, h_hat.values[c * plane + i]);
            }
        }
        b.hyper_payload = enc.finish();
    }

    // sigma from the decoded-side path, then Gaussian-code r_hat.
    const Tensor sigma = hyper_sigma(h_hat, w, gc.sigma_min);
    if (sigma.shape() != r.shape()) {
        throw CodecError("encode: HD output grid " + shape_to_string(sigma.shape()) +
                         " does not match latent grid " + shape_to_string(r.shape()));
    }
    const QTensor r_hat = quantize(r);
    {
        RangeEncoder enc;
        for (std::size_t i = 0; i < r_hat.size(); ++i) {
            encode_symbol(enc, gc.tables[gc.index_for(sigma.data()[i])], r_hat.values[i]);
        }
        b.latent_payload = enc.finish();
    }

    b.header.hyper_bytes = static_cast<uint32_t>(b.hyper_payload.size());
    b.header.latent_bytes = static_cast<uint32_t>(b.latent_payload.size());
    return b;
}

QTensor decode(const Bitstream& b, const HyperWeights& w, const FactorizedModel& fm,
               const GaussianConditional& gc, uint32_t expected_model_id) {
    if (b.header.model_id != expected_model_id) {
        throw CodecError("decode: bitstream was produced under model id " +
                         std::to_string(b.header.model_id) + ", expected " +
                         std::to_string(expected_model_id));
    }

    const std::vector<int> latent_shape = dims_to_shape(b.header.latent_dims);
    const std::vector<int> hyper_shape = dims_to_shape(b.header.hyper_dims);
    QTensor r_hat;
    r_hat.shape = latent_shape;
    if (shape_volume(latent_shape) == 0) return r_hat;

    if (static_cast<std::size_t>(hyper_shape[0]) != fm.channels.size()) {
        throw CodecError("decode: factorized model channel count mismatch");
    }

    // b_h -> h_hat
    QTensor h_hat;
    h_hat.shape = hyper_shape;
    h_hat.values.resize(shape_volume(hyper_shape));
    {
        RangeDecoder dec(b.hyper_payload);
        const std::size_t plane =
            static_cast<std::size_t>(hyper_shape[1]) * static_cast<std::size_t>(hyper_shape[2]);
        for (int c = 0; c < hyper_shape[0]; ++c) {
            const CdfTable& table = fm.channels[c];
            for (std::size_t i = 0; i < plane; ++i) {
                h_hat.values[c * plane + i] = decode_symbol(dec, table);
            }
        }
    }

    // h_hat -> sigma -> b_r
    const Tensor sigma = hyper_sigma(h_hat, w, gc.sigma_min);
    if (sigma.shape() != latent_shape) {
        throw CodecError("decode: HD grid does not match latent dims in header");
    }
    r_hat.values.resize(shape_volume(latent_shape));
    {
        RangeDecoder dec(b.latent_payload);
        for (std::size_t i = 0; i < r_hat.values.size(); ++i) {
            r_hat.values[i] = decode_symbol(dec, gc.tables[gc.index_for(sigma.data()[i])]);
        }
    }
    return r_hat;
}

RateBreakdown estimate_rate(const QTensor& r_hat, const QTensor& h_hat, const Tensor& sigma,
                            const FactorizedModel& fm, const GaussianConditional& gc) {
    if (sigma.size() != r_hat.size()) {
        throw ShapeError("estimate_rate: sigma and r_hat sizes differ");
    }
    RateBreakdown rate;
    for (std::size_t i = 0; i < r_hat.size(); ++i) {
        rate.latent_bits += gc.tables[gc.index_for(sigma.data()[i])].bits_for(r_hat.values[i]);
    }
    if (!h_hat.empty()) {
        if (h_hat.shape.empty() ||
            static_cast<std::size_t>(h_hat.shape[0]) != fm.channels.size()) {
            throw ShapeError("estimate_rate: factorized model channel count mismatch");
        }
        const std::size_t plane = h_hat.size() / static_cast<std::size_t>(h_hat.shape[0]);
        for (std::size_t c = 0; c < fm.channels.size(); ++c) {
            for (std::size_t i = 0; i < plane; ++i) {
                rate.hyper_bits += fm.channels[c].bits_for(h_hat.values[c * plane + i]);
            }
        }
    }
    return rate;
}

double estimate_bpp(const QTensor& r_hat, const QTensor& h_hat, const Tensor& sigma,
                    const FactorizedModel& fm, const GaussianConditional& gc, int image_height,
                    int image_width) {
    return estimate_rate(r_hat, h_hat, sigma, fm, gc).bpp(image_height, image_width);
}

CodecContext make_codec_context(const Tensor& factorized_scales, double sigma_min) {
    if (factorized_scales.rank() != 1) {
        throw CodecError("codec context: channel scales must be a rank-1 tensor");
    }
    CodecContext ctx;
    ctx.factorized = FactorizedModel::laplacian(
        std::span(factorized_scales.data(), factorized_scales.size()));
    ctx.gaussian = GaussianConditional::make(sigma_min);
    return ctx;
}

}  // namespace splitseg
