#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitseg/errors.hpp"

namespace splitseg {

/// Probability precision shared by coder and tables: totals are 1 << 16.
inline constexpr int kProbabilityBits = 16;
inline constexpr uint32_t kProbabilityTotal = 1u << kProbabilityBits;

/// Byte-oriented range coder: 64-bit low for carry detection, 32-bit range,
/// renormalizing a byte at a time. Integer-only, so output is identical on
/// every platform. The first emitted byte is always 0x00; the decoder skips
/// it.
class RangeEncoder {
public:
    /// Narrows the interval to [cum, cum + freq) / 2^16. freq must be > 0 and
    /// cum + freq <= 2^16.
    void encode(uint32_t cum, uint32_t freq);

    /// Codes one byte at exactly 8 bits.
    void encode_raw_byte(uint8_t b) { encode(static_cast<uint32_t>(b) << 8, 256); }

    /// Flushes and returns the byte stream. The encoder is spent afterwards.
    std::vector<uint8_t> finish();

private:
    void shift_low();

    uint64_t low_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint8_t cache_ = 0;
    uint64_t pending_ = 1;  // cache_ plus any 0xFF run awaiting carry resolution
    std::vector<uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const uint8_t> bytes);

    /// Cumulative frequency of the next symbol, in [0, 2^16).
    uint32_t decode_cum();
    /// Consumes the symbol previously peeked via decode_cum.
    void consume(uint32_t cum, uint32_t freq);

    uint8_t decode_raw_byte();

private:
    uint8_t next_byte();

    std::span<const uint8_t> bytes_;
    std::size_t pos_ = 0;
    uint32_t range_ = 0xFFFFFFFFu;
    uint32_t code_ = 0;
    uint32_t step_ = 0;  // range_ >> 16 from the last decode_cum
};

}  // namespace splitseg
