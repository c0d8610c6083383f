#include "splitseg/range_coder.hpp"

#include <cassert>

namespace splitseg {

namespace {
constexpr uint32_t kRenormBound = 1u << 24;
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq) {
    assert(freq > 0 && cum + freq <= kProbabilityTotal);
    const uint32_t step = range_ >> kProbabilityBits;
    low_ += static_cast<uint64_t>(step) * cum;
    range_ = step * freq;
    while (range_ < kRenormBound) {
        shift_low();
        range_ <<= 8;
    }
}

void RangeEncoder::shift_low() {
    // Emit the pending run once the carry is settled: either the top byte of
    // low cannot produce a future carry (< 0xFF) or a carry already happened.
    if (static_cast<uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const uint8_t carry = static_cast<uint8_t>(low_ >> 32);
        out_.push_back(static_cast<uint8_t>(cache_ + carry));
        while (--pending_) out_.push_back(static_cast<uint8_t>(0xFF + carry));
        cache_ = static_cast<uint8_t>(low_ >> 24);
    }
    ++pending_;
    low_ = (low_ << 8) & 0xFFFFFFFFull;
}

std::vector<uint8_t> RangeEncoder::finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    // Drain anything still waiting on a carry that can no longer arrive.
    if (pending_ > 1) {
        out_.push_back(cache_);
        while (--pending_ > 1) out_.push_back(0xFF);
    }
    return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
    next_byte();  // leading 0x00 emitted by the encoder
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    if (pos_ >= bytes_.size()) throw CodecError("range coder: truncated payload");
    return bytes_[pos_++];
}

uint32_t RangeDecoder::decode_cum() {
    step_ = range_ >> kProbabilityBits;
    const uint32_t cum = code_ / step_;
    return cum < kProbabilityTotal ? cum : kProbabilityTotal - 1;
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
    code_ -= step_ * cum;
    range_ = step_ * freq;
    while (range_ < kRenormBound) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

uint8_t RangeDecoder::decode_raw_byte() {
    const uint32_t cum = decode_cum();
    const uint8_t b = static_cast<uint8_t>(cum >> 8);
    consume(static_cast<uint32_t>(b) << 8, 256);
    return b;
}

}  // namespace splitseg
