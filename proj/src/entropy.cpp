#include "splitseg/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace splitseg {

namespace {

uint32_t zigzag(int32_t v) {
    return (static_cast<uint32_t>(v) << 1) ^ static_cast<uint32_t>(v >> 31);
}

int32_t unzigzag(uint32_t v) {
    return static_cast<int32_t>((v >> 1) ^ (~(v & 1) + 1));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

int CdfTable::slot_for(int32_t symbol) const {
    if (!in_range(symbol)) return escape_slot();
    return symbol - min_symbol;
}

int CdfTable::find_slot(uint32_t cum) const {
    // last slot with cdf[slot] <= cum
    int lo = 0, hi = slots() - 1;
    while (lo < hi) {
        const int mid = (lo + hi + 1) / 2;
        if (cdf[mid] <= cum) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    return lo;
}

double CdfTable::bits_for(int32_t symbol) const {
    const int slot = slot_for(symbol);
    double bits = -std::log2(static_cast<double>(freq(slot)) / kProbabilityTotal);
    if (slot == escape_slot()) bits += 32.0;  // raw zigzag payload
    return bits;
}

void CdfTable::validate() const {
    if (max_symbol < min_symbol) throw CodecError("cdf table: empty symbol range");
    if (static_cast<int>(cdf.size()) != slots() + 1) {
        throw CodecError("cdf table: size " + std::to_string(cdf.size()) + " != slots+1");
    }
    if (cdf.front() != 0 || cdf.back() != kProbabilityTotal) {
        throw CodecError("cdf table: endpoints must be 0 and 2^16");
    }
    for (std::size_t i = 1; i < cdf.size(); ++i) {
        if (cdf[i] <= cdf[i - 1]) throw CodecError("cdf table: zero-mass slot");
    }
}

CdfTable cdf_from_pmf(std::span<const double> pmf, double escape_mass, int min_symbol,
                      int max_symbol) {
    const int in_range = max_symbol - min_symbol + 1;
    if (static_cast<int>(pmf.size()) != in_range) {
        throw CodecError("cdf_from_pmf: pmf length does not match symbol range");
    }
    const int n = in_range + 1;  // + escape

    double total_mass = escape_mass;
    for (double p : pmf) total_mass += p;
    if (!(total_mass > 0.0)) throw CodecError("cdf_from_pmf: vanishing probability mass");

    // Floor-with-minimum, then settle the remainder on the largest slots.
    std::vector<uint32_t> freq(n);
    std::vector<double> ideal(n);
    for (int i = 0; i < in_range; ++i) ideal[i] = pmf[i] / total_mass;
    ideal[n - 1] = escape_mass / total_mass;
    int64_t assigned = 0;
    for (int i = 0; i < n; ++i) {
        freq[i] = std::max<uint32_t>(
            1, static_cast<uint32_t>(ideal[i] * static_cast<double>(kProbabilityTotal)));
        assigned += freq[i];
    }
    int64_t diff = static_cast<int64_t>(kProbabilityTotal) - assigned;
    while (diff != 0) {
        // adjust the slot whose rounded share is farthest from ideal
        int pick = -1;
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
            if (diff < 0 && freq[i] <= 1) continue;
            const double gap = diff > 0 ? ideal[i] * kProbabilityTotal - freq[i]
                                        : freq[i] - ideal[i] * kProbabilityTotal;
            if (gap > best) {
                best = gap;
                pick = i;
            }
        }
        if (pick < 0) throw CodecError("cdf_from_pmf: cannot normalize table");
        const int64_t step = diff > 0 ? 1 : -1;
        freq[pick] = static_cast<uint32_t>(static_cast<int64_t>(freq[pick]) + step);
        diff -= step;
    }

    CdfTable table;
    table.min_symbol = min_symbol;
    table.max_symbol = max_symbol;
    table.cdf.resize(n + 1);
    table.cdf[0] = 0;
    for (int i = 0; i < n; ++i) table.cdf[i + 1] = table.cdf[i] + freq[i];
    table.validate();
    return table;
}

void encode_symbol(RangeEncoder& enc, const CdfTable& table, int32_t symbol) {
    const int slot = table.slot_for(symbol);
    enc.encode(table.cdf[slot], table.freq(slot));
    if (slot == table.escape_slot()) {
        const uint32_t z = zigzag(symbol);
        enc.encode_raw_byte(static_cast<uint8_t>(z >> 24));
        enc.encode_raw_byte(static_cast<uint8_t>(z >> 16));
        enc.encode_raw_byte(static_cast<uint8_t>(z >> 8));
        enc.encode_raw_byte(static_cast<uint8_t>(z));
    }
}

int32_t decode_symbol(RangeDecoder& dec, const CdfTable& table) {
    const int slot = table.find_slot(dec.decode_cum());
    dec.consume(table.cdf[slot], table.freq(slot));
    if (slot == table.escape_slot()) {
        uint32_t z = 0;
        for (int i = 0; i < 4; ++i) z = (z << 8) | dec.decode_raw_byte();
        return unzigzag(z);
    }
    return table.min_symbol + slot;
}

FactorizedModel FactorizedModel::laplacian(std::span<const float> channel_scales, int min_symbol,
                                           int max_symbol) {
    FactorizedModel fm;
    fm.channels.reserve(channel_scales.size());
    const int in_range = max_symbol - min_symbol + 1;
    std::vector<double> pmf(static_cast<std::size_t>(in_range));
    for (float scale : channel_scales) {
        if (!(scale > 0.0f)) throw CodecError("factorized model: scale must be positive");
        const double b = scale;
        auto cdf = [b](double x) {
            return x < 0.0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b);
        };
        for (int i = 0; i < in_range; ++i) {
            const double s = min_symbol + i;
            pmf[i] = cdf(s + 0.5) - cdf(s - 0.5);
        }
        const double escape = cdf(min_symbol - 0.5) + 1.0 - cdf(max_symbol + 0.5);
        fm.channels.push_back(cdf_from_pmf(pmf, escape, min_symbol, max_symbol));
    }
    return fm;
}

GaussianConditional GaussianConditional::make(double sigma_min, int scale_count, double sigma_max,
                                              int min_symbol, int max_symbol) {
    if (!(sigma_min > 0.0) || sigma_max <= sigma_min || scale_count < 1) {
        throw CodecError("gaussian conditional: bad scale-table parameters");
    }
    GaussianConditional gc;
    gc.sigma_min = sigma_min;
    gc.scale_table.resize(scale_count);
    const double log_min = std::log(sigma_min), log_max = std::log(sigma_max);
    for (int i = 0; i < scale_count; ++i) {
        const double f = scale_count == 1 ? 0.0 : static_cast<double>(i) / (scale_count - 1);
        gc.scale_table[i] = std::exp(log_min + f * (log_max - log_min));
    }

    const int in_range = max_symbol - min_symbol + 1;
    std::vector<double> pmf(static_cast<std::size_t>(in_range));
    gc.tables.reserve(scale_count);
    for (double sigma : gc.scale_table) {
        for (int i = 0; i < in_range; ++i) {
            const double s = min_symbol + i;
            pmf[i] = normal_cdf((s + 0.5) / sigma) - normal_cdf((s - 0.5) / sigma);
        }
        const double escape =
            normal_cdf((min_symbol - 0.5) / sigma) + 1.0 - normal_cdf((max_symbol + 0.5) / sigma);
        gc.tables.push_back(cdf_from_pmf(pmf, escape, min_symbol, max_symbol));
    }
    return gc;
}

int GaussianConditional::index_for(double sigma) const {
    const double s = clamp_sigma(sigma);
    // smallest table entry >= s; the top entry absorbs larger sigmas
    const auto it = std::lower_bound(scale_table.begin(), scale_table.end(), s);
    if (it == scale_table.end()) return static_cast<int>(scale_table.size()) - 1;
    return static_cast<int>(it - scale_table.begin());
}

double gaussian_pmf(int32_t symbol, double sigma, const GaussianConditional& gc) {
    const double s = gc.clamp_sigma(sigma);
    return normal_cdf((symbol + 0.5) / s) - normal_cdf((symbol - 0.5) / s);
}

}  // namespace splitseg
