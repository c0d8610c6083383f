#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splitseg/range_coder.hpp"

namespace splitseg {

/// 16-bit fixed-point CDF over the integer symbols [min_symbol, max_symbol],
/// with one trailing escape slot for out-of-range values. Escaped symbols are
/// followed by their zigzag-encoded value as four raw bytes.
struct CdfTable {
    int min_symbol = -255;
    int max_symbol = 255;
    std::vector<uint32_t> cdf;  // size slots()+1, cdf[0]=0, cdf[slots()]=2^16

    int slots() const { return max_symbol - min_symbol + 2; }  // +1 escape
    int escape_slot() const { return slots() - 1; }
    uint32_t freq(int slot) const { return cdf[slot + 1] - cdf[slot]; }
    bool in_range(int32_t symbol) const { return symbol >= min_symbol && symbol <= max_symbol; }

    int slot_for(int32_t symbol) const;  // escape slot when out of range
    int find_slot(uint32_t cum) const;   // binary search

    /// Ideal table bits for a symbol, including the 32 raw escape bits.
    double bits_for(int32_t symbol) const;

    void validate() const;
};

/// Builds a table from an unnormalized in-range pmf plus explicit escape
/// mass. Every slot gets a strictly positive 16-bit frequency and the total
/// is exactly 2^16.
CdfTable cdf_from_pmf(std::span<const double> pmf, double escape_mass, int min_symbol,
                      int max_symbol);

void encode_symbol(RangeEncoder& enc, const CdfTable& table, int32_t symbol);
int32_t decode_symbol(RangeDecoder& dec, const CdfTable& table);

/// Per-channel factorized prior realized as parametric Laplacian tables.
struct FactorizedModel {
    std::vector<CdfTable> channels;

    static FactorizedModel laplacian(std::span<const float> channel_scales,
                                     int min_symbol = -255, int max_symbol = 255);
};

/// Zero-mean Gaussian conditional with per-element sigma, realized through a
/// log-spaced scale table of precomputed CDFs so encoder, decoder and rate
/// estimator share identical probabilities.
struct GaussianConditional {
    double sigma_min = 0.11;
    std::vector<double> scale_table;
    std::vector<CdfTable> tables;

    static GaussianConditional make(double sigma_min = 0.11, int scale_count = 64,
                                    double sigma_max = 256.0, int min_symbol = -255,
                                    int max_symbol = 255);

    double clamp_sigma(double sigma) const { return sigma < sigma_min ? sigma_min : sigma; }
    int index_for(double sigma) const;
    const CdfTable& table_for(double sigma) const { return tables[index_for(sigma)]; }
};

/// Continuous pmf P(s) = Phi((s+1/2)/sigma) - Phi((s-1/2)/sigma) with sigma
/// clamped to gc.sigma_min. Oracle-facing; coding goes through the tables.
double gaussian_pmf(int32_t symbol, double sigma, const GaussianConditional& gc);

}  // namespace splitseg
