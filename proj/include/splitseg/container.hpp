#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "splitseg/model.hpp"
#include "splitseg/tensor.hpp"

namespace splitseg {

/// Raw tensor file: magic "SSTN", version u16, rank u8, dims u32
/// little-endian, payload f32 little-endian.
std::vector<uint8_t> tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(std::span<const uint8_t> bytes);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// Weight container: magic "SSJD", version u16, entry count u32; per entry:
/// name (u16 length + UTF-8), rank u8, dims u32 each, f32 little-endian
/// payload. Entries are kept name-sorted so serialization is canonical.
class WeightContainer {
public:
    void put(const std::string& name, Tensor t);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    std::size_t count() const { return entries_.size(); }
    const std::map<std::string, Tensor>& entries() const { return entries_; }

    std::vector<uint8_t> serialize() const;
    static WeightContainer parse(std::span<const uint8_t> bytes);
    void save(const std::filesystem::path& path) const;
    static WeightContainer load(const std::filesystem::path& path);

    /// FNV-1a over the canonical serialization; stamps bitstream headers.
    uint32_t content_id() const;

private:
    std::map<std::string, Tensor> entries_;
};

WeightContainer pack_pipeline(const Pipeline& pipeline);
Pipeline unpack_pipeline(const WeightContainer& container, const DecoderConfig& config);

/// Content hash of the packed pipeline; both coder sides derive it from their
/// own weights, so a stream decoded under different weights is rejected.
uint32_t pipeline_id(const Pipeline& pipeline);

/// Plain-text key=value serialization of DecoderConfig.
std::string config_to_text(const DecoderConfig& config);
DecoderConfig config_from_text(const std::string& text);
void save_config(const std::filesystem::path& path, const DecoderConfig& config);
DecoderConfig load_config(const std::filesystem::path& path);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes);

}  // namespace splitseg
