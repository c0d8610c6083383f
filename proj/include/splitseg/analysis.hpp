#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "splitseg/model.hpp"

namespace splitseg {

/// Per-layer parameter and MAC counts. Convention: 1 MAC = 1 FLOP, matching
/// the reported GFLOPs. Counted: conv/up-conv MACs (out_spatial * out_ch *
/// in_ch/G * h^2), attention matmuls (T^2 * d each), batch norm (1 MAC per
/// element), bilinear interpolation (4 MACs per output element, itemized).
/// Softmax, argmax, ReLU and branch additions are not MAC operations.
struct CostEntry {
    std::string layer;
    uint64_t params = 0;
    uint64_t macs = 0;
};

struct CostReport {
    std::string label;
    int height = 0;
    int width = 0;
    std::vector<CostEntry> entries;

    uint64_t total_params() const;
    uint64_t total_macs() const;
    double gmacs() const { return static_cast<double>(total_macs()) * 1e-9; }
    double mparams() const { return static_cast<double>(total_params()) * 1e-6; }

    /// Sum of MACs over entries whose layer name contains the substring.
    uint64_t macs_matching(const std::string& needle) const;

    void append(const CostReport& other, const std::string& prefix);

    std::string to_csv() const;
    static CostReport from_csv(const std::string& text);
    std::string to_json() const;
    static CostReport from_json(const std::string& text);
};

/// Layer census of the plain decoding head (D or JD) at image size H x W.
CostReport decoder_report(const DecoderConfig& config, int height, int width);
/// Cloud-side compression decoder: the HD stack.
CostReport compression_decoder_report(const DecoderConfig& config, int height, int width);
/// Feature decoder FD (baseline cloud side).
CostReport feature_decoder_report(const DecoderConfig& config, int height, int width);
/// Car-side stacks, for completeness in full reports.
CostReport feature_encoder_report(const DecoderConfig& config, int height, int width);
CostReport hyper_encoder_report(const DecoderConfig& config, int height, int width);

/// What the paper reports per cloud: CD+JD for the joint variant,
/// CD+FD+D for the baseline. backbone_macs is a declared constant entry
/// (backbones are out of scope); pass 0 to omit.
CostReport cloud_report(const DecoderConfig& config, int height, int width,
                        uint64_t backbone_macs = 0);

CostReport count_params(const SegModel& model);
CostReport count_flops(const SegModel& model, int height, int width);

/// S x S confusion counts with an ignored-pixel tally.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<uint64_t> counts;  // row = gt class, col = predicted class
    uint64_t ignored = 0;

    explicit ConfusionMatrix(int classes);
    uint64_t& at(int gt, int pred);
    uint64_t at(int gt, int pred) const;

    void add(const SegMap& pred, const SegMap& gt, std::optional<uint16_t> ignore_label = {});
    void merge(const ConfusionMatrix& other);

    /// Mean IoU over classes present in gt or pred, as a percentage.
    double miou_percent() const;
    uint64_t total_counted() const;
};

double miou(const SegMap& pred, const SegMap& gt, int classes,
            std::optional<uint16_t> ignore_label = {});

/// Mean over counted pixels of -ln y[gt], probabilities in, natural log.
double cross_entropy(const Tensor& probabilities, const SegMap& gt,
                     std::optional<uint16_t> ignore_label = {});

struct RdConfig {
    double alpha = 0.5;
    void validate() const;  // alpha in the open interval (0, 1)
};

/// J = alpha * J_dist + (1 - alpha) * J_rate.
double rd_loss(double j_dist, double j_rate, const RdConfig& cfg);

}  // namespace splitseg
