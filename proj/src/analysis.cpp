#include "splitseg/analysis.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace splitseg {

namespace {

uint64_t u64(int v) { return static_cast<uint64_t>(v); }

struct GridDims {
    uint64_t latent;  // H/8 * W/8 grid cells
    uint64_t hyper;   // H/16 * W/16
    uint64_t quarter;  // H/4 * W/4
};

GridDims codec_grids(int height, int width) {
    GridDims g;
    g.latent = u64(height / 8) * u64(width / 8);
    g.hyper = u64(height / 16) * u64(width / 16);
    g.quarter = u64(height / 4) * u64(width / 4);
    return g;
}

void push_conv(CostReport& r, const std::string& name, uint64_t out_spatial, uint64_t out_ch,
               uint64_t in_per_group, uint64_t kernel) {
    r.entries.push_back({name, out_ch * in_per_group * kernel * kernel + out_ch,
                         out_spatial * out_ch * in_per_group * kernel * kernel});
}

void push_bn(CostReport& r, const std::string& name, uint64_t spatial, uint64_t channels) {
    r.entries.push_back({name, 2 * channels, spatial * channels});
}

void push_projection(CostReport& r, const std::string& name, uint64_t t, uint64_t d) {
    push_conv(r, name + ".conv", t, d, d, 1);
    push_bn(r, name + ".bn", t, d);
}

}  // namespace

uint64_t CostReport::total_params() const {
    uint64_t n = 0;
    for (const auto& e : entries) n += e.params;
    return n;
}

uint64_t CostReport::total_macs() const {
    uint64_t n = 0;
    for (const auto& e : entries) n += e.macs;
    return n;
}

uint64_t CostReport::macs_matching(const std::string& needle) const {
    uint64_t n = 0;
    for (const auto& e : entries) {
        if (e.layer.find(needle) != std::string::npos) n += e.macs;
    }
    return n;
}

void CostReport::append(const CostReport& other, const std::string& prefix) {
    for (const auto& e : other.entries) {
        entries.push_back({prefix + e.layer, e.params, e.macs});
    }
}

std::string CostReport::to_csv() const {
    std::ostringstream out;
    out << "report," << label << "," << height << "," << width << "\n";
    out << "layer,params,macs\n";
    for (const auto& e : entries) out << e.layer << "," << e.params << "," << e.macs << "\n";
    return out.str();
}

CostReport CostReport::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    CostReport r;
    if (!std::getline(in, line)) throw IoError("cost report csv: empty input");
    {
        std::istringstream head(line);
        std::string tag;
        std::getline(head, tag, ',');
        if (tag != "report") throw IoError("cost report csv: missing report line");
        std::getline(head, r.label, ',');
        std::string h, w;
        std::getline(head, h, ',');
        std::getline(head, w, ',');
        r.height = std::stoi(h);
        r.width = std::stoi(w);
    }
    if (!std::getline(in, line) || line != "layer,params,macs") {
        throw IoError("cost report csv: missing column header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        CostEntry e;
        std::string p, m;
        std::getline(row, e.layer, ',');
        std::getline(row, p, ',');
        std::getline(row, m, ',');
        e.params = std::stoull(p);
        e.macs = std::stoull(m);
        r.entries.push_back(std::move(e));
    }
    return r;
}

std::string CostReport::to_json() const {
    nlohmann::json j;
    j["label"] = label;
    j["height"] = height;
    j["width"] = width;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
        j["entries"].push_back({{"layer", e.layer}, {"params", e.params}, {"macs", e.macs}});
    }
    j["total_params"] = total_params();
    j["total_macs"] = total_macs();
    return j.dump(2);
}

CostReport CostReport::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    CostReport r;
    r.label = j.at("label").get<std::string>();
    r.height = j.at("height").get<int>();
    r.width = j.at("width").get<int>();
    for (const auto& e : j.at("entries")) {
        r.entries.push_back({e.at("layer").get<std::string>(), e.at("params").get<uint64_t>(),
                             e.at("macs").get<uint64_t>()});
    }
    return r;
}

CostReport decoder_report(const DecoderConfig& config, int height, int width) {
    config.validate();
    const uint64_t d = u64(config.dim);
    const uint64_t s = u64(config.classes);
    const uint64_t k = u64(config.downsample);
    if (height % config.downsample != 0 || width % config.downsample != 0) {
        throw ShapeError("decoder_report: resolution not divisible by k");
    }
    const uint64_t t = (u64(height) / k) * (u64(width) / k);

    CostReport r;
    r.label = (config.variant == DecoderVariant::joint_jd ? "jd" : "d");
    r.height = height;
    r.width = width;

    push_conv(r, "cm.skip.conv", t, d, d, 1);
    for (const char* stage : {"cm.stage1", "cm.stage2"}) {
        const std::string base(stage);
        push_projection(r, base + ".q", t, d);
        push_projection(r, base + ".k", t, d);
        push_projection(r, base + ".v", t, d);
        r.entries.push_back({base + ".attn.scores", 0, t * t * d});
        r.entries.push_back({base + ".attn.mix", 0, t * t * d});
        push_projection(r, base + ".out", t, d);
    }
    r.entries.push_back({"cm.cross.fc_q", d * d + d, (t + s) * d * d});
    r.entries.push_back({"cm.cross.fc_k", d * d + d, s * d * d});
    r.entries.push_back({"cm.cross.tokens", s * d, 0});
    r.entries.push_back({"cm.cross.attn.scores", 0, (t + s) * s * d});
    r.entries.push_back({"cm.cross.attn.mix", 0, t * s * d});

    uint64_t head_grid = t;
    if (config.variant == DecoderVariant::joint_jd) {
        const uint64_t g = u64(config.conv_groups(config.dim));
        head_grid = t * u64(config.stride) * u64(config.stride);
        push_conv(r, "up.dwupconv", head_grid, d, d / g, 5);
        push_bn(r, "up.bn", head_grid, d);
    }
    push_conv(r, "head.conv", head_grid, s, d, 1);
    r.entries.push_back({"head.upsample", 0, u64(height) * u64(width) * s * 4});
    return r;
}

CostReport compression_decoder_report(const DecoderConfig& config, int height, int width) {
    const uint64_t f = u64(config.feature_channels());
    const GridDims g = codec_grids(height, width);
    CostReport r;
    r.label = "cd";
    r.height = height;
    r.width = width;
    push_conv(r, "hd.upconv1", g.hyper, f, f, 1);
    push_bn(r, "hd.bn1", g.hyper, f);
    push_conv(r, "hd.upconv2", g.latent, f, f, 3);
    push_bn(r, "hd.bn2", g.latent, f);
    return r;
}

CostReport feature_decoder_report(const DecoderConfig& config, int height, int width) {
    const uint64_t f = u64(config.feature_channels());
    const uint64_t groups = u64(config.conv_groups(config.feature_channels()));
    const GridDims g = codec_grids(height, width);
    CostReport r;
    r.label = "fd";
    r.height = height;
    r.width = width;
    push_conv(r, "fd.upconv", g.latent, f, f, 1);
    push_bn(r, "fd.bn1", g.latent, f);
    push_conv(r, "fd.dwupconv", g.quarter, f, f / groups, 3);
    push_bn(r, "fd.bn2", g.quarter, f);
    return r;
}

CostReport feature_encoder_report(const DecoderConfig& config, int height, int width) {
    const uint64_t f = u64(config.feature_channels());
    const uint64_t groups = u64(config.conv_groups(config.feature_channels()));
    const GridDims g = codec_grids(height, width);
    CostReport r;
    r.label = "fe";
    r.height = height;
    r.width = width;
    push_conv(r, "fe.dwconv", g.latent, f, f / groups, 3);
    push_bn(r, "fe.bn1", g.latent, f);
    push_conv(r, "fe.conv", g.latent, f, f, 1);
    push_bn(r, "fe.bn2", g.latent, f);
    return r;
}

CostReport hyper_encoder_report(const DecoderConfig& config, int height, int width) {
    const uint64_t f = u64(config.feature_channels());
    const GridDims g = codec_grids(height, width);
    CostReport r;
    r.label = "he";
    r.height = height;
    r.width = width;
    push_conv(r, "he.conv1", g.hyper, f, f, 3);
    push_bn(r, "he.bn1", g.hyper, f);
    push_conv(r, "he.conv2", g.hyper, f, f, 1);
    push_bn(r, "he.bn2", g.hyper, f);
    return r;
}

CostReport cloud_report(const DecoderConfig& config, int height, int width,
                        uint64_t backbone_macs) {
    CostReport r;
    r.height = height;
    r.width = width;
    if (config.variant == DecoderVariant::joint_jd) {
        r.label = "cd+jd";
        r.append(compression_decoder_report(config, height, width), "cd.");
        r.append(decoder_report(config, height, width), "jd.");
    } else {
        r.label = "cd+fd+d";
        r.append(compression_decoder_report(config, height, width), "cd.");
        r.append(feature_decoder_report(config, height, width), "fd.");
        r.append(decoder_report(config, height, width), "d.");
    }
    if (backbone_macs > 0) {
        r.entries.push_back({"backbone (declared)", 0, backbone_macs});
    }
    return r;
}

CostReport count_params(const SegModel& model) {
    // MAC side needs a resolution; a unit grid keeps the census valid.
    CostReport r = decoder_report(model.config, model.config.downsample, model.config.downsample);
    for (auto& e : r.entries) e.macs = 0;
    r.height = 0;
    r.width = 0;
    return r;
}

CostReport count_flops(const SegModel& model, int height, int width) {
    return decoder_report(model.config, height, width);
}

ConfusionMatrix::ConfusionMatrix(int classes_)
    : classes(classes_), counts(static_cast<std::size_t>(classes_) * classes_, 0) {
    if (classes_ < 1) throw ShapeError("confusion matrix: classes must be >= 1");
}

uint64_t& ConfusionMatrix::at(int gt, int pred) {
    return counts[static_cast<std::size_t>(gt) * classes + pred];
}

uint64_t ConfusionMatrix::at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * classes + pred];
}

void ConfusionMatrix::add(const SegMap& pred, const SegMap& gt,
                          std::optional<uint16_t> ignore_label) {
    if (pred.height != gt.height || pred.width != gt.width) {
        throw ShapeError("confusion matrix: map sizes differ");
    }
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
        const uint16_t g = gt.labels[i];
        if (ignore_label && g == *ignore_label) {
            ++ignored;
            continue;
        }
        const uint16_t p = pred.labels[i];
        if (g < 1 || g > classes || p < 1 || p > classes) {
            throw ShapeError("confusion matrix: label outside {1.." + std::to_string(classes) +
                             "}");
        }
        ++at(g - 1, p - 1);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes != classes) throw ShapeError("confusion matrix: class counts differ");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    ignored += other.ignored;
}

uint64_t ConfusionMatrix::total_counted() const {
    uint64_t n = 0;
    for (uint64_t c : counts) n += c;
    return n;
}

double ConfusionMatrix::miou_percent() const {
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < classes; ++c) {
        const uint64_t tp = at(c, c);
        uint64_t gt_total = 0, pred_total = 0;
        for (int o = 0; o < classes; ++o) {
            gt_total += at(c, o);
            pred_total += at(o, c);
        }
        const uint64_t denom = gt_total + pred_total - tp;
        if (denom == 0) continue;  // class absent from both maps
        sum += static_cast<double>(tp) / static_cast<double>(denom);
        ++present;
    }
    if (present == 0) return 0.0;
    return 100.0 * sum / present;
}

double miou(const SegMap& pred, const SegMap& gt, int classes,
            std::optional<uint16_t> ignore_label) {
    ConfusionMatrix cm(classes);
    cm.add(pred, gt, ignore_label);
    return cm.miou_percent();
}

double cross_entropy(const Tensor& probabilities, const SegMap& gt,
                     std::optional<uint16_t> ignore_label) {
    if (probabilities.rank() != 3) throw ShapeError("cross_entropy: expected S x H x W input");
    const int s = probabilities.dim(0);
    if (probabilities.dim(1) != gt.height || probabilities.dim(2) != gt.width) {
        throw ShapeError("cross_entropy: prediction grid does not match ground truth");
    }
    double total = 0.0;
    uint64_t counted = 0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            const uint16_t g = gt.at(y, x);
            if (ignore_label && g == *ignore_label) continue;
            if (g < 1 || g > s) {
                throw ShapeError("cross_entropy: label outside {1.." + std::to_string(s) + "}");
            }
            total += -std::log(static_cast<double>(probabilities.at(g - 1, y, x)));
            ++counted;
        }
    }
    return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

void RdConfig::validate() const {
    if (!(alpha > 0.0) || !(alpha < 1.0)) {
        throw ShapeError("rd config: alpha must lie in the open interval (0, 1)");
    }
}

double rd_loss(double j_dist, double j_rate, const RdConfig& cfg) {
    cfg.validate();
    return cfg.alpha * j_dist + (1.0 - cfg.alpha) * j_rate;
}

}  // namespace splitseg
