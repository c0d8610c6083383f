#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "splitseg/analysis.hpp"
#include "splitseg/codec.hpp"
#include "splitseg/container.hpp"
#include "splitseg/image.hpp"
#include "splitseg/net.hpp"

namespace {

using namespace splitseg;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitProtocol = 4;
constexpr int kExitVerify = 5;

uint64_t env_seed() {
    if (const char* s = std::getenv("SPLITSEG_SEED")) return std::strtoull(s, nullptr, 10);
    return 0;
}

std::string env_addr() {
    if (const char* s = std::getenv("SPLITSEG_ADDR")) return s;
    return "127.0.0.1:9901";
}

std::pair<int, int> parse_resolution(const std::string& res) {
    const auto x = res.find('x');
    if (x == std::string::npos) {
        throw ShapeError("resolution must be WIDTHxHEIGHT, e.g. 512x512");
    }
    const int w = std::stoi(res.substr(0, x));
    const int h = std::stoi(res.substr(x + 1));
    if (w < 1 || h < 1) throw ShapeError("resolution must be positive");
    return {h, w};
}

DecoderConfig config_from_flags(const std::string& variant, int dim, int classes, int groups) {
    DecoderConfig config;
    config.variant = variant_from_name(variant);
    if (config.variant == DecoderVariant::baseline_d) {
        config.dim = dim > 0 ? dim : 256;
        config.downsample = 4;
    } else {
        config.dim = dim > 0 ? dim : 48;
        config.downsample = 8;
    }
    config.classes = classes;
    config.groups = groups;
    config.validate();
    return config;
}

Pipeline load_pipeline(const std::string& config_path, const std::string& weights_path) {
    const DecoderConfig config = load_config(config_path);
    return unpack_pipeline(WeightContainer::load(weights_path), config);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

int cmd_init(const std::string& variant, int dim, int classes, int groups, uint64_t seed,
             const std::string& out_weights, const std::string& out_config) {
    const DecoderConfig config = config_from_flags(variant, dim, classes, groups);
    const Pipeline pipeline = build_pipeline(config, seed);
    const WeightContainer container = pack_pipeline(pipeline);
    container.save(out_weights);
    save_config(out_config, config);
    std::cout << "wrote " << out_weights << " (" << container.count() << " tensors, id 0x"
              << std::hex << container.content_id() << std::dec << ") and " << out_config << "\n";
    return kExitOk;
}

int cmd_inspect(const std::string& weights_path) {
    const WeightContainer container = WeightContainer::load(weights_path);
    for (const auto& [name, tensor] : container.entries()) {
        std::cout << name << "  " << shape_to_string(tensor.shape()) << "  " << tensor.size()
                  << " values\n";
    }
    std::cout << "entries: " << container.count() << ", content id: 0x" << std::hex
              << container.content_id() << std::dec << "\n";
    return kExitOk;
}

int cmd_analyze(const std::string& variant, int dim, int classes, const std::string& res,
                bool table3, double backbone_gflops, const std::string& out_csv,
                const std::string& out_json) {
    const auto [height, width] = parse_resolution(res);
    const DecoderConfig config = config_from_flags(variant, dim, classes, 0);
    const auto backbone = static_cast<uint64_t>(backbone_gflops * 1e9);
    const CostReport report = cloud_report(config, height, width, backbone);

    write_text(out_csv, report.to_csv());
    write_text(out_json, report.to_json());

    std::cout << report.label << " @ " << width << "x" << height << ": " << report.gmacs()
              << " GFLOPs (MAC), " << report.mparams() << " M params\n";
    std::cout << "reports written to " << out_csv << " and " << out_json << "\n";

    if (table3) {
        DecoderConfig baseline = DecoderConfig::baseline(classes);
        const CostReport base = cloud_report(baseline, height, width, backbone);
        std::cout << "\nmethod     FLOPs(G)  params(M)\n";
        std::printf("%-9s %9.1f %10.3f\n", base.label.c_str(), base.gmacs(), base.mparams());
        std::printf("%-9s %9.1f %10.3f\n", report.label.c_str(), report.gmacs(),
                    report.mparams());
    }
    return kExitOk;
}

int cmd_encode(const std::string& in_path, const std::string& config_path,
               const std::string& weights_path, const std::string& out_path,
               const std::string& stats_path) {
    const Pipeline pipeline = load_pipeline(config_path, weights_path);
    const Tensor r = load_tensor(in_path);
    if (r.rank() != 3 || r.dim(0) != pipeline.config.feature_channels()) {
        throw ShapeError("encode: input tensor must be F x h x w with F = " +
                         std::to_string(pipeline.config.feature_channels()));
    }
    const int image_h = r.dim(1) * 8, image_w = r.dim(2) * 8;  // latent sits on the H/8 grid
    const CodecContext ctx = make_codec_context(pipeline.factorized_scales);
    const Bitstream bs = encode(r, pipeline.hyper, ctx.factorized, ctx.gaussian,
                                pipeline_id(pipeline), image_h, image_w);
    write_file(out_path, bs.serialize());

    const QTensor r_hat = quantize(r);
    const QTensor h_hat = quantize(hyper_encode(r, pipeline.hyper));
    const Tensor sigma = hyper_sigma(h_hat, pipeline.hyper, ctx.gaussian.sigma_min);
    const RateBreakdown rate = estimate_rate(r_hat, h_hat, sigma, ctx.factorized, ctx.gaussian);
    const double measured_bpp =
        8.0 * static_cast<double>(bs.total_bytes()) / (static_cast<double>(image_h) * image_w);

    std::ostringstream stats;
    stats << "{\n";
    stats << "  \"bytes\": " << bs.total_bytes() << ",\n";
    stats << "  \"header_bytes\": " << BitstreamHeader::kSize << ",\n";
    stats << "  \"payload_bytes\": " << bs.hyper_payload.size() + bs.latent_payload.size()
          << ",\n";
    stats << "  \"estimated_bpp\": " << rate.bpp(image_h, image_w) << ",\n";
    stats << "  \"measured_bpp\": " << measured_bpp << "\n";
    stats << "}\n";
    if (!stats_path.empty()) write_text(stats_path, stats.str());
    std::cout << "encoded " << bs.total_bytes() << " bytes, estimated "
              << rate.bpp(image_h, image_w) << " bpp, measured " << measured_bpp << " bpp\n";
    return kExitOk;
}

int cmd_decode(const std::string& in_path, const std::string& config_path,
               const std::string& weights_path, const std::string& out_path) {
    const Pipeline pipeline = load_pipeline(config_path, weights_path);
    const CodecContext ctx = make_codec_context(pipeline.factorized_scales);
    const Bitstream bs = Bitstream::parse(read_file(in_path));
    const QTensor r_hat =
        decode(bs, pipeline.hyper, ctx.factorized, ctx.gaussian, pipeline_id(pipeline));
    save_tensor(out_path, r_hat.to_float());
    std::cout << "decoded " << shape_to_string(r_hat.shape) << " symbols to " << out_path << "\n";
    return kExitOk;
}

int cmd_roundtrip(const std::string& in_path, const std::string& config_path,
                  const std::string& weights_path, int trials, uint64_t seed) {
    const Pipeline pipeline = load_pipeline(config_path, weights_path);
    const CodecContext ctx = make_codec_context(pipeline.factorized_scales);
    const uint32_t id = pipeline_id(pipeline);
    const int f = pipeline.config.feature_channels();

    const auto run_one = [&](const Tensor& r) {
        const Bitstream bs =
            encode(r, pipeline.hyper, ctx.factorized, ctx.gaussian, id, r.dim(1) * 8, r.dim(2) * 8);
        const Bitstream reparsed = Bitstream::parse(bs.serialize());
        const QTensor r_hat = decode(reparsed, pipeline.hyper, ctx.factorized, ctx.gaussian, id);
        if (!(r_hat == quantize(r))) {
            throw VerifyError("roundtrip mismatch: decode(encode(r)) != Q(r)");
        }
    };

    if (!in_path.empty()) {
        run_one(load_tensor(in_path));
        std::cout << "roundtrip ok for " << in_path << "\n";
        return kExitOk;
    }
    for (int t = 0; t < trials; ++t) {
        ParamRng rng(seed + static_cast<uint64_t>(t), "roundtrip");
        const int h = 2 * (1 + static_cast<int>(rng.next_unit() * 7));
        const int w = 2 * (1 + static_cast<int>(rng.next_unit() * 7));
        const double spread = 0.5 + rng.next_unit() * 20.0;
        Tensor r({f, h, w});
        for (float& v : r.values()) v = rng.next_symmetric(spread);
        run_one(r);
    }
    std::cout << "roundtrip ok on " << trials << " random tensors\n";
    return kExitOk;
}

int cmd_segment(const std::string& topology_name_, const std::string& image_path,
                const std::string& config_path, const std::string& weights_path,
                const std::string& addr, const std::string& out_map,
                const std::string& out_stats, bool payload_only) {
    const Pipeline pipeline = load_pipeline(config_path, weights_path);
    const Tensor image = load_ppm(image_path);

    SessionConfig session;
    session.topology = topology_from_name(topology_name_);
    session.address = addr;
    session.payload_only_bpp = payload_only;

    const ClientResult result = run_client(session, pipeline, image);
    if (!out_map.empty()) save_pgm_labels(out_map, result.map);
    if (!out_stats.empty()) {
        write_text(out_stats, result.stats.to_json(image.dim(1), image.dim(2)));
    }
    std::cout << topology_name(session.topology) << ": " << result.map.width << "x"
              << result.map.height << " map, " << result.stats.bytes_sent << " bytes sent, "
              << result.stats.bpp(image.dim(1), image.dim(2), payload_only) << " bpp\n";
    return kExitOk;
}

int cmd_serve(const std::string& addr, const std::string& config_path,
              const std::string& weights_path) {
    Pipeline pipeline = load_pipeline(config_path, weights_path);
    std::cout << "serving " << variant_name(pipeline.config.variant) << " decoder on " << addr
              << "\n";
    run_server(std::move(pipeline), addr);
    return kExitOk;
}

int cmd_bench(const std::string& variant, int dim, int classes, const std::string& res, int iters,
              uint64_t seed) {
    const auto [height, width] = parse_resolution(res);
    const DecoderConfig config = config_from_flags(variant, dim, classes, 0);
    if (height % config.downsample != 0 || width % config.downsample != 0) {
        throw ShapeError("bench: resolution not divisible by k");
    }
    const SegModel model = build_model(config, seed);
    Tensor features({config.dim, height / config.downsample, width / config.downsample});
    ParamRng rng(seed, "bench.features");
    for (float& v : features.values()) v = rng.next_symmetric(1.0);

    for (int i = 0; i < iters; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const SegResult result = segment(model, features);
        const auto stop = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
        std::cout << "iter " << i << ": " << ms << " ms (" << result.map.width << "x"
                  << result.map.height << " map)\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"split semantic-segmentation pipeline: feature codec, decoders, transport"};
    app.require_subcommand(1);

    std::string variant = "jd", res = "512x512";
    int dim = 0, classes = 150, groups = 0, trials = 100, iters = 10;
    uint64_t seed = env_seed();
    bool table3 = false, payload_only = false;
    double backbone_gflops = 0.0;
    std::string in_path, out_path, stats_path, config_path, weights_path;
    std::string out_csv = "costreport.csv", out_json = "costreport.json";
    std::string out_weights = "weights.ssjd", out_config = "model.cfg";
    std::string addr = env_addr(), topology = "in-car-jd", image_path, out_map;

    auto* init = app.add_subcommand("init", "build seeded weights and a config file");
    init->add_option("--variant", variant, "decoder variant: d | jd");
    init->add_option("--dim", dim, "internal dimension d (default 48 for jd, 256 for d)");
    init->add_option("--classes", classes, "class count S");
    init->add_option("--groups", groups, "group count G for DW layers (0 = depthwise)");
    init->add_option("--seed", seed, "PRNG seed");
    init->add_option("--out-weights", out_weights, "output weight container");
    init->add_option("--out-config", out_config, "output config file");

    auto* inspect = app.add_subcommand("inspect", "list weight container entries");
    inspect->add_option("--weights", weights_path, "weight container")->required();

    auto* analyze = app.add_subcommand("analyze", "parameter / FLOP census of the cloud side");
    analyze->add_option("--variant", variant, "decoder variant: d | jd");
    analyze->add_option("--dim", dim, "internal dimension d");
    analyze->add_option("--classes", classes, "class count S");
    analyze->add_option("--res", res, "image resolution WIDTHxHEIGHT");
    analyze->add_flag("--table3", table3, "print baseline-vs-jd comparison rows");
    analyze->add_option("--backbone-flops", backbone_gflops,
                        "declared backbone GFLOPs constant (default 0)");
    analyze->add_option("--out-csv", out_csv, "CSV report path");
    analyze->add_option("--out-json", out_json, "JSON report path");

    auto* encode_cmd = app.add_subcommand("encode", "encode a latent tensor to a bitstream");
    encode_cmd->add_option("--in", in_path, "input tensor (SSTN)")->required();
    encode_cmd->add_option("--config", config_path, "config file")->required();
    encode_cmd->add_option("--weights", weights_path, "weight container")->required();
    encode_cmd->add_option("--out", out_path, "output bitstream")->required();
    encode_cmd->add_option("--stats", stats_path, "write rate stats JSON here");

    auto* decode_cmd = app.add_subcommand("decode", "decode a bitstream to a tensor");
    decode_cmd->add_option("--in", in_path, "input bitstream")->required();
    decode_cmd->add_option("--config", config_path, "config file")->required();
    decode_cmd->add_option("--weights", weights_path, "weight container")->required();
    decode_cmd->add_option("--out", out_path, "output tensor (SSTN)")->required();

    auto* roundtrip = app.add_subcommand("roundtrip", "verify decode(encode(r)) == Q(r)");
    roundtrip->add_option("--in", in_path, "input tensor; omit to run random trials");
    roundtrip->add_option("--config", config_path, "config file")->required();
    roundtrip->add_option("--weights", weights_path, "weight container")->required();
    roundtrip->add_option("--trials", trials, "random trial count");
    roundtrip->add_option("--seed", seed, "PRNG seed");

    auto* segment_cmd = app.add_subcommand("segment", "run one topology on a PPM image");
    segment_cmd->add_option("--topology", topology,
                            "in-car-baseline | in-car-jd | distributed-baseline | distributed-jd");
    segment_cmd->add_option("--image", image_path, "input image (binary PPM)")->required();
    segment_cmd->add_option("--config", config_path, "config file")->required();
    segment_cmd->add_option("--weights", weights_path, "weight container")->required();
    segment_cmd->add_option("--addr", addr, "server address for distributed topologies");
    segment_cmd->add_option("--out-map", out_map, "write the label map (PGM) here");
    segment_cmd->add_option("--out-stats", stats_path, "write channel stats JSON here");
    segment_cmd->add_flag("--payload-only", payload_only, "report bpp without header bytes");

    auto* serve = app.add_subcommand("serve", "run the cloud-side decode server");
    serve->add_option("--addr", addr, "bind address host:port");
    serve->add_option("--config", config_path, "config file")->required();
    serve->add_option("--weights", weights_path, "weight container")->required();

    auto* bench = app.add_subcommand("bench", "wall-clock decoder timing (informational)");
    bench->add_option("--variant", variant, "decoder variant: d | jd");
    bench->add_option("--dim", dim, "internal dimension d");
    bench->add_option("--classes", classes, "class count S");
    bench->add_option("--res", res, "image resolution WIDTHxHEIGHT");
    bench->add_option("--iters", iters, "iteration count");
    bench->add_option("--seed", seed, "PRNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (init->parsed()) {
            return cmd_init(variant, dim, classes, groups, seed, out_weights, out_config);
        }
        if (inspect->parsed()) return cmd_inspect(weights_path);
        if (analyze->parsed()) {
            return cmd_analyze(variant, dim, classes, res, table3, backbone_gflops, out_csv,
                               out_json);
        }
        if (encode_cmd->parsed()) {
            return cmd_encode(in_path, config_path, weights_path, out_path, stats_path);
        }
        if (decode_cmd->parsed()) {
            return cmd_decode(in_path, config_path, weights_path, out_path);
        }
        if (roundtrip->parsed()) {
            return cmd_roundtrip(in_path, config_path, weights_path, trials, seed);
        }
        if (segment_cmd->parsed()) {
            return cmd_segment(topology, image_path, config_path, weights_path, addr, out_map,
                               stats_path, payload_only);
        }
        if (serve->parsed()) return cmd_serve(addr, config_path, weights_path);
        if (bench->parsed()) return cmd_bench(variant, dim, classes, res, iters, seed);
    } catch (const VerifyError& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return kExitVerify;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const CodecError& e) {
        std::cerr << "codec error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
