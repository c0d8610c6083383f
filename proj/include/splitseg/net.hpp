#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "splitseg/codec.hpp"
#include "splitseg/model.hpp"

namespace splitseg {

enum class Topology { in_car_baseline, in_car_jd, distributed_baseline, distributed_jd };

Topology topology_from_name(const std::string& name);
std::string topology_name(Topology t);
bool topology_is_distributed(Topology t);

/// Wire accounting for one session. bytes_sent is the serialized Bitstream
/// (header + both payloads); bpp = 8 * bytes / (H * W), optionally counting
/// payload bytes only.
struct ChannelStats {
    uint64_t bytes_sent = 0;
    uint64_t header_bytes = 0;
    uint64_t payload_bytes = 0;

    double bpp(int image_height, int image_width, bool payload_only = false) const;
    std::string to_json(int image_height, int image_width) const;
};

/// Framing: [payload length u32 LE][type u8][payload]. The length field
/// counts the payload only.
enum class FrameType : uint8_t { bitstream = 1, segmap = 2, error = 3 };

inline constexpr std::size_t kDefaultMaxFramePayload = 256ull << 20;  // 256 MiB
inline constexpr std::size_t kFrameHeaderSize = 5;

struct Frame {
    FrameType type;
    std::vector<uint8_t> payload;
};

std::vector<uint8_t> frame_message(FrameType type, std::span<const uint8_t> payload,
                                   std::size_t max_payload = kDefaultMaxFramePayload);
/// Exact inverse of frame_message; rejects truncated or oversized input.
Frame unframe_message(std::span<const uint8_t> bytes,
                      std::size_t max_payload = kDefaultMaxFramePayload);

/// SegMap reply body: H u32, W u32, one u8 label per pixel (requires S <= 255).
std::vector<uint8_t> segmap_payload(const SegMap& map);
SegMap parse_segmap_payload(std::span<const uint8_t> bytes);

std::vector<uint8_t> error_payload(uint16_t code, const std::string& message);
std::pair<uint16_t, std::string> parse_error_payload(std::span<const uint8_t> bytes);

struct SessionConfig {
    Topology topology = Topology::in_car_jd;
    std::string address;  // host:port, distributed topologies only
    bool payload_only_bpp = false;
};

struct ClientResult {
    ChannelStats stats;
    SegMap map;
};

/// Runs a topology entirely in-process. Distributed topologies still run the
/// full encode -> decode path and report the stats the wire would carry.
ClientResult run_local(const Pipeline& pipeline, Topology topology, const Tensor& image);

/// In-car topologies compute locally; distributed ones send one Bitstream
/// frame to cfg.address and wait for one SegMap frame.
ClientResult run_client(const SessionConfig& cfg, const Pipeline& pipeline, const Tensor& image);

/// Cloud side: per request, parse Bitstream, decode, run the decoder for the
/// loaded variant, reply with a SegMap frame. Malformed requests get an error
/// frame and the connection stays usable. Stateless across requests.
class Server {
public:
    Server(Pipeline pipeline, const std::string& address);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    void start();
    void stop();
    int port() const { return port_; }

private:
    void accept_loop();
    void serve_connection(int fd);

    Pipeline pipeline_;
    uint32_t model_id_ = 0;
    std::string host_;
    int requested_port_ = 0;
    int port_ = 0;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex state_mutex_;  // guards workers_ and connection_fds_
    std::vector<std::thread> workers_;
    std::vector<int> connection_fds_;
};

/// Blocking convenience wrapper for the CLI.
void run_server(Pipeline pipeline, const std::string& address);

std::pair<std::string, int> parse_address(const std::string& address);

}  // namespace splitseg
