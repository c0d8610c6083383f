#include "splitseg/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <mutex>
#include <sstream>

#include "splitseg/container.hpp"

namespace splitseg {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(std::span<const uint8_t> b, std::size_t at) {
    return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
           (static_cast<uint32_t>(b[at + 2]) << 16) | (static_cast<uint32_t>(b[at + 3]) << 24);
}

void require_image(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("expected a 3 x H x W image tensor");
    }
    if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0) {
        throw ShapeError("image dims " + std::to_string(image.dim(1)) + "x" +
                         std::to_string(image.dim(2)) + " must be divisible by 32");
    }
}

SegMap segment_decoded(const Pipeline& p, const QTensor& r_hat) {
    const Tensor features = r_hat.to_float();
    if (p.config.variant == DecoderVariant::baseline_d) {
        return segment(p.decoder, feature_decode(features, p.feature)).map;
    }
    return segment(p.decoder, features).map;
}

// --- socket plumbing ---

void write_all(int fd, const uint8_t* data, std::size_t n) {
    while (n > 0) {
        const ssize_t sent = ::send(fd, data, n, MSG_NOSIGNAL);
        if (sent <= 0) throw ProtocolError("socket write failed: " + std::string(strerror(errno)));
        data += sent;
        n -= static_cast<std::size_t>(sent);
    }
}

// Returns false on clean EOF before the first byte.
bool read_exact(int fd, uint8_t* data, std::size_t n, bool eof_ok_at_start) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, data + got, n - got, 0);
        if (r == 0) {
            if (got == 0 && eof_ok_at_start) return false;
            throw ProtocolError("peer closed mid-frame");
        }
        if (r < 0) throw ProtocolError("socket read failed: " + std::string(strerror(errno)));
        got += static_cast<std::size_t>(r);
    }
    return true;
}

// Reads one frame; false on clean EOF at a frame boundary.
bool read_frame(int fd, Frame& frame, std::size_t max_payload = kDefaultMaxFramePayload) {
    uint8_t head[kFrameHeaderSize];
    if (!read_exact(fd, head, sizeof(head), true)) return false;
    const uint32_t len = get_u32(std::span(head, sizeof(head)), 0);
    if (len > max_payload) throw ProtocolError("frame payload exceeds limit");
    const uint8_t type = head[4];
    if (type < 1 || type > 3) throw ProtocolError("unknown frame type " + std::to_string(type));
    frame.type = static_cast<FrameType>(type);
    frame.payload.resize(len);
    if (len > 0) read_exact(fd, frame.payload.data(), len, false);
    return true;
}

void send_frame(int fd, FrameType type, std::span<const uint8_t> payload) {
    const std::vector<uint8_t> wire = frame_message(type, payload);
    write_all(fd, wire.data(), wire.size());
}

struct FdGuard {
    int fd;
    explicit FdGuard(int fd_) : fd(fd_) {}
    ~FdGuard() {
        if (fd >= 0) ::close(fd);
    }
    FdGuard(const FdGuard&) = delete;
    FdGuard& operator=(const FdGuard&) = delete;
};

int connect_to(const std::string& address) {
    const auto [host, port] = parse_address(address);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result);
    if (rc != 0) throw ProtocolError("cannot resolve '" + host + "': " + gai_strerror(rc));

    int fd = -1;
    for (addrinfo* ai = result; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(result);
    if (fd < 0) throw ProtocolError("cannot connect to " + address);
    return fd;
}

}  // namespace

Topology topology_from_name(const std::string& name) {
    if (name == "in-car-baseline") return Topology::in_car_baseline;
    if (name == "in-car-jd") return Topology::in_car_jd;
    if (name == "distributed-baseline") return Topology::distributed_baseline;
    if (name == "distributed-jd") return Topology::distributed_jd;
    throw ProtocolError("unknown topology '" + name + "'");
}

std::string topology_name(Topology t) {
    switch (t) {
        case Topology::in_car_baseline: return "in-car-baseline";
        case Topology::in_car_jd: return "in-car-jd";
        case Topology::distributed_baseline: return "distributed-baseline";
        case Topology::distributed_jd: return "distributed-jd";
    }
    return "?";
}

bool topology_is_distributed(Topology t) {
    return t == Topology::distributed_baseline || t == Topology::distributed_jd;
}

double ChannelStats::bpp(int image_height, int image_width, bool payload_only) const {
    const double bytes =
        payload_only ? static_cast<double>(payload_bytes) : static_cast<double>(bytes_sent);
    return 8.0 * bytes / (static_cast<double>(image_height) * image_width);
}

std::string ChannelStats::to_json(int image_height, int image_width) const {
    std::ostringstream out;
    out << "{\n";
    out << "  \"bytes_sent\": " << bytes_sent << ",\n";
    out << "  \"header_bytes\": " << header_bytes << ",\n";
    out << "  \"payload_bytes\": " << payload_bytes << ",\n";
    out << "  \"bpp\": " << bpp(image_height, image_width) << ",\n";
    out << "  \"bpp_payload_only\": " << bpp(image_height, image_width, true) << "\n";
    out << "}\n";
    return out.str();
}

std::vector<uint8_t> frame_message(FrameType type, std::span<const uint8_t> payload,
                                   std::size_t max_payload) {
    if (payload.size() > max_payload) throw ProtocolError("frame payload exceeds limit");
    std::vector<uint8_t> out;
    out.reserve(kFrameHeaderSize + payload.size());
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.push_back(static_cast<uint8_t>(type));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Frame unframe_message(std::span<const uint8_t> bytes, std::size_t max_payload) {
    if (bytes.size() < kFrameHeaderSize) throw ProtocolError("frame: truncated header");
    const uint32_t len = get_u32(bytes, 0);
    if (len > max_payload) throw ProtocolError("frame: payload exceeds limit");
    const uint8_t type = bytes[4];
    if (type < 1 || type > 3) throw ProtocolError("frame: unknown type " + std::to_string(type));
    if (bytes.size() != kFrameHeaderSize + len) {
        throw ProtocolError("frame: expected " + std::to_string(kFrameHeaderSize + len) +
                            " bytes, got " + std::to_string(bytes.size()));
    }
    Frame f;
    f.type = static_cast<FrameType>(type);
    f.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
    return f;
}

std::vector<uint8_t> segmap_payload(const SegMap& map) {
    std::vector<uint8_t> out;
    out.reserve(8 + map.labels.size());
    put_u32(out, static_cast<uint32_t>(map.height));
    put_u32(out, static_cast<uint32_t>(map.width));
    for (uint16_t label : map.labels) {
        if (label > 255) throw ProtocolError("segmap payload requires labels <= 255");
        out.push_back(static_cast<uint8_t>(label));
    }
    return out;
}

SegMap parse_segmap_payload(std::span<const uint8_t> bytes) {
    if (bytes.size() < 8) throw ProtocolError("segmap payload: truncated header");
    SegMap map;
    map.height = static_cast<int>(get_u32(bytes, 0));
    map.width = static_cast<int>(get_u32(bytes, 4));
    const std::size_t n = static_cast<std::size_t>(map.height) * map.width;
    if (bytes.size() != 8 + n) throw ProtocolError("segmap payload: size mismatch");
    map.labels.assign(bytes.begin() + 8, bytes.end());
    return map;
}

std::vector<uint8_t> error_payload(uint16_t code, const std::string& message) {
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(code));
    out.push_back(static_cast<uint8_t>(code >> 8));
    out.insert(out.end(), message.begin(), message.end());
    return out;
}

std::pair<uint16_t, std::string> parse_error_payload(std::span<const uint8_t> bytes) {
    if (bytes.size() < 2) throw ProtocolError("error payload: truncated");
    const uint16_t code = static_cast<uint16_t>(bytes[0] | (bytes[1] << 8));
    return {code, std::string(bytes.begin() + 2, bytes.end())};
}

std::pair<std::string, int> parse_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
        throw ProtocolError("address must be host:port, got '" + address + "'");
    }
    const std::string host = address.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(address.substr(colon + 1));
    } catch (const std::exception&) {
        throw ProtocolError("bad port in address '" + address + "'");
    }
    if (port < 0 || port > 65535) throw ProtocolError("port out of range in '" + address + "'");
    return {host, port};
}

ClientResult run_local(const Pipeline& pipeline, Topology topology, const Tensor& image) {
    require_image(image);
    const int h = image.dim(1), w = image.dim(2);

    ClientResult result;
    const Tensor z = stub_encode(image, pipeline.stub);

    switch (topology) {
        case Topology::in_car_baseline:
            result.map = segment(pipeline.decoder, z).map;
            return result;
        case Topology::in_car_jd:
            result.map = segment(pipeline.decoder, feature_encode(z, pipeline.feature)).map;
            return result;
        default: break;
    }

    const Tensor r = feature_encode(z, pipeline.feature);
    const CodecContext ctx = make_codec_context(pipeline.factorized_scales);
    const uint32_t model_id = pipeline_id(pipeline);
    const Bitstream bs = encode(r, pipeline.hyper, ctx.factorized, ctx.gaussian, model_id, h, w);
    result.stats.header_bytes = BitstreamHeader::kSize;
    result.stats.payload_bytes = bs.hyper_payload.size() + bs.latent_payload.size();
    result.stats.bytes_sent = bs.total_bytes();

    const QTensor r_hat = decode(bs, pipeline.hyper, ctx.factorized, ctx.gaussian, model_id);
    result.map = segment_decoded(pipeline, r_hat);
    return result;
}

ClientResult run_client(const SessionConfig& cfg, const Pipeline& pipeline, const Tensor& image) {
    if (!topology_is_distributed(cfg.topology)) {
        return run_local(pipeline, cfg.topology, image);
    }
    require_image(image);
    const int h = image.dim(1), w = image.dim(2);

    const Tensor z = stub_encode(image, pipeline.stub);
    const Tensor r = feature_encode(z, pipeline.feature);
    const CodecContext ctx = make_codec_context(pipeline.factorized_scales);
    const Bitstream bs =
        encode(r, pipeline.hyper, ctx.factorized, ctx.gaussian, pipeline_id(pipeline), h, w);
    const std::vector<uint8_t> message = bs.serialize();

    const int fd = connect_to(cfg.address);
    FdGuard guard(fd);
    send_frame(fd, FrameType::bitstream, message);

    Frame reply;
    if (!read_frame(fd, reply)) throw ProtocolError("server closed without replying");
    if (reply.type == FrameType::error) {
        const auto [code, text] = parse_error_payload(reply.payload);
        throw ProtocolError("server error " + std::to_string(code) + ": " + text);
    }
    if (reply.type != FrameType::segmap) throw ProtocolError("unexpected reply frame type");

    ClientResult result;
    result.map = parse_segmap_payload(reply.payload);
    result.stats.header_bytes = BitstreamHeader::kSize;
    result.stats.payload_bytes = bs.hyper_payload.size() + bs.latent_payload.size();
    result.stats.bytes_sent = message.size();
    return result;
}

Server::Server(Pipeline pipeline, const std::string& address) : pipeline_(std::move(pipeline)) {
    model_id_ = pipeline_id(pipeline_);
    const auto [host, port] = parse_address(address);
    host_ = host;
    requested_port_ = port;
}

Server::~Server() { stop(); }

void Server::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw ProtocolError("cannot create socket");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(requested_port_));
    if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
        if (host_ == "localhost") {
            addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        } else {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw ProtocolError("cannot parse bind address '" + host_ + "'");
        }
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw ProtocolError("cannot bind " + host_ + ":" + std::to_string(requested_port_) + ": " +
                            strerror(errno));
    }
    if (::listen(listen_fd_, 16) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw ProtocolError("listen failed");
    }

    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);

    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(state_mutex_);
        for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
        workers.swap(workers_);
    }
    for (std::thread& t : workers) {
        if (t.joinable()) t.join();
    }
}

void Server::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (!running_) break;
            continue;
        }
        std::lock_guard lock(state_mutex_);
        connection_fds_.push_back(fd);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void Server::serve_connection(int fd) {
    FdGuard guard(fd);
    const CodecContext ctx = make_codec_context(pipeline_.factorized_scales);
    Frame frame;
    while (running_) {
        try {
            if (!read_frame(fd, frame)) return;  // clean close
        } catch (const ProtocolError&) {
            return;  // cannot resync a broken framing layer
        }
        try {
            if (frame.type != FrameType::bitstream) {
                throw ProtocolError("expected a bitstream frame");
            }
            const Bitstream bs = Bitstream::parse(frame.payload);
            const QTensor r_hat = decode(bs, pipeline_.hyper, ctx.factorized, ctx.gaussian,
                                         model_id_);
            const SegMap map = segment_decoded(pipeline_, r_hat);
            send_frame(fd, FrameType::segmap, segmap_payload(map));
        } catch (const CodecError& e) {
            send_frame(fd, FrameType::error, error_payload(4, e.what()));
        } catch (const ProtocolError& e) {
            send_frame(fd, FrameType::error, error_payload(4, e.what()));
        } catch (const ShapeError& e) {
            send_frame(fd, FrameType::error, error_payload(4, e.what()));
        }
    }
}

void run_server(Pipeline pipeline, const std::string& address) {
    Server server(std::move(pipeline), address);
    server.start();
    while (true) std::this_thread::sleep_for(std::chrono::seconds(1));
}

}  // namespace splitseg
