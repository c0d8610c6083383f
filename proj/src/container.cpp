#include "splitseg/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splitseg {

namespace {

constexpr uint16_t kTensorVersion = 1;
constexpr uint16_t kContainerVersion = 1;

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

class Reader {
public:
    Reader(std::span<const uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16() {
        auto b = take(2);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }
    uint32_t u32() {
        auto b = take(4);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        auto b = take(n);
        return std::string(reinterpret_cast<const char*>(b.data()), n);
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const uint8_t> take(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw IoError(std::string(what_) + ": truncated at byte " + std::to_string(pos_));
        }
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const uint8_t> bytes_;
    std::size_t pos_ = 0;
    const char* what_;
};

void write_tensor_body(std::vector<uint8_t>& out, const Tensor& t) {
    if (t.rank() > 255) throw IoError("tensor rank exceeds u8");
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
    for (float v : t.values()) put_f32(out, v);
}

Tensor read_tensor_body(Reader& r) {
    const int rank = r.u8();
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int i = 0; i < rank; ++i) {
        const uint32_t d = r.u32();
        if (d > (1u << 28)) throw IoError("tensor dimension out of bounds");
        shape[i] = static_cast<int>(d);
    }
    const std::size_t n = shape_volume(shape);
    std::vector<float> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = r.f32();
    return Tensor(std::move(shape), std::move(data));
}

void init_bn_from(const WeightContainer& c, BatchNormSpec& bn, const std::string& name) {
    bn.mean = c.get(name + ".mean");
    bn.variance = c.get(name + ".var");
    bn.gamma = c.get(name + ".gamma");
    bn.beta = c.get(name + ".beta");
}

void pack_bn(WeightContainer& c, const BatchNormSpec& bn, const std::string& name) {
    c.put(name + ".mean", bn.mean);
    c.put(name + ".var", bn.variance);
    c.put(name + ".gamma", bn.gamma);
    c.put(name + ".beta", bn.beta);
}

void pack_conv(WeightContainer& c, const ConvSpec& conv, const std::string& name) {
    c.put(name + ".weight", conv.weights);
    c.put(name + ".bias", conv.bias);
}

void load_conv(const WeightContainer& c, ConvSpec& conv, const std::string& name) {
    conv.weights = c.get(name + ".weight");
    conv.bias = c.get(name + ".bias");
}

}  // namespace

std::vector<uint8_t> tensor_to_bytes(const Tensor& t) {
    std::vector<uint8_t> out;
    out.reserve(16 + t.size() * 4);
    out.insert(out.end(), {'S', 'S', 'T', 'N'});
    put_u16(out, kTensorVersion);
    write_tensor_body(out, t);
    return out;
}

Tensor tensor_from_bytes(std::span<const uint8_t> bytes) {
    Reader r(bytes, "tensor file");
    if (r.str(4) != "SSTN") throw IoError("tensor file: bad magic");
    const uint16_t version = r.u16();
    if (version != kTensorVersion) {
        throw IoError("tensor file: unsupported version " + std::to_string(version));
    }
    Tensor t = read_tensor_body(r);
    if (!r.done()) throw IoError("tensor file: trailing bytes");
    return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    write_file(path, tensor_to_bytes(t));
}

Tensor load_tensor(const std::filesystem::path& path) { return tensor_from_bytes(read_file(path)); }

void WeightContainer::put(const std::string& name, Tensor t) {
    if (name.empty() || name.size() > 0xFFFF) throw IoError("container: bad entry name");
    if (!entries_.emplace(name, std::move(t)).second) {
        throw IoError("container: duplicate entry '" + name + "'");
    }
}

const Tensor& WeightContainer::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw IoError("container: missing entry '" + name + "'");
    return it->second;
}

std::vector<uint8_t> WeightContainer::serialize() const {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'S', 'S', 'J', 'D'});
    put_u16(out, kContainerVersion);
    put_u32(out, static_cast<uint32_t>(entries_.size()));
    for (const auto& [name, tensor] : entries_) {
        put_u16(out, static_cast<uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        write_tensor_body(out, tensor);
    }
    return out;
}

WeightContainer WeightContainer::parse(std::span<const uint8_t> bytes) {
    Reader r(bytes, "weight container");
    if (r.str(4) != "SSJD") throw IoError("weight container: bad magic");
    const uint16_t version = r.u16();
    if (version != kContainerVersion) {
        throw IoError("weight container: unsupported version " + std::to_string(version));
    }
    const uint32_t count = r.u32();
    WeightContainer c;
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u16());
        c.put(name, read_tensor_body(r));
    }
    if (!r.done()) throw IoError("weight container: trailing bytes");
    return c;
}

void WeightContainer::save(const std::filesystem::path& path) const {
    write_file(path, serialize());
}

WeightContainer WeightContainer::load(const std::filesystem::path& path) {
    return parse(read_file(path));
}

uint32_t WeightContainer::content_id() const {
    uint32_t h = 2166136261u;
    for (uint8_t b : serialize()) {
        h ^= b;
        h *= 16777619u;
    }
    return h;
}

WeightContainer pack_pipeline(const Pipeline& p) {
    WeightContainer c;
    pack_conv(c, p.stub.conv1, "stub.conv1");
    pack_bn(c, p.stub.bn1, "stub.bn1");
    pack_conv(c, p.stub.conv2, "stub.conv2");
    pack_bn(c, p.stub.bn2, "stub.bn2");
    pack_conv(c, p.stub.conv3, "stub.conv3");

    pack_conv(c, p.feature.fe_dwconv, "fe.dwconv");
    pack_bn(c, p.feature.fe_bn1, "fe.bn1");
    pack_conv(c, p.feature.fe_conv, "fe.conv");
    pack_bn(c, p.feature.fe_bn2, "fe.bn2");
    pack_conv(c, p.feature.fd_upconv, "fd.upconv");
    pack_bn(c, p.feature.fd_bn1, "fd.bn1");
    pack_conv(c, p.feature.fd_dwupconv, "fd.dwupconv");
    pack_bn(c, p.feature.fd_bn2, "fd.bn2");

    pack_conv(c, p.hyper.he_conv1, "he.conv1");
    pack_bn(c, p.hyper.he_bn1, "he.bn1");
    pack_conv(c, p.hyper.he_conv2, "he.conv2");
    pack_bn(c, p.hyper.he_bn2, "he.bn2");
    pack_conv(c, p.hyper.hd_upconv1, "hd.upconv1");
    pack_bn(c, p.hyper.hd_bn1, "hd.bn1");
    pack_conv(c, p.hyper.hd_upconv2, "hd.upconv2");
    pack_bn(c, p.hyper.hd_bn2, "hd.bn2");

    const auto pack_attention = [&](const SelfAttentionWeights& w, const std::string& base) {
        pack_conv(c, w.query.conv, base + ".q.conv");
        pack_bn(c, w.query.bn, base + ".q.bn");
        pack_conv(c, w.key.conv, base + ".k.conv");
        pack_bn(c, w.key.bn, base + ".k.bn");
        pack_conv(c, w.value.conv, base + ".v.conv");
        pack_bn(c, w.value.bn, base + ".v.bn");
        pack_conv(c, w.out.conv, base + ".out.conv");
        pack_bn(c, w.out.bn, base + ".out.bn");
    };
    pack_attention(p.decoder.mining.stage1, "dec.cm.stage1");
    pack_attention(p.decoder.mining.stage2, "dec.cm.stage2");
    pack_conv(c, p.decoder.mining.skip, "dec.cm.skip");
    c.put("dec.cm.cross.wq.weight", p.decoder.mining.cross.w_query);
    c.put("dec.cm.cross.wq.bias", p.decoder.mining.cross.b_query);
    c.put("dec.cm.cross.wk.weight", p.decoder.mining.cross.w_key);
    c.put("dec.cm.cross.wk.bias", p.decoder.mining.cross.b_key);
    c.put("dec.cm.cross.tokens", p.decoder.mining.cross.tokens.tokens);
    if (p.decoder.has_upconv) {
        pack_conv(c, p.decoder.upconv, "dec.up");
        pack_bn(c, p.decoder.upconv_bn, "dec.up.bn");
    }
    pack_conv(c, p.decoder.head, "dec.head");

    c.put("codec.factorized.scales", p.factorized_scales);
    return c;
}

Pipeline unpack_pipeline(const WeightContainer& c, const DecoderConfig& config) {
    // Build the spec skeleton deterministically, then swap in stored tensors.
    Pipeline p = build_pipeline(config, 0);

    load_conv(c, p.stub.conv1, "stub.conv1");
    init_bn_from(c, p.stub.bn1, "stub.bn1");
    load_conv(c, p.stub.conv2, "stub.conv2");
    init_bn_from(c, p.stub.bn2, "stub.bn2");
    load_conv(c, p.stub.conv3, "stub.conv3");

    load_conv(c, p.feature.fe_dwconv, "fe.dwconv");
    init_bn_from(c, p.feature.fe_bn1, "fe.bn1");
    load_conv(c, p.feature.fe_conv, "fe.conv");
    init_bn_from(c, p.feature.fe_bn2, "fe.bn2");
    load_conv(c, p.feature.fd_upconv, "fd.upconv");
    init_bn_from(c, p.feature.fd_bn1, "fd.bn1");
    load_conv(c, p.feature.fd_dwupconv, "fd.dwupconv");
    init_bn_from(c, p.feature.fd_bn2, "fd.bn2");

    load_conv(c, p.hyper.he_conv1, "he.conv1");
    init_bn_from(c, p.hyper.he_bn1, "he.bn1");
    load_conv(c, p.hyper.he_conv2, "he.conv2");
    init_bn_from(c, p.hyper.he_bn2, "he.bn2");
    load_conv(c, p.hyper.hd_upconv1, "hd.upconv1");
    init_bn_from(c, p.hyper.hd_bn1, "hd.bn1");
    load_conv(c, p.hyper.hd_upconv2, "hd.upconv2");
    init_bn_from(c, p.hyper.hd_bn2, "hd.bn2");

    const auto load_attention = [&](SelfAttentionWeights& w, const std::string& base) {
        load_conv(c, w.query.conv, base + ".q.conv");
        init_bn_from(c, w.query.bn, base + ".q.bn");
        load_conv(c, w.key.conv, base + ".k.conv");
        init_bn_from(c, w.key.bn, base + ".k.bn");
        load_conv(c, w.value.conv, base + ".v.conv");
        init_bn_from(c, w.value.bn, base + ".v.bn");
        load_conv(c, w.out.conv, base + ".out.conv");
        init_bn_from(c, w.out.bn, base + ".out.bn");
    };
    load_attention(p.decoder.mining.stage1, "dec.cm.stage1");
    load_attention(p.decoder.mining.stage2, "dec.cm.stage2");
    load_conv(c, p.decoder.mining.skip, "dec.cm.skip");
    p.decoder.mining.cross.w_query = c.get("dec.cm.cross.wq.weight");
    p.decoder.mining.cross.b_query = c.get("dec.cm.cross.wq.bias");
    p.decoder.mining.cross.w_key = c.get("dec.cm.cross.wk.weight");
    p.decoder.mining.cross.b_key = c.get("dec.cm.cross.wk.bias");
    p.decoder.mining.cross.tokens.tokens = c.get("dec.cm.cross.tokens");
    if (p.decoder.has_upconv) {
        load_conv(c, p.decoder.upconv, "dec.up");
        init_bn_from(c, p.decoder.upconv_bn, "dec.up.bn");
    }
    load_conv(c, p.decoder.head, "dec.head");

    p.factorized_scales = c.get("codec.factorized.scales");
    if (p.factorized_scales.rank() != 1 ||
        p.factorized_scales.dim(0) != config.feature_channels()) {
        throw IoError("container: factorized scale count does not match config");
    }
    return p;
}

uint32_t pipeline_id(const Pipeline& pipeline) { return pack_pipeline(pipeline).content_id(); }

std::string config_to_text(const DecoderConfig& config) {
    std::ostringstream out;
    out << "variant=" << variant_name(config.variant) << "\n";
    out << "dim=" << config.dim << "\n";
    out << "downsample=" << config.downsample << "\n";
    out << "codec_channels=" << config.codec_channels << "\n";
    out << "groups=" << config.groups << "\n";
    out << "classes=" << config.classes << "\n";
    out << "stride=" << config.stride << "\n";
    return out.str();
}

DecoderConfig config_from_text(const std::string& text) {
    DecoderConfig config;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("config: expected key=value, got '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "variant") {
            config.variant = variant_from_name(value);
        } else if (key == "dim") {
            config.dim = std::stoi(value);
        } else if (key == "downsample") {
            config.downsample = std::stoi(value);
        } else if (key == "codec_channels") {
            config.codec_channels = std::stoi(value);
        } else if (key == "groups") {
            config.groups = std::stoi(value);
        } else if (key == "classes") {
            config.classes = std::stoi(value);
        } else if (key == "stride") {
            config.stride = std::stoi(value);
        } else {
            throw IoError("config: unknown key '" + key + "'");
        }
    }
    config.validate();
    return config;
}

void save_config(const std::filesystem::path& path, const DecoderConfig& config) {
    const std::string text = config_to_text(config);
    write_file(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

DecoderConfig load_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return config_from_text(std::string(bytes.begin(), bytes.end()));
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace splitseg
