#pragma once
// Checkpoint file IO. Layout: 8-byte magic "MNTE0001", a 32-bit little-endian
// length-prefixed UTF-8 JSON manifest, then the raw little-endian f32 payload
// holding every parameter and state buffer in declaration order.
// save -> load -> save round-trips byte-identically.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentee/errors.hpp"
#include "mentee/network.hpp"

namespace mentee {

inline constexpr char kCheckpointMagic[8] = {'M', 'N', 'T', 'E', '0', '0', '0', '1'};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epoch = 0;
    bool frozen_eligible = true;
    json metrics = json::object();
};

namespace detail {

inline void gather_payload(Network<float>& net, std::vector<float>& out) {
    out.clear();
    for (auto& p : net.all_params()) out.insert(out.end(), p.value->begin(), p.value->end());
    for (auto* b : net.state_buffers()) out.insert(out.end(), b->begin(), b->end());
}

inline void scatter_payload(Network<float>& net, const std::vector<float>& in) {
    std::size_t off = 0;
    for (auto& p : net.all_params()) {
        std::copy(in.begin() + off, in.begin() + off + p.value->size(), p.value->begin());
        off += p.value->size();
    }
    for (auto* b : net.state_buffers()) {
        std::copy(in.begin() + off, in.begin() + off + b->size(), b->begin());
        off += b->size();
    }
}

} // namespace detail

inline json checkpoint_manifest(Network<float>& net, const CheckpointMeta& meta) {
    json m;
    m["format"] = "MNTE0001";
    m["dtype"] = "f32";
    m["input_shape"] = net.input_shape();
    json layers = json::array();
    for (const auto& s : net.specs()) layers.push_back(s.to_json());
    m["layers"] = layers;
    m["param_elems"] = net.param_count();
    m["seed"] = meta.seed;
    m["epoch"] = meta.epoch;
    m["frozen_eligible"] = meta.frozen_eligible;
    m["metrics"] = meta.metrics;
    return m;
}

inline void save_checkpoint(Network<float>& net, const std::filesystem::path& path,
                            const CheckpointMeta& meta = {}) {
    const std::string manifest = checkpoint_manifest(net, meta).dump();
    std::vector<float> payload;
    detail::gather_payload(net, payload);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + path.string());
    f.write(kCheckpointMagic, 8);
    const std::uint32_t len = static_cast<std::uint32_t>(manifest.size());
    char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
    f.write(lenb, 4);
    f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!f) throw Error("short write on checkpoint " + path.string());
}

struct LoadedCheckpoint {
    Network<float> net;
    CheckpointMeta meta;
    json manifest;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read checkpoint " + path.string());
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw CorruptCheckpoint(path.string() + ": bad magic");
    char lenb[4];
    if (!f.read(lenb, 4)) throw CorruptCheckpoint(path.string() + ": truncated header");
    const std::uint32_t len = (static_cast<std::uint32_t>(static_cast<unsigned char>(lenb[0]))) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(lenb[1])) << 8) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(lenb[2])) << 16) |
                              (static_cast<std::uint32_t>(static_cast<unsigned char>(lenb[3])) << 24);
    std::string manifest_text(len, '\0');
    if (!f.read(manifest_text.data(), len)) throw CorruptCheckpoint(path.string() + ": truncated manifest");

    json manifest;
    try {
        manifest = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw CorruptCheckpoint(path.string() + ": manifest parse: " + e.what());
    }
    if (manifest.value("dtype", "") != "f32")
        throw ManifestMismatch(path.string() + ": unsupported dtype");

    Shape input_shape = manifest.at("input_shape").get<Shape>();
    std::vector<LayerSpec> specs;
    for (const auto& lj : manifest.at("layers")) specs.push_back(LayerSpec::from_json(lj));

    LoadedCheckpoint out{Network<float>(input_shape, specs), {}, manifest};
    const std::size_t declared = manifest.at("param_elems").get<std::size_t>();
    const std::size_t derived = out.net.param_count();
    if (declared != derived)
        throw ManifestMismatch(path.string() + ": manifest declares " + std::to_string(declared) +
                               " elements, layers imply " + std::to_string(derived));

    std::vector<float> payload(derived);
    if (!f.read(reinterpret_cast<char*>(payload.data()),
                static_cast<std::streamsize>(derived * sizeof(float))))
        throw CorruptCheckpoint(path.string() + ": truncated payload");
    // trailing bytes mean the file does not match its manifest either
    char extra;
    if (f.read(&extra, 1)) throw CorruptCheckpoint(path.string() + ": trailing bytes after payload");

    detail::scatter_payload(out.net, payload);
    out.meta.seed = manifest.value("seed", std::uint64_t{0});
    out.meta.epoch = manifest.value("epoch", 0);
    out.meta.frozen_eligible = manifest.value("frozen_eligible", true);
    out.meta.metrics = manifest.value("metrics", json::object());
    return out;
}

// In-memory snapshot of parameters and state buffers, used by the rolling
// epoch checkpoint and the recovery rule.
template <class T>
struct ParamSnapshot {
    std::vector<T> values;

    static ParamSnapshot capture(Network<T>& net) {
        ParamSnapshot s;
        for (auto& p : net.all_params()) s.values.insert(s.values.end(), p.value->begin(), p.value->end());
        for (auto* b : net.state_buffers()) s.values.insert(s.values.end(), b->begin(), b->end());
        return s;
    }

    void restore(Network<T>& net) const {
        std::size_t off = 0;
        for (auto& p : net.all_params()) {
            std::copy(values.begin() + off, values.begin() + off + p.value->size(), p.value->begin());
            off += p.value->size();
        }
        for (auto* b : net.state_buffers()) {
            std::copy(values.begin() + off, values.begin() + off + b->size(), b->begin());
            off += b->size();
        }
    }
};

} // namespace mentee
