#include "opsd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace opsd::lm {
namespace {

constexpr char kMagic[8] = {'O', 'P', 'S', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    const ModelConfig& c = ckpt.config;
    write_pod<std::int32_t>(out, c.vocab_size);
    write_pod<std::int32_t>(out, c.context_length);
    write_pod<std::int32_t>(out, c.embed_dim);
    write_pod<std::int32_t>(out, c.num_layers);
    write_pod<std::int32_t>(out, c.num_heads);
    write_pod<std::int32_t>(out, c.mlp_multiplier);
    write_pod<std::uint64_t>(out, c.seed);
    write_pod<std::uint64_t>(out, ckpt.step);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& [name, t] : ckpt.arrays) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) write_pod<std::int32_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.config.vocab_size = read_pod<std::int32_t>(in);
    ckpt.config.context_length = read_pod<std::int32_t>(in);
    ckpt.config.embed_dim = read_pod<std::int32_t>(in);
    ckpt.config.num_layers = read_pod<std::int32_t>(in);
    ckpt.config.num_heads = read_pod<std::int32_t>(in);
    ckpt.config.mlp_multiplier = read_pod<std::int32_t>(in);
    ckpt.config.seed = read_pod<std::uint64_t>(in);
    ckpt.step = read_pod<std::uint64_t>(in);
    auto count = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        auto ndim = read_pod<std::uint32_t>(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = read_pod<std::int32_t>(in);
        auto n = static_cast<std::size_t>(Tensor<float>::count(shape));
        std::vector<float> data(n);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw std::runtime_error("load_checkpoint: truncated array " + name);
        ckpt.arrays[name] = Tensor<float>(std::move(shape), std::move(data));
    }
    return ckpt;
}

std::uint64_t params_hash(const ParameterSet<float>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, t] : params) {
        mix(name.data(), name.size());
        mix(t.data.data(), t.data.size() * sizeof(float));
    }
    return h;
}

}  // namespace opsd::lm
