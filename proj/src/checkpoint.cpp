#include "dcedseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dcedseg/error.hpp"

namespace dcedseg {

namespace {

constexpr char kMagic[8] = {'D', 'C', 'E', 'D', 'C', 'K', 'P', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint container is written little-endian");

void put_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw IoError("truncated checkpoint", path);
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
                     const std::string& metadata) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing", path.string());

    out.write(kMagic, sizeof(kMagic));
    put_u64(out, metadata.size());
    out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    put_u64(out, tensors.size());
    for (const NamedTensor& nt : tensors) {
        put_u64(out, nt.name.size());
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        put_u64(out, nt.tensor->shape.size());
        for (std::int64_t d : nt.tensor->shape) put_u64(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(nt.tensor->data.data()),
                  static_cast<std::streamsize>(nt.tensor->data.size() * sizeof(double)));
    }
    out.close();
    if (!out) throw IoError("failed writing checkpoint", path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint", path.string());

    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a checkpoint file (bad magic)", path.string());

    LoadedCheckpoint ckpt;
    const auto meta_len = get_u64(in, path.string());
    ckpt.metadata.resize(meta_len);
    if (meta_len && !in.read(ckpt.metadata.data(), static_cast<std::streamsize>(meta_len)))
        throw IoError("truncated checkpoint metadata", path.string());

    const auto count = get_u64(in, path.string());
    ckpt.tensors.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = get_u64(in, path.string());
        std::string name(name_len, '\0');
        if (name_len && !in.read(name.data(), static_cast<std::streamsize>(name_len)))
            throw IoError("truncated tensor name", path.string());
        const auto ndim = get_u64(in, path.string());
        std::vector<std::int64_t> shape(ndim);
        for (auto& d : shape) d = static_cast<std::int64_t>(get_u64(in, path.string()));
        Tensor t(shape);
        if (!in.read(reinterpret_cast<char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(double))))
            throw IoError("truncated tensor data for " + name, path.string());
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

}  // namespace dcedseg
