#include "wlft/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

namespace wlft {

namespace {

constexpr char kMagic[4] = {'W', 'L', 'F', 'T'};

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u32(std::FILE* f, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4) throw DataError("checkpoint: write failure");
}

std::uint32_t get_u32(std::FILE* f, const std::string& path) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) throw DataError("checkpoint truncated: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CkptRecord>& records) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    if (std::fwrite(kMagic, 1, 4, f.get()) != 4) throw DataError("checkpoint: write failure");
    put_u32(f.get(), kCheckpointVersion);
    put_u32(f.get(), static_cast<std::uint32_t>(records.size()));
    for (const CkptRecord& r : records) {
        put_u32(f.get(), static_cast<std::uint32_t>(r.name.size()));
        if (std::fwrite(r.name.data(), 1, r.name.size(), f.get()) != r.name.size())
            throw DataError("checkpoint: write failure");
        put_u32(f.get(), static_cast<std::uint32_t>(r.shape.size()));
        std::int64_t numel = 1;
        for (int d : r.shape) {
            put_u32(f.get(), static_cast<std::uint32_t>(d));
            numel *= d;
        }
        if (numel != static_cast<std::int64_t>(r.data.size()))
            throw DataError("checkpoint: record " + r.name + " payload does not match its shape");
        for (float v : r.data) put_u32(f.get(), std::bit_cast<std::uint32_t>(v));
    }
    if (std::fflush(f.get()) != 0) throw DataError("checkpoint: write failure");
}

std::vector<CkptRecord> load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(f.get(), path);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const std::uint32_t count = get_u32(f.get(), path);
    std::vector<CkptRecord> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CkptRecord r;
        const std::uint32_t name_len = get_u32(f.get(), path);
        r.name.resize(name_len);
        if (name_len && std::fread(r.name.data(), 1, name_len, f.get()) != name_len)
            throw DataError("checkpoint truncated: " + path);
        const std::uint32_t rank = get_u32(f.get(), path);
        std::int64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            r.shape.push_back(static_cast<int>(get_u32(f.get(), path)));
            numel *= r.shape.back();
        }
        r.data.resize(static_cast<std::size_t>(numel));
        for (float& v : r.data) v = std::bit_cast<float>(get_u32(f.get(), path));
        records.push_back(std::move(r));
    }
    return records;
}

const CkptRecord* find_record(const std::vector<CkptRecord>& records, const std::string& name) {
    for (const CkptRecord& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

}  // namespace wlft
