#include "lesionseg/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>

#include "lesionseg/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace lesionseg {

namespace {

constexpr char kMagic[4] = {'L', 'S', 'G', 'W'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
    std::FILE* fp;
    void bytes(const void* p, std::size_t n) {
        if (std::fwrite(p, 1, n, fp) != n) throw DataError("checkpoint write failed");
    }
    void u16(std::uint16_t v) { bytes(&v, 2); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f32(float v) { bytes(&v, 4); }
};

struct Reader {
    std::FILE* fp;
    std::string path;
    void bytes(void* p, std::size_t n) {
        if (std::fread(p, 1, n, fp) != n) throw DataError("truncated checkpoint: " + path);
    }
    std::uint16_t u16() {
        std::uint16_t v;
        bytes(&v, 2);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    float f32() {
        float v;
        bytes(&v, 4);
        return v;
    }
};

struct FileCloser {
    std::FILE* fp;
    ~FileCloser() {
        if (fp) std::fclose(fp);
    }
};

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::FILE* fp = std::fopen(tmp.string().c_str(), "wb");
        if (!fp) throw DataError("cannot write " + path.string());
        FileCloser closer{fp};
        Writer w{fp};
        w.bytes(kMagic, 4);
        w.u32(kVersion);
        w.u32(ckpt.cycle);
        w.u32(ckpt.epoch);
        w.f32(ckpt.lr);
        w.bytes(ckpt.config_digest.data(), 32);
        w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
        for (const auto& [name, t] : ckpt.params) {
            w.u16(static_cast<std::uint16_t>(name.size()));
            w.bytes(name.data(), name.size());
            const std::uint8_t ndim = static_cast<std::uint8_t>(t.rank);
            w.bytes(&ndim, 1);
            for (int d = 0; d < t.rank; ++d) w.u32(static_cast<std::uint32_t>(t.shape[d]));
            w.bytes(t.data.data(), t.data.size() * sizeof(float));
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw DataError("cannot open checkpoint: " + path.string());
    FileCloser closer{fp};
    Reader r{fp, path.string()};

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad magic in checkpoint: " + path.string());
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " +
                        path.string() + " (expected " + std::to_string(kVersion) + ")");

    Checkpoint ckpt;
    ckpt.cycle = r.u32();
    ckpt.epoch = r.u32();
    ckpt.lr = r.f32();
    r.bytes(ckpt.config_digest.data(), 32);
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        std::uint8_t ndim;
        r.bytes(&ndim, 1);
        if (ndim < 1 || ndim > 4)
            throw DataError("checkpoint tensor '" + name + "' has unsupported rank " +
                            std::to_string(ndim));
        Tensor t;
        t.rank = ndim;
        t.shape = {1, 1, 1, 1};
        std::size_t total = 1;
        for (int d = 0; d < ndim; ++d) {
            t.shape[d] = static_cast<int>(r.u32());
            total *= static_cast<std::size_t>(t.shape[d]);
        }
        t.data.resize(total);
        r.bytes(t.data.data(), total * sizeof(float));
        ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

} // namespace lesionseg
