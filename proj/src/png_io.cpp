#include "lesionseg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "lesionseg/error.hpp"

namespace lesionseg {

namespace {

struct FileHandle {
    std::FILE* fp = nullptr;
    explicit FileHandle(const std::filesystem::path& path, const char* mode)
        : fp(std::fopen(path.string().c_str(), mode)) {}
    ~FileHandle() {
        if (fp) std::fclose(fp);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

// Raw decoded PNG: `bytes` holds rows top to bottom, `channels` interleaved,
// sample size is 1 or 2 bytes (big-endian for 16-bit, as stored in the file).
struct RawPng {
    int w = 0, h = 0;
    int bit_depth = 0;
    int color_type = 0;
    int channels = 0;
    std::vector<std::uint8_t> bytes;
};

RawPng read_png(const std::filesystem::path& path) {
    FileHandle file(path, "rb");
    if (!file.fp) throw DataError("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("png decoder init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("png decoder init failed");
    }

    RawPng out;
    std::vector<png_bytep> rows;
    // libpng reports errors via longjmp back to here; everything the decode
    // touches is constructed above this point.
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("decode failure: " + path.string());
    }

    png_init_io(png, file.fp);
    png_read_info(png, info);

    out.w = static_cast<int>(png_get_image_width(png, info));
    out.h = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    out.color_type = png_get_color_type(png, info);
    out.channels = png_get_channels(png, info);

    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    out.bytes.resize(rowbytes * static_cast<std::size_t>(out.h));
    rows.resize(static_cast<std::size_t>(out.h));
    for (int y = 0; y < out.h; ++y) rows[static_cast<std::size_t>(y)] = out.bytes.data() + rowbytes * y;

    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

// Writes via a temp file and renames into place so readers never observe a
// partially written PNG.
void write_png(const std::filesystem::path& path, int w, int h, int bit_depth, int color_type,
               const std::uint8_t* bytes, std::size_t rowbytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        FileHandle file(tmp, "wb");
        if (!file.fp) throw DataError("cannot write " + path.string());

        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!png) throw DataError("png encoder init failed");
        png_infop info = png_create_info_struct(png);
        if (!info) {
            png_destroy_write_struct(&png, nullptr);
            throw DataError("png encoder init failed");
        }

        std::vector<png_bytep> rows(static_cast<std::size_t>(h));
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw DataError("encode failure: " + path.string());
        }

        png_init_io(png, file.fp);
        png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (int y = 0; y < h; ++y)
            rows[static_cast<std::size_t>(y)] = const_cast<std::uint8_t*>(bytes) + rowbytes * y;
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

ImageSample load_image(const std::filesystem::path& path) {
    const RawPng raw = read_png(path);
    if (raw.bit_depth != 8)
        throw DataError("unsupported bit depth " + std::to_string(raw.bit_depth) + " in " + path.string() +
                        " (expected 8-bit RGB or grayscale)");
    if (raw.color_type != PNG_COLOR_TYPE_RGB && raw.color_type != PNG_COLOR_TYPE_GRAY)
        throw DataError("unsupported color type in " + path.string() + " (expected 8-bit RGB or grayscale)");

    ImageSample sample;
    sample.id = path.stem().string();
    sample.pixels.h = raw.h;
    sample.pixels.w = raw.w;
    sample.pixels.data.resize(static_cast<std::size_t>(raw.h) * raw.w * 3);
    const std::size_t npx = static_cast<std::size_t>(raw.h) * raw.w;
    if (raw.color_type == PNG_COLOR_TYPE_RGB) {
        std::memcpy(sample.pixels.data.data(), raw.bytes.data(), npx * 3);
    } else {
        for (std::size_t i = 0; i < npx; ++i) {
            const std::uint8_t v = raw.bytes[i];
            sample.pixels.data[i * 3 + 0] = v;
            sample.pixels.data[i * 3 + 1] = v;
            sample.pixels.data[i * 3 + 2] = v;
        }
    }
    return sample;
}

Mask load_mask(const std::filesystem::path& path) {
    const RawPng raw = read_png(path);
    if (raw.bit_depth != 8 || raw.color_type != PNG_COLOR_TYPE_GRAY)
        throw DataError("mask must be an 8-bit grayscale PNG: " + path.string());
    Mask mask(raw.h, raw.w);
    for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] = raw.bytes[i] > 127 ? 255 : 0;
    return mask;
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(mask.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    write_png(path, mask.w, mask.h, 8, PNG_COLOR_TYPE_GRAY, bytes.data(), static_cast<std::size_t>(mask.w));
}

void save_rgb8(const ImageU8& img, const std::filesystem::path& path) {
    write_png(path, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, img.data.data(),
              static_cast<std::size_t>(img.w) * 3);
}

void save_gray8(const std::vector<std::uint8_t>& values, int h, int w,
                const std::filesystem::path& path) {
    if (values.size() != static_cast<std::size_t>(h) * w)
        throw Error("save_gray8: value count does not match h*w");
    write_png(path, w, h, 8, PNG_COLOR_TYPE_GRAY, values.data(), static_cast<std::size_t>(w));
}

ProbMap load_prob_map(const std::filesystem::path& path) {
    const RawPng raw = read_png(path);
    if (raw.bit_depth != 16 || raw.color_type != PNG_COLOR_TYPE_GRAY)
        throw DataError("probability map must be a 16-bit grayscale PNG: " + path.string());
    ProbMap map(raw.h, raw.w);
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        const unsigned v = (static_cast<unsigned>(raw.bytes[i * 2]) << 8) | raw.bytes[i * 2 + 1];
        map.data[i] = static_cast<float>(v) / 65535.0f;
    }
    return map;
}

void save_prob_map(const ProbMap& map, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(map.data.size() * 2);
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        const float p = std::clamp(map.data[i], 0.0f, 1.0f);
        const unsigned v = static_cast<unsigned>(std::lround(p * 65535.0));
        bytes[i * 2] = static_cast<std::uint8_t>(v >> 8);
        bytes[i * 2 + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
    write_png(path, map.w, map.h, 16, PNG_COLOR_TYPE_GRAY, bytes.data(),
              static_cast<std::size_t>(map.w) * 2);
}

} // namespace lesionseg
