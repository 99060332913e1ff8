#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "lesionseg/net.hpp"

namespace lesionseg {

// A snapshot: the full parameter table (including batch-norm running stats)
// plus training metadata.
struct Checkpoint {
    Params params;
    std::uint32_t cycle = 0;
    std::uint32_t epoch = 0;
    float lr = 0.0f;
    std::array<std::uint8_t, 32> config_digest{};
};

// Binary format, little-endian: magic "LSGW", version u32, cycle u32,
// epoch u32, lr f32, digest 32 bytes, tensor count u32, then per tensor:
// name length u16 + UTF-8 name, ndim u8, dims u32 each, raw f32 data.
// The round trip is bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace lesionseg
