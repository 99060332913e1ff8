#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace lesionseg {

std::array<std::uint8_t, 32> sha256(const void* data, std::size_t len);

inline std::array<std::uint8_t, 32> sha256(const std::string& s) { return sha256(s.data(), s.size()); }

} // namespace lesionseg
