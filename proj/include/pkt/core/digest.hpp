#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace pkt {

using Digest = std::array<std::uint8_t, 32>;

std::string to_hex(const Digest& d);
Digest digest_from_hex(std::string_view hex);

/// Incremental SHA-256.
class Sha256 {
   public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::span<const std::uint8_t> bytes);
    void update(std::string_view text);
    Digest finish();

   private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pkt
