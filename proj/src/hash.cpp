#include "curate/hash.hpp"

#include <cstring>

namespace curate {

namespace {

constexpr std::uint64_t kC1 = 0x87c37b91114253d5ULL;
constexpr std::uint64_t kC2 = 0x4cf5ad432745937fULL;

inline std::uint64_t rotl(std::uint64_t x, int r) noexcept { return (x << r) | (x >> (64 - r)); }

}  // namespace

std::uint64_t hash64(std::string_view bytes, std::uint64_t seed) noexcept {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  std::uint64_t h = seed ^ (static_cast<std::uint64_t>(n) * kC2);

  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t k;
    std::memcpy(&k, p + i, 8);
    k *= kC1;
    k = rotl(k, 31);
    k *= kC2;
    h ^= k;
    h = rotl(h, 27) * 5 + 0x52dce729;
  }
  std::uint64_t tail = 0;
  for (std::size_t j = 0; i + j < n; ++j) {
    tail |= static_cast<std::uint64_t>(p[i + j]) << (8 * j);
  }
  if (n - i > 0) {
    tail *= kC1;
    tail = rotl(tail, 31);
    tail *= kC2;
    h ^= tail;
  }
  return mix64(h);
}

}  // namespace curate
