#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace drbo {

inline constexpr std::size_t kMaxNodes = 128;

/// Fixed-width set of node indices (d <= 128). Used as the parent-set key of
/// the score cache and as the surrogate input.
class ParentMask {
 public:
  constexpr ParentMask() = default;

  constexpr void set(std::size_t j) { words_[j >> 6] |= std::uint64_t{1} << (j & 63); }
  constexpr void reset(std::size_t j) { words_[j >> 6] &= ~(std::uint64_t{1} << (j & 63)); }
  [[nodiscard]] constexpr bool test(std::size_t j) const {
    return (words_[j >> 6] >> (j & 63)) & 1U;
  }
  [[nodiscard]] constexpr std::size_t count() const {
    return static_cast<std::size_t>(std::popcount(words_[0]) + std::popcount(words_[1]));
  }
  [[nodiscard]] constexpr bool empty() const { return (words_[0] | words_[1]) == 0; }

  /// Calls fn(j) for every set bit in ascending order.
  template <typename Fn>
  constexpr void for_each(Fn&& fn) const {
    for (std::size_t w = 0; w < 2; ++w) {
      std::uint64_t bits = words_[w];
      while (bits != 0) {
        const auto tz = static_cast<std::size_t>(std::countr_zero(bits));
        fn(w * 64 + tz);
        bits &= bits - 1;
      }
    }
  }

  [[nodiscard]] std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    out.reserve(count());
    for_each([&](std::size_t j) { out.push_back(j); });
    return out;
  }

  [[nodiscard]] constexpr std::uint64_t word(std::size_t w) const { return words_[w]; }

  [[nodiscard]] std::uint64_t hash() const {
    std::uint64_t h = words_[0] * 0x9E3779B97F4A7C15ULL;
    h ^= (words_[1] + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2));
    return h ^ (h >> 31);
  }

  friend constexpr bool operator==(const ParentMask&, const ParentMask&) = default;
  friend constexpr auto operator<=>(const ParentMask&, const ParentMask&) = default;

 private:
  std::uint64_t words_[2]{0, 0};
};

struct ParentMaskHash {
  std::size_t operator()(const ParentMask& m) const noexcept {
    return static_cast<std::size_t>(m.hash());
  }
};

}  // namespace drbo
