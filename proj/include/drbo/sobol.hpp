#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drbo/rng.hpp"

namespace drbo {

/// Sobol points (Joe-Kuo direction numbers, 32-bit resolution) with optional
/// nested uniform (Owen) scrambling. Coordinates are computed directly from
/// the index, so any subset of points and dimensions can be drawn
/// independently and in parallel.
class SobolSequence {
 public:
  static constexpr int kBits = 32;

  /// scramble = false gives the raw sequence; the seed is then unused.
  /// Scrambling is exact for indices below max_points: the first
  /// m = ceil(log2(max_points)) levels are flipped bit by bit and, since those
  /// prefixes are distinct, all deeper levels reduce to fresh random bits.
  SobolSequence(std::size_t dims, std::uint64_t scramble_seed, bool scramble = true,
                std::uint64_t max_points = std::uint64_t{1} << 32);

  [[nodiscard]] static std::size_t max_dims();
  [[nodiscard]] std::size_t dims() const { return directions_.size(); }
  [[nodiscard]] bool scrambled() const { return scramble_; }

  /// Raw 32-bit Sobol integer of point `index` in dimension `dim`.
  [[nodiscard]] std::uint32_t raw(std::uint64_t index, std::size_t dim) const;
  /// Coordinate in [0, 1); scrambled coordinates lie strictly inside (0, 1)
  /// and carry 52 random-resolution bits.
  [[nodiscard]] double coordinate(std::uint64_t index, std::size_t dim) const;
  void point(std::uint64_t index, std::span<double> out) const;

 private:
  [[nodiscard]] double owen_scramble(std::uint32_t x, std::size_t dim) const;

  std::vector<std::array<std::uint32_t, kBits>> directions_;
  std::vector<std::uint64_t> dim_keys_;
  bool scramble_;
  int levels_;
};

/// Latin hypercube design: `count` points in [-1, 1]^dims. In every
/// dimension each of the `count` equal-width strata holds exactly one point.
/// Points can be drawn in any order; point i's in-stratum offsets come from
/// its own random stream.
class LatinHypercube {
 public:
  LatinHypercube(std::size_t count, std::size_t dims, Rng& rng);

  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] std::size_t dims() const { return dims_; }
  void point(std::size_t index, std::span<double> out) const;

 private:
  std::size_t count_;
  std::size_t dims_;
  std::vector<std::uint32_t> strata_;  // dims x count
  std::uint64_t jitter_seed_;
};

/// All points of a fresh design, row-major count x dims.
[[nodiscard]] std::vector<double> latin_hypercube(std::size_t count, std::size_t dims, Rng& rng);

}  // namespace drbo
