#include "drbo/sobol.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace drbo {

namespace {

#include "sobol_directions.inc"

std::array<std::uint32_t, SobolSequence::kBits> direction_numbers(std::size_t dim) {
  constexpr int bits = SobolSequence::kBits;
  std::array<std::uint32_t, bits> v{};
  if (dim == 0) {
    v.fill(1);
  } else {
    const std::uint32_t poly = kSobolPoly[dim];
    const int degree = std::bit_width(poly) - 1;
    for (int j = 0; j < degree; ++j) v[static_cast<std::size_t>(j)] = kSobolInit[dim][j];
    for (int j = degree; j < bits; ++j) {
      std::uint32_t next = v[static_cast<std::size_t>(j - degree)];
      std::uint32_t pow2 = 1;
      for (int t = 0; t < degree; ++t) {
        pow2 <<= 1;
        if ((poly >> (degree - 1 - t)) & 1U) next ^= pow2 * v[static_cast<std::size_t>(j - t - 1)];
      }
      v[static_cast<std::size_t>(j)] = next;
    }
  }
  for (int j = 0; j < bits; ++j) v[static_cast<std::size_t>(j)] <<= (bits - 1 - j);
  return v;
}

}  // namespace

SobolSequence::SobolSequence(std::size_t dims, std::uint64_t scramble_seed, bool scramble, std::uint64_t max_points)
    : scramble_(scramble) {
  if (dims == 0 || dims > kSobolMaxDims) {
    throw std::invalid_argument("Sobol dimension must be in 1.." + std::to_string(kSobolMaxDims));
  }
  if (max_points == 0 || max_points > (std::uint64_t{1} << kBits)) {
    throw std::invalid_argument("Sobol point budget must be in 1..2^32");
  }
  levels_ = std::max(1, static_cast<int>(std::bit_width(max_points - 1)));
  directions_.reserve(dims);
  dim_keys_.reserve(dims);
  for (std::size_t j = 0; j < dims; ++j) {
    directions_.push_back(direction_numbers(j));
    dim_keys_.push_back(derive_seed(scramble_seed, j, 0x0E4E));
  }
}

std::size_t SobolSequence::max_dims() { return kSobolMaxDims; }

std::uint32_t SobolSequence::raw(std::uint64_t index, std::size_t dim) const {
  if (index >> kBits) throw std::out_of_range("Sobol index exceeds 2^32 points");
  std::uint64_t gray = index ^ (index >> 1);
  const auto& v = directions_[dim];
  std::uint32_t x = 0;
  while (gray != 0) {
    x ^= v[static_cast<std::size_t>(std::countr_zero(gray))];
    gray &= gray - 1;
  }
  return x;
}

// Each of the first levels_ output bits is flipped by a hash of the bits above
// it (nested uniform scrambling); the tail is one hash of the full prefix.
double SobolSequence::owen_scramble(std::uint32_t x, std::size_t dim) const {
  const std::uint64_t key = dim_keys_[dim];
  std::uint64_t head = 0;
  for (int level = 0; level < levels_; ++level) {
    const std::uint64_t prefix = level == 0 ? 0 : (x >> (kBits - level));
    const std::uint64_t node = (std::uint64_t{1} << level) | prefix;
    const std::uint64_t flip = splitmix64(key ^ (node * 0x9E3779B97F4A7C15ULL)) >> 63;
    head = (head << 1) | (((x >> (kBits - 1 - level)) & 1U) ^ flip);
  }
  const std::uint64_t leaf = (std::uint64_t{1} << levels_) | (static_cast<std::uint64_t>(x) >> (kBits - levels_));
  const std::uint64_t tail = splitmix64(key ^ (leaf * 0xC2B2AE3D27D4EB4FULL) ^ 0x7A11);
  const std::uint64_t bits52 = (head << (52 - levels_)) | (tail >> (12 + levels_));
  return (static_cast<double>(bits52) + 0.5) * 0x1.0p-52;
}

double SobolSequence::coordinate(std::uint64_t index, std::size_t dim) const {
  const std::uint32_t x = raw(index, dim);
  if (!scramble_) return static_cast<double>(x) * 0x1.0p-32;
  return owen_scramble(x, dim);
}

void SobolSequence::point(std::uint64_t index, std::span<double> out) const {
  if (out.size() != dims()) throw std::invalid_argument("output span width does not match Sobol dimension");
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = coordinate(index, j);
}

LatinHypercube::LatinHypercube(std::size_t count, std::size_t dims, Rng& rng)
    : count_(count), dims_(dims), strata_(count * dims), jitter_seed_(rng()) {
  if (count == 0 || count > UINT32_MAX) throw std::invalid_argument("design size must be in 1..2^32-1");
  for (std::size_t j = 0; j < dims; ++j) {
    auto* col = strata_.data() + j * count;
    std::iota(col, col + count, std::uint32_t{0});
    for (std::size_t i = count; i > 1; --i) std::swap(col[i - 1], col[rng.below(i)]);
  }
}

void LatinHypercube::point(std::size_t index, std::span<double> out) const {
  if (out.size() != dims_) throw std::invalid_argument("output span width does not match design dimension");
  Rng jitter(derive_seed(jitter_seed_, index));
  const double width = 2.0 / static_cast<double>(count_);
  for (std::size_t j = 0; j < dims_; ++j) {
    const double u = jitter.uniform();
    out[j] = std::min(1.0, -1.0 + width * (static_cast<double>(strata_[j * count_ + index]) + u));
  }
}

std::vector<double> latin_hypercube(std::size_t count, std::size_t dims, Rng& rng) {
  const LatinHypercube design(count, dims, rng);
  std::vector<double> out(count * dims);
  for (std::size_t i = 0; i < count; ++i) design.point(i, std::span<double>(out).subspan(i * dims, dims));
  return out;
}

}  // namespace drbo
