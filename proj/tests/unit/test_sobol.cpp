#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "drbo/sobol.hpp"

using namespace drbo;

// Reference integers (coordinate * 2^32) of the unscrambled sequence, taken
// from scipy.stats.qmc.Sobol(scramble=False), which enumerates points in Gray
// code order.
TEST_CASE("raw Sobol integers match the reference generator") {
  const SobolSequence s(1111, 0, false);
  const std::uint32_t first8[8][6] = {
      {0u, 0u, 0u, 0u, 0u, 0u},
      {2147483648u, 2147483648u, 2147483648u, 2147483648u, 2147483648u, 2147483648u},
      {3221225472u, 1073741824u, 1073741824u, 1073741824u, 3221225472u, 3221225472u},
      {1073741824u, 3221225472u, 3221225472u, 3221225472u, 1073741824u, 1073741824u},
      {1610612736u, 1610612736u, 2684354560u, 3758096384u, 1610612736u, 536870912u},
      {3758096384u, 3758096384u, 536870912u, 1610612736u, 3758096384u, 2684354560u},
      {2684354560u, 536870912u, 3758096384u, 2684354560u, 2684354560u, 3758096384u},
      {536870912u, 2684354560u, 1610612736u, 536870912u, 536870912u, 1610612736u},
  };
  for (std::uint64_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(s.raw(i, j) == first8[i][j]);
  }
  const std::size_t dims[5] = {0, 1, 7, 50, 1110};
  const struct {
    std::uint64_t index;
    std::uint32_t values[5];
  } deep[] = {
      {37, {3959422976u, 2751463424u, 3422552064u, 1811939328u, 4227858432u}},
      {1000, {943718400u, 415236096u, 3862953984u, 1514143744u, 1589641216u}},
      {123456, {113803264u, 784891904u, 1993113600u, 1117683712u, 725254144u}},
  };
  for (const auto& row : deep) {
    for (std::size_t c = 0; c < 5; ++c) CHECK(s.raw(row.index, dims[c]) == row.values[c]);
  }
  CHECK(s.coordinate(1, 0) == 0.5);
  CHECK_THROWS_AS((void)SobolSequence(SobolSequence::max_dims() + 1, 0), std::invalid_argument);
}

TEST_CASE("scrambled points keep one point per stratum, per dimension and per pair") {
  const int m = 10;
  const std::uint64_t n = std::uint64_t{1} << m;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SobolSequence s(40, seed, true, n);
    for (std::size_t j = 0; j < 40; ++j) {
      std::vector<int> hits(n, 0);
      for (std::uint64_t i = 0; i < n; ++i) {
        const double x = s.coordinate(i, j);
        REQUIRE(x > 0.0);
        REQUIRE(x < 1.0);
        ++hits[static_cast<std::size_t>(x * static_cast<double>(n))];
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
    // Dimensions 0 and 1 form a (0, m, 2)-net.
    for (int a = 0; a <= m; ++a) {
      const std::uint64_t rows = std::uint64_t{1} << a;
      const std::uint64_t cols = std::uint64_t{1} << (m - a);
      std::vector<int> hits(n, 0);
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto r = static_cast<std::uint64_t>(s.coordinate(i, 0) * static_cast<double>(rows));
        const auto c = static_cast<std::uint64_t>(s.coordinate(i, 1) * static_cast<double>(cols));
        ++hits[r * cols + c];
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }
}

TEST_CASE("scrambling depends on the seed and is reproducible") {
  const SobolSequence a(5, 1);
  const SobolSequence b(5, 1);
  const SobolSequence c(5, 2);
  int same = 0;
  for (std::uint64_t i = 0; i < 64; ++i) {
    CHECK(a.coordinate(i, 3) == b.coordinate(i, 3));
    same += a.coordinate(i, 3) == c.coordinate(i, 3);
  }
  CHECK(same == 0);
}

TEST_CASE("Latin hypercube: stratification and seeding") {
  Rng rng(1);
  const auto two = latin_hypercube(2, 1, rng);
  CHECK(std::min(two[0], two[1]) < 0.0);
  CHECK(std::min(two[0], two[1]) >= -1.0);
  CHECK(std::max(two[0], two[1]) >= 0.0);
  CHECK(std::max(two[0], two[1]) <= 1.0);

  const std::size_t count = 100;
  const std::size_t dims = 17;
  const auto pts = latin_hypercube(count, dims, rng);
  for (std::size_t j = 0; j < dims; ++j) {
    std::set<std::size_t> strata;
    for (std::size_t i = 0; i < count; ++i) {
      const double x = pts[i * dims + j];
      strata.insert(std::min<std::size_t>(count - 1, static_cast<std::size_t>((x + 1.0) / 2.0 * count)));
    }
    CHECK(strata.size() == count);
  }

  Rng r1(5);
  Rng r2(6);
  CHECK(latin_hypercube(10, 3, r1) != latin_hypercube(10, 3, r2));

  Rng r3(7);
  const LatinHypercube design(10, 3, r3);
  std::vector<double> a(3);
  std::vector<double> b(3);
  design.point(4, a);
  design.point(9, b);
  design.point(4, b);
  CHECK(a == b);
}
