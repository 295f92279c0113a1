#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "spatial/rng.hpp"

using namespace spatial;

TEST_CASE("philox4x32-10 known answers") {
  // Reference vectors published with the Random123 library.
  CHECK(CounterRng::philox({0, 0, 0, 0}, {0, 0}) ==
        CounterRng::Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(CounterRng::philox({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        CounterRng::Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(CounterRng::philox({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        CounterRng::Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams replay independently") {
  CounterRng a(42, 1);
  std::vector<std::uint32_t> first;
  for (int i = 0; i < 9; ++i) first.push_back(a.next_u32());
  CounterRng other(42, 2);
  other.next_u64();
  CounterRng b(42, 1);
  for (int i = 0; i < 9; ++i) CHECK(b.next_u32() == first[static_cast<std::size_t>(i)]);
  CounterRng c(42, 2);
  CHECK(c.next_u32() != first[0]);
}

TEST_CASE("derive_key separates indices") {
  std::set<std::uint64_t> keys;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (std::uint64_t i = 0; i < 500; ++i) keys.insert(CounterRng::derive_key(seed, i));
  }
  CHECK(keys.size() == 2000);
}

TEST_CASE("uniform and below stay in range") {
  CounterRng rng(7, 0);
  double lo = 1.0, hi = 0.0;
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    ++counts[rng.below(7)];
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  for (int c : counts) CHECK(std::abs(c - 10000) < 450);
}

TEST_CASE("normal draws have unit moments") {
  CounterRng rng(11, 3);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(sq / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("shuffled_indices is a permutation and seed dependent") {
  CounterRng a(5, 6);
  CounterRng b(6, 6);
  auto p = shuffled_indices(1000, a);
  auto q = shuffled_indices(1000, b);
  CHECK(p != q);
  std::sort(p.begin(), p.end());
  std::vector<std::size_t> iota(1000);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(p == iota);
  CounterRng empty(1, 1);
  CHECK(shuffled_indices(0, empty).empty());
}
