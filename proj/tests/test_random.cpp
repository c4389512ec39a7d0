#include <doctest.h>

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include "polarsim/random.hpp"

using namespace polarsim;

TEST_CASE("splitmix64 reference outputs for key 0") {
  RandomStream rng(0);
  CHECK(rng() == 0xe220a8397b1dcdafULL);
  CHECK(rng() == 0x6e789e6aa1b965f4ULL);
  CHECK(rng() == 0x06c45d188009454fULL);
}

TEST_CASE("label hashes and derived keys are frozen") {
  // Values recomputed outside the library; they pin the reproducibility contract.
  CHECK(label_hash("main") == 0xb1375cb6f94d9218ULL);
  CHECK(label_hash("") == 0xf52a15e9a9b5e89bULL);
  CHECK(derive_key({7, label_hash("main"), 3, 1, 42, 0}) == 0x899f37784374722eULL);
}

TEST_CASE("derive_key is order sensitive") {
  CHECK(derive_key({1, 2}) != derive_key({2, 1}));
  CHECK(derive_key({1, 2}) != derive_key({1, 2, 0}));
  CHECK(derive_key({5, 5}) == derive_key({5, 5}));
}

TEST_CASE("uniform stays in [0, 1)") {
  RandomStream rng(99);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  constexpr int kN = 200000;
  for (int i = 0; i < kN; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / kN == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("below is in range and roughly uniform") {
  RandomStream rng(3);
  std::array<int, 7> counts{};
  constexpr int kN = 70000;
  for (int i = 0; i < kN; ++i) {
    const auto v = rng.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - kN / 7) < 400);
  CHECK(rng.below(1) == 0);
}

TEST_CASE("shuffle yields a permutation and depends only on the key") {
  std::vector<int> a(50), b(50);
  std::iota(a.begin(), a.end(), 0);
  b = a;
  RandomStream r1(11), r2(11);
  r1.shuffle(std::span<int>(a));
  r2.shuffle(std::span<int>(b));
  CHECK(a == b);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
  CHECK(a != expect);
}

TEST_CASE("bernoulli edge probabilities") {
  RandomStream rng(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
}
