#include <catch2/catch.hpp>

#include "moprior/core/image.hpp"
#include "moprior/core/rng.hpp"

using namespace moprior;

TEST_CASE("Pcg32 streams are deterministic", "[core]") {
  Pcg32 a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u32() == b.next_u32());

  Pcg32 c(42), d(43);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs = differs || (c.next_u32() != d.next_u32());
  REQUIRE(differs);
}

TEST_CASE("Pcg32 doubles live in [0, 1)", "[core]") {
  Pcg32 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.next_double();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("uniform respects bounds and degenerate range", "[core]") {
  Pcg32 rng(9);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(-1.75, 1.75);
    REQUIRE(v >= -1.75);
    REQUIRE(v <= 1.75);
  }
  REQUIRE(rng.uniform(0.0, 0.0) == 0.0);
  REQUIRE(rng.uniform(3.5, 3.5) == 3.5);
}

TEST_CASE("sample_indices draws k distinct values in range", "[core]") {
  Pcg32 rng(11);
  auto picks = rng.sample_indices(63, 10);
  REQUIRE(picks.size() == 10);
  std::sort(picks.begin(), picks.end());
  REQUIRE(std::unique(picks.begin(), picks.end()) == picks.end());
  REQUIRE(picks.front() >= 0);
  REQUIRE(picks.back() < 63);
  REQUIRE_THROWS_AS(rng.sample_indices(5, 10), ConfigError);
}

TEST_CASE("derive_seed separates tags and indices", "[core]") {
  const auto a = derive_seed(1, "alpha");
  const auto b = derive_seed(1, "beta");
  const auto c = derive_seed(2, "alpha");
  REQUIRE(a != b);
  REQUIRE(a != c);
  REQUIRE(derive_seed(1, "alpha") == a);
  REQUIRE(derive_seed(1, "alpha", 0) != derive_seed(1, "alpha", 1));
}

TEST_CASE("Image2D indexing and helpers", "[core]") {
  Image2D<float> img(3, 4, 0.0f);
  img.at(1, 2) = 5.0f;
  REQUIRE(img.row(1)[2] == 5.0f);
  REQUIRE(img.numel() == 12);
  REQUIRE(max_value(img) == 5.0f);
  REQUIRE(min_value(img) == 0.0f);
  REQUIRE(mean_value(img) == Approx(5.0 / 12.0));
  REQUIRE(foreground_fraction(img, 0.5) == Approx(1.0 / 12.0));

  img.at(0, 0) = 2.0f;
  clamp01_inplace(img);
  REQUIRE(img.at(0, 0) == 1.0f);
  REQUIRE(img.at(1, 2) == 1.0f);
}
