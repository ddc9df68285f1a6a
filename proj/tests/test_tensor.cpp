#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "zozoom/io.hpp"
#include "zozoom/tensor.hpp"

using namespace zozoom;

TEST_CASE("lp_distortion hand values") {
  const Tensor x0(Shape{1, 1, 4});
  CHECK(lp_distortion(x0, x0, 2.0) == 0.0);
  CHECK(lp_distortion(Tensor::filled({1, 1, 4}, 1.0), x0, 2.0) == doctest::Approx(2.0));
  const Tensor x(Shape{1, 1, 3}, {3.0, 4.0, 0.0});
  CHECK(lp_distortion(x, Tensor(Shape{1, 1, 3}), 2.0) == doctest::Approx(5.0));
  CHECK(lp_distortion(x, Tensor(Shape{1, 1, 3}), 1.0) == doctest::Approx(7.0));
}

TEST_CASE("lp_distortion rejects bad input") {
  const Tensor a(Shape{2, 2, 1});
  const Tensor b(Shape{1, 4, 1});
  CHECK_THROWS_AS(lp_distortion(a, b, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(lp_distortion(a, a, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(per_pixel_l2(a, b), std::invalid_argument);
}

TEST_CASE("per_pixel_l2 examples") {
  const Tensor x0(Shape{2, 2, 1});
  const auto zero = per_pixel_l2(x0, x0);
  CHECK(zero.l2_total == 0.0);
  CHECK(zero.l2_squared_per_pixel == 0.0);

  const auto ones = per_pixel_l2(Tensor::filled({2, 2, 1}, 1.0), x0);
  CHECK(ones.l2_total == doctest::Approx(2.0));
  CHECK(ones.l2_squared_per_pixel == doctest::Approx(1.0));

  // A 784-pixel perturbation of norm 1.7708 sits at the 0.004 threshold.
  Tensor x(Shape{28, 28, 1});
  const double v = 1.7708 / std::sqrt(784.0);
  for (double &e : x.values()) {
    e = v;
  }
  CHECK(per_pixel_l2(x, Tensor(Shape{28, 28, 1})).l2_squared_per_pixel ==
        doctest::Approx(0.004).epsilon(1e-3));
}

TEST_CASE("clip_unit_box examples and idempotence") {
  const Tensor x(Shape{1, 1, 3}, {-0.5, 0.3, 1.7});
  CHECK(clip_unit_box(x) == Tensor(Shape{1, 1, 3}, {0.0, 0.3, 1.0}));
  const Tensor inside(Shape{1, 1, 3}, {0.0, 0.5, 1.0});
  CHECK(clip_unit_box(inside) == inside);
  CHECK(clip_unit_box(Tensor::filled({2, 2, 2}, 2.0)) == Tensor::filled({2, 2, 2}, 1.0));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Tensor r = testutil::random_tensor(rng, {3, 4, 2}, -2.0, 3.0);
    const Tensor once = clip_unit_box(r);
    CHECK(clip_unit_box(once) == once);
  }
}

TEST_CASE("lp_distortion symmetry, triangle inequality and per-pixel consistency") {
  std::mt19937_64 rng(11);
  const Shape s{4, 5, 2};
  for (int i = 0; i < 100; ++i) {
    const Tensor a = testutil::random_tensor(rng, s, -1.0, 1.0);
    const Tensor b = testutil::random_tensor(rng, s, -1.0, 1.0);
    const Tensor c = testutil::random_tensor(rng, s, -1.0, 1.0);
    for (double p : {1.0, 2.0, 3.5}) {
      CHECK(lp_distortion(a, b, p) == doctest::Approx(lp_distortion(b, a, p)));
      CHECK(lp_distortion(a, c, p) <= lp_distortion(a, b, p) + lp_distortion(b, c, p) + 1e-12);
    }
    const double l2 = lp_distortion(a, b, 2.0);
    const double ppx = per_pixel_l2(a, b).l2_squared_per_pixel;
    CHECK(std::abs(l2 * l2 / static_cast<double>(s.size()) - ppx) <= 1e-12 * ppx);
  }
}

TEST_CASE("tensor construction validates sizes") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2, 1}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate_shape(Shape{0, 2, 1}), std::invalid_argument);
  const Tensor t(Shape{2, 3, 2});
  CHECK(t.size() == 12);
}

TEST_CASE("row-major channel-innermost layout") {
  Tensor t(Shape{2, 3, 2});
  t.at(1, 2, 1) = 7.0;
  CHECK(t[(1 * 3 + 2) * 2 + 1] == 7.0);
}

TEST_CASE("TZR1 round trip is exact") {
  std::mt19937_64 rng(5);
  const Tensor t = testutil::random_tensor(rng, {3, 2, 2}, -1.0, 1.0);
  const auto dir = testutil::temp_dir("tensor");
  save_tensor(t, dir / "t.json");
  CHECK(load_tensor(dir / "t.json") == t);
  const auto j = read_json_file(dir / "t.json");
  CHECK(j.at("format") == "TZR1");

  auto bad = tensor_to_json(t);
  bad["data"].erase(0);
  CHECK_THROWS_AS(tensor_from_json(bad), std::invalid_argument);
  std::filesystem::remove_all(dir);
}
