#include <doctest.h>

#include <random>

#include "istlm/analysis.hpp"
#include "istlm/error.hpp"

using namespace istlm;

TEST_CASE("ordinary least squares") {
  auto f = OlsFit({{0, 1}, {1, 3}});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  f = OlsFit({{0, 0}, {1, 1}, {2, 2}});
  CHECK(f.slope == doctest::Approx(1.0));
  CHECK(f.intercept == doctest::Approx(0.0));
  f = OlsFit({{0, 0}, {1, 1}, {2, 0}});
  CHECK(f.slope == doctest::Approx(0.0));
  CHECK(f.intercept == doctest::Approx(1.0 / 3.0));
  CHECK(f.inliers.size() == 3);
  CHECK_THROWS_AS(OlsFit({{1, 0}, {1, 2}}), Error);
  CHECK_THROWS_AS(OlsFit({{1, 0}}), Error);
}

TEST_CASE("ransac small sets") {
  RansacOptions opt;
  opt.threshold = 0.1;
  auto f = RansacFit({{0, 0}, {1, 1}, {2, 2}, {3, 10}}, opt);
  REQUIRE(f);
  CHECK(f->slope == doctest::Approx(1.0));
  CHECK(f->intercept == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(f->inliers == std::vector<std::size_t>{0, 1, 2});

  const std::vector<Point2> line{{0, 1}, {1, 3.5}, {2, 6}, {4, 11}, {5, 13.5}};
  f = RansacFit(line);
  REQUIRE(f);
  const auto ols = OlsFit(line);
  CHECK(f->slope == doctest::Approx(ols.slope));
  CHECK(f->intercept == doctest::Approx(ols.intercept));
  CHECK(f->inliers == ols.inliers);

  f = RansacFit({{1, 2}, {3, 1}});
  REQUIRE(f);
  CHECK(f->slope == doctest::Approx(-0.5));
  CHECK(f->inliers.size() == 2);

  opt.min_inliers = 4;
  CHECK_FALSE(RansacFit({{0, 0}, {1, 1}, {2, 5}, {3, 0}}, opt).has_value());
}

TEST_CASE("ransac with at most eight points ignores the seed") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Point2> pts;
  for (int i = 0; i < 8; ++i) pts.push_back({static_cast<double>(i), 0.5 * i + noise(rng)});
  RansacOptions a, b;
  a.seed = 1;
  b.seed = 999;
  b.iterations = 3;
  const auto fa = RansacFit(pts, a), fb = RansacFit(pts, b);
  REQUIRE(fa);
  REQUIRE(fb);
  CHECK(fa->slope == fb->slope);
  CHECK(fa->intercept == fb->intercept);
  CHECK(fa->inliers == fb->inliers);
}

TEST_CASE("pearson") {
  CHECK(Pearson({{0, 1}, {1, 2}, {2, 3}}) == doctest::Approx(1.0));
  CHECK(Pearson({{0, 3}, {1, 2}, {2, 1}}) == doctest::Approx(-1.0));
  CHECK(Pearson({{0, 0}, {1, 1}, {2, 0}}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(Pearson({{0, 1}, {1, 1}}), Error);
}

TEST_CASE("family grouping") {
  const std::vector<RatioMetric> rows{{1, 3, 4.53}, {3, 9, 4.75}, {6, 18, 5.38}, {12, 36, 5.58}, {12, 24, 5.96},
                                      {1, 2, 4.61}, {3, 6, 5.26},  {6, 12, 5.86}, {5, 11, 1.0},   {-1, -1, 4.16}};
  const auto g = GroupByFamily(rows);
  REQUIRE(g.families.size() == 2);
  const auto& x3 = g.families.at(3);
  REQUIRE(x3.size() == 4);
  CHECK(x3[0].n == 1);
  CHECK(x3[3].n == 12);
  CHECK(x3[2].metric == 5.38);
  const auto& x2 = g.families.at(2);
  REQUIRE(x2.size() == 4);
  CHECK(x2[0].metric == 4.61);
  CHECK(x2[3].metric == 5.96);
  CHECK(g.excluded.size() == 2);
}
