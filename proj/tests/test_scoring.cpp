#include <doctest.h>

#include "fader/scoring.hpp"
#include "testutil.hpp"

using namespace fader;
using namespace fader::score;

namespace {

int64_t clampi(int64_t v, int64_t n) { return std::min(n - 1, std::max<int64_t>(0, v)); }

// Explicit double-loop Prewitt + GMS formula, replicate padding.
Tensor gms_oracle(const Tensor& a, const Tensor& b, double c) {
  const int64_t h = a.dim(0), w = a.dim(1);
  const auto lum = [](const Tensor& img, int64_t y, int64_t x) {
    if (img.rank() == 2) return img.at(y, x);
    double s = 0.0;
    for (int64_t ch = 0; ch < img.dim(2); ++ch) s += img.at(y, x, ch);
    return s / img.dim(2);
  };
  const auto grad_mag = [&](const Tensor& img, int64_t y, int64_t x) {
    double gx = 0.0, gy = 0.0;
    for (int64_t d = -1; d <= 1; ++d) {
      gx += lum(img, clampi(y + d, h), clampi(x + 1, w)) - lum(img, clampi(y + d, h), clampi(x - 1, w));
      gy += lum(img, clampi(y + 1, h), clampi(x + d, w)) - lum(img, clampi(y - 1, h), clampi(x + d, w));
    }
    gx /= 3.0;
    gy /= 3.0;
    return std::sqrt(gx * gx + gy * gy);
  };
  Tensor out({h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double ga = grad_mag(a, y, x), gb = grad_mag(b, y, x);
      out.at(y, x) = (2.0 * ga * gb + c) / (ga * ga + gb * gb + c);
    }
  return out;
}

Tensor pool_oracle(const Tensor& img) {
  const int64_t h = img.dim(0) / 2, w = img.dim(1) / 2;
  const int64_t c = img.rank() == 3 ? img.dim(2) : 1;
  Tensor out(img.rank() == 3 ? std::vector<int64_t>{h, w, c} : std::vector<int64_t>{h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx)
            s += img.rank() == 3 ? img.at(2 * y + dy, 2 * x + dx, ch)
                                 : img.at(2 * y + dy, 2 * x + dx);
        if (img.rank() == 3)
          out.at(y, x, ch) = s / 4.0;
        else
          out.at(y, x) = s / 4.0;
      }
  return out;
}

Tensor upsample_oracle(const Tensor& map, int64_t oh, int64_t ow) {
  const int64_t h = map.dim(0), w = map.dim(1);
  Tensor out({oh, ow});
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      const double fy = (y + 0.5) * static_cast<double>(h) / oh - 0.5;
      const double fx = (x + 0.5) * static_cast<double>(w) / ow - 0.5;
      const int64_t y0 = static_cast<int64_t>(std::floor(fy));
      const int64_t x0 = static_cast<int64_t>(std::floor(fx));
      const double wy = fy - y0, wx = fx - x0;
      out.at(y, x) = map.at(clampi(y0, h), clampi(x0, w)) * (1 - wy) * (1 - wx) +
                     map.at(clampi(y0, h), clampi(x0 + 1, w)) * (1 - wy) * wx +
                     map.at(clampi(y0 + 1, h), clampi(x0, w)) * wy * (1 - wx) +
                     map.at(clampi(y0 + 1, h), clampi(x0 + 1, w)) * wy * wx;
    }
  return out;
}

// O(P*N) pair counting with exact tie handling.
double auroc_oracle(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0.0;
  int64_t p = 0, n = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++p;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  for (bool l : labels)
    if (!l) ++n;
  return wins / (static_cast<double>(p) * static_cast<double>(n));
}

}  // namespace

TEST_CASE("gms_map: identical inputs give an all-ones map") {
  const Tensor img = testutil::random_image(12, 12, 3, 42);
  const Tensor map = gms_map(img, img);
  for (int64_t i = 0; i < map.numel(); ++i) CHECK(map[i] == 1.0);
}

TEST_CASE("gms_map: two constant images give an all-ones map") {
  const Tensor a({10, 10, 3}, 0.3), b({10, 10, 3}, 0.8);
  const Tensor map = gms_map(a, b);
  for (int64_t i = 0; i < map.numel(); ++i) CHECK(map[i] == 1.0);  // 0/0 regularized by c
}

TEST_CASE("gms_map matches the brute-force oracle on random pairs") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const Tensor a = testutil::random_image(8, 8, 3, 100 + seed);
    const Tensor b = testutil::random_image(8, 8, 3, 200 + seed);
    const Tensor got = gms_map(a, b);
    const Tensor want = gms_oracle(a, b, kGmsC);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
  }
}

TEST_CASE("gms_map is symmetric and rejects bad arguments") {
  const Tensor a = testutil::random_image(8, 8, 3, 7);
  const Tensor b = testutil::random_image(8, 8, 3, 8);
  CHECK(gms_map(a, b) == gms_map(b, a));
  CHECK_THROWS_AS(gms_map(a, b, 0.0), ConfigError);
  CHECK_THROWS_AS(gms_map(a, testutil::random_image(8, 6, 3, 9)), ShapeError);
}

TEST_CASE("msgms_anomaly_map: identical inputs give exactly zero") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor img = testutil::random_image(16, 16, 3, 300 + seed);
    const Tensor map = msgms_anomaly_map(img, img, 2);
    for (int64_t i = 0; i < map.numel(); ++i) CHECK(map[i] == 0.0);
  }
}

TEST_CASE("msgms_anomaly_map with one level equals 1 - gms_map") {
  const Tensor a = testutil::random_image(8, 8, 3, 1);
  const Tensor b = testutil::random_image(8, 8, 3, 2);
  const Tensor anomaly = msgms_anomaly_map(a, b, 1);
  const Tensor gms = gms_map(a, b);
  for (int64_t i = 0; i < anomaly.numel(); ++i)
    CHECK(anomaly[i] == doctest::Approx(1.0 - gms[i]).epsilon(1e-12));
}

TEST_CASE("msgms_anomaly_map matches a brute-force two-scale oracle") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    const Tensor a = testutil::random_image(16, 16, 3, 400 + seed);
    const Tensor b = testutil::random_image(16, 16, 3, 500 + seed);
    const Tensor got = msgms_anomaly_map(a, b, 2);

    const Tensor level0 = gms_oracle(a, b, kGmsC);
    const Tensor level1 = upsample_oracle(gms_oracle(pool_oracle(a), pool_oracle(b), kGmsC), 16, 16);
    for (int64_t i = 0; i < got.numel(); ++i) {
      const double want = 1.0 - 0.5 * (level0[i] + level1[i]);
      CHECK(std::abs(got[i] - std::max(0.0, want)) < 1e-6);
    }
  }
  CHECK_THROWS_AS(msgms_anomaly_map(testutil::random_image(6, 6, 3, 1),
                                    testutil::random_image(6, 6, 3, 2), 3),
                  ShapeError);  // 6 not divisible by 4
}

TEST_CASE("image_anomaly_score on flat and spike maps") {
  CHECK(image_anomaly_score(Tensor({64, 64})) == 0.0);
  const Tensor flat({64, 64}, 0.37);
  CHECK(image_anomaly_score(flat) == doctest::Approx(0.37).epsilon(1e-12));
  Tensor spike({64, 64});
  spike.at(32, 32) = 1.0;
  // a unit spike smeared over the default 21x21 box
  CHECK(image_anomaly_score(spike) == doctest::Approx(1.0 / 441.0).epsilon(1e-12));
}

TEST_CASE("score window scales with resolution") {
  CHECK(score_window_for(256) == 21);
  CHECK(score_window_for(64) == 7);
  CHECK(score_window_for(128) == 11);
}

TEST_CASE("auroc worked example and degenerate cases") {
  // pos = {0.9, 0.5}, neg = {0.5, 0.1} -> (3 + 0.5) / 4
  CHECK(auroc({0.9, 0.5, 0.5, 0.1}, {true, true, false, false}) == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(auroc({1.0, 2.0, 3.0, 4.0}, {false, false, true, true}) == 1.0);
  CHECK(auroc({1.0, 2.0, 3.0, 4.0}, {true, true, false, false}) == 0.0);
  CHECK_THROWS_AS(auroc({1.0, 2.0}, {true, true}), DegenerateLabels);
}

TEST_CASE("auroc matches pair counting exactly on random instances with ties") {
  auto rng = make_rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t p = 1 + rand_index(rng, 20), n = 1 + rand_index(rng, 20);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (int64_t i = 0; i < p + n; ++i) {
      // quantized scores force plenty of ties
      scores.push_back(static_cast<double>(rand_index(rng, 8)) / 8.0);
      labels.push_back(i < p);
    }
    CHECK(std::abs(auroc(scores, labels) - auroc_oracle(scores, labels)) <= 1e-12);
  }
}

TEST_CASE("auroc invariances") {
  auto rng = make_rng(123);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 40; ++i) {
    scores.push_back(rand_unit(rng));
    labels.push_back(i % 3 == 0);
  }
  const double base = auroc(scores, labels);

  // strictly increasing transform preserves the value
  std::vector<double> transformed;
  for (double s : scores) transformed.push_back(std::exp(3.0 * s) + 1.0);
  CHECK(auroc(transformed, labels) == base);

  // complement property
  std::vector<bool> flipped;
  for (bool l : labels) flipped.push_back(!l);
  CHECK(auroc(scores, labels) + auroc(scores, flipped) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("pixel_auroc on exact and constant maps") {
  std::vector<Tensor> maps, gts;
  auto rng = make_rng(7);
  for (int i = 0; i < 2; ++i) {
    Tensor gt({4, 4});
    for (int64_t j = 0; j < 16; ++j) gt[j] = rand_unit(rng) < 0.3 ? 1.0 : 0.0;
    gts.push_back(gt);
    maps.push_back(gt);  // map equals the mask
  }
  gts[0].at(0, 0) = 1.0;  // ensure at least one positive
  maps[0].at(0, 0) = 1.0;
  CHECK(pixel_auroc(maps, gts) == 1.0);

  std::vector<Tensor> flat = {Tensor({4, 4}, 0.5), Tensor({4, 4}, 0.5)};
  CHECK(pixel_auroc(flat, gts) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("pixel_auroc matches pair counting on hand-set maps") {
  Tensor m1({4, 4}), m2({4, 4}), g1({4, 4}), g2({4, 4});
  auto rng = make_rng(31);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int64_t j = 0; j < 16; ++j) {
    m1[j] = static_cast<double>(rand_index(rng, 5)) / 5.0;
    m2[j] = static_cast<double>(rand_index(rng, 5)) / 5.0;
    g1[j] = rand_unit(rng) < 0.4 ? 1.0 : 0.0;
    g2[j] = 0.0;  // second image is normal
  }
  g1.at(1, 1) = 1.0;
  for (int64_t j = 0; j < 16; ++j) {
    scores.push_back(m1[j]);
    labels.push_back(g1[j] > 0.5);
  }
  for (int64_t j = 0; j < 16; ++j) {
    scores.push_back(m2[j]);
    labels.push_back(false);
  }
  CHECK(pixel_auroc({m1, m2}, {g1, g2}) == doctest::Approx(auroc_oracle(scores, labels)).epsilon(1e-15));
  CHECK_THROWS_AS(pixel_auroc({m1}, {Tensor({3, 3})}), ShapeError);
}

TEST_CASE("spearman ranks agreement and ties") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {40, 30, 20, 10}) == doctest::Approx(-1.0));
  CHECK(spearman({1, 2, 3, 4}, {7, 7, 7, 7}) == 0.0);
}
