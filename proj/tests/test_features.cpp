#include <doctest.h>

#include "cmc/error.hpp"
#include "cmc/features.hpp"
#include "test_util.hpp"

using namespace cmc;
using cmc::test::make_image;

TEST_CASE("constant image has zero gradient and HoG channels") {
  const FeatureChannels ch = compute_channels(make_image(24, 20, [](int, int) { return 0.7; }));
  CHECK(ch.channel_count() == 3 + 1 + 6);
  for (int c = ch.channel_index("gradmag"); c < ch.channel_count(); ++c)
    for (int y = 0; y < ch.height(); ++y)
      for (int x = 0; x < ch.width(); ++x) CHECK(ch.at(c, x, y) == 0.0f);
}

TEST_CASE("sigma 0 intensity channel is the input") {
  const PlanarImage img = test::smooth_texture(30, 25, 11);
  const FeatureChannels ch = compute_channels(img);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) CHECK(ch.at(ch.channel_index("int_s0"), x, y) == img.at(x, y));
}

TEST_CASE("vertical step edge: gradmag peaks on the edge, horizontal-gradient bin dominates") {
  const PlanarImage img = make_image(32, 32, [](int x, int) { return x < 16 ? 0.0 : 1.0; });
  const FeatureChannels ch = compute_channels(img);
  const int g = ch.channel_index("gradmag");
  const int y = 16;
  float best = -1;
  int best_x = -1;
  for (int x = 0; x < 32; ++x)
    if (ch.at(g, x, y) > best) best = ch.at(g, x, y), best_x = x;
  // Central difference: 0.5 on the two columns straddling the step.
  CHECK((best_x == 15 || best_x == 16));
  CHECK(best == doctest::Approx(0.5));
  CHECK(ch.at(g, 15, y) == ch.at(g, 16, y));
  const int b0 = ch.channel_index("hog_b0");
  for (int b = 1; b < 6; ++b) CHECK(ch.at(b0, 16, y) > ch.at(b0 + b, 16, y));
}

TEST_CASE("HoG and gradmag are non-negative") {
  const FeatureChannels ch = compute_channels(test::smooth_texture(40, 40, 4));
  for (int c = ch.channel_index("gradmag"); c < ch.channel_count(); ++c)
    for (int y = 0; y < ch.height(); ++y)
      for (int x = 0; x < ch.width(); ++x) CHECK(ch.at(c, x, y) >= 0.0f);
}

TEST_CASE("patch_feature indexing and clamping") {
  const PlanarImage img = test::smooth_texture(20, 18, 2);
  const FeatureChannels ch = compute_channels(img);
  CHECK(patch_feature(ch, 5, 7, 0, 0, "int_s0") == img.at(5, 7));
  CHECK(patch_feature(ch, 0, 0, -5, -5, "int_s0") == img.at(0, 0));
  CHECK(patch_feature(ch, 19, 17, 3, 9, "int_s0") == img.at(19, 17));
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> px(0, 19), py(0, 17), off(-4, 4), cc(0, ch.channel_count() - 1);
  for (int i = 0; i < 500; ++i) {
    const int x = px(rng), y = py(rng), dx = off(rng), dy = off(rng), c = cc(rng);
    const int qx = std::clamp(x + dx, 0, 19), qy = std::clamp(y + dy, 0, 17);
    CHECK(patch_feature(ch, x, y, dx, dy, c) == ch.at(c, qx, qy));
  }
  CHECK_THROWS_AS(ch.channel_index("nope"), InvalidInput);
}

TEST_CASE("gaussian_blur preserves constants and mass of a centred impulse") {
  std::vector<float> c(400, 2.0f);
  for (float v : gaussian_blur(c, 20, 20, 2.0)) CHECK(v == doctest::Approx(2.0).epsilon(1e-6));
  std::vector<float> d(41 * 41, 0.0f);
  d[20 * 41 + 20] = 1.0f;
  const auto b = gaussian_blur(d, 41, 41, 2.0);
  double sum = 0;
  for (float v : b) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(b[20 * 41 + 20] > b[20 * 41 + 21]);
}

TEST_CASE("feature stack on a volume clamps z probes") {
  Volume v({16, 16, 3}, Vec3::Ones(), Vec3::Zero(), Mat3::Identity());
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 16; ++j)
      for (int i = 0; i < 16; ++i) v.at(i, j, k) = static_cast<float>(k);
  const FeatureStack fs = compute_feature_stack(v, FeatureConfig{}, 2);
  REQUIRE(fs.plane_count() == 3);
  CHECK(fs.probe(0, 3, 3, -4) == 0.0f);
  CHECK(fs.probe(0, 3, 3, 1) == 1.0f);
  CHECK(fs.probe(0, 3, 3, 9) == 2.0f);
}

TEST_CASE("too-small images are rejected") {
  CHECK_THROWS_AS(compute_channels(make_image(6, 6, [](int, int) { return 0.0; })), InvalidInput);
}
