#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "cmc/error.hpp"
#include "cmc/forest.hpp"
#include "oracles.hpp"
#include "random_forest.hpp"
#include "test_util.hpp"

using namespace cmc;
using cmc::test::make_image;
using cmc::test::random_forest;

namespace {

// Bright left half, dark right half; centres far from the boundary carry
// all-one (bright) or all-zero (dark) labels.
TrainingSet toy_set() {
  TrainingSet ts;
  ts.meta = default_meta(ModelKind::sa2d);
  const PlanarImage img = make_image(160, 64, [](int x, int) { return x < 80 ? 1.0 : 0.0; });
  ts.sources.push_back(compute_feature_stack(img, ts.meta.features));
  for (int cy = 16; cy <= 48; cy += 4)
    for (int cx : {8, 12, 16, 20, 24, 28, 132, 136, 140, 144, 148, 152}) {
      TrainSample s;
      s.cx = cx;
      s.cy = cy;
      s.label.assign(static_cast<std::size_t>(ts.meta.label_pixels()), cx < 80 ? 1 : 0);
      ts.samples.push_back(s);
    }
  return ts;
}

}  // namespace

TEST_CASE("pi_mapping degenerate labels and determinism") {
  std::vector<PixelPair> pairs{{0, 1}, {2, 5}, {7, 3}, {4, 6}};
  const std::vector<std::uint8_t> zeros(8, 0), ones(8, 1);
  const auto z0 = pi_mapping(zeros, pairs);
  const auto z1 = pi_mapping(ones, pairs);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    CHECK(z0[2 * p] == 1);
    CHECK(z0[2 * p + 1] == 0);
    CHECK(z1[2 * p] == 0);
    CHECK(z1[2 * p + 1] == 1);
  }
  const std::vector<std::uint8_t> y{1, 0, 0, 1, 1, 0, 1, 0};
  CHECK(pi_mapping(y, pairs) == pi_mapping(std::vector<std::uint8_t>(y), pairs));
}

TEST_CASE("binarize_labels") {
  SUBCASE("two planted clusters are separated") {
    std::vector<PixelPair> pairs;
    for (int i = 0; i < 64; ++i) pairs.emplace_back(i % 16, (i * 7 + 3) % 16 == i % 16 ? (i + 1) % 16 : (i * 7 + 3) % 16);
    std::vector<std::vector<std::uint8_t>> zs;
    for (int i = 0; i < 10; ++i) zs.push_back(pi_mapping(std::vector<std::uint8_t>(16, i % 2), pairs));
    const auto c = binarize_labels(zs);
    int ones = 0;
    for (int i = 0; i < 10; ++i) {
      CHECK(c[static_cast<std::size_t>(i)] == c[static_cast<std::size_t>(i % 2)]);
      ones += c[static_cast<std::size_t>(i)];
    }
    CHECK(ones == 5);
    CHECK(c[0] != c[1]);
  }
  SUBCASE("noisy clusters of equal size split at the midpoint median") {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution half(0.5), flip(0.05);
    std::vector<PixelPair> pairs;
    for (int i = 0; i < 63; ++i) pairs.emplace_back(i, i + 1);
    std::vector<std::uint8_t> ta(64), tb(64);
    for (int i = 0; i < 64; ++i) ta[i] = half(rng), tb[i] = half(rng);
    std::vector<std::vector<std::uint8_t>> zs;
    for (int i = 0; i < 12; ++i) {
      std::vector<std::uint8_t> y = i % 2 ? tb : ta;
      for (auto& v : y)
        if (flip(rng)) v ^= 1;
      zs.push_back(pi_mapping(y, pairs));
    }
    const auto c = binarize_labels(zs);
    for (int i = 0; i < 12; ++i) CHECK(c[static_cast<std::size_t>(i)] == c[static_cast<std::size_t>(i % 2)]);
    CHECK(c[0] != c[1]);
  }
  SUBCASE("a single distinct vector is class 0") {
    std::vector<std::vector<std::uint8_t>> zs(7, std::vector<std::uint8_t>{1, 0, 1, 1});
    for (auto c : binarize_labels(zs)) CHECK(c == 0);
  }
  SUBCASE("projections match a dense eigendecomposition") {
    // z vectors of three 4-pixel labels under all 6 pixel pairs.
    std::vector<PixelPair> pairs{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    std::vector<std::vector<std::uint8_t>> zs{pi_mapping(std::vector<std::uint8_t>{1, 1, 0, 0}, pairs),
                                              pi_mapping(std::vector<std::uint8_t>{1, 1, 1, 0}, pairs),
                                              pi_mapping(std::vector<std::uint8_t>{0, 0, 0, 0}, pairs)};
    const auto proj = principal_projections(zs);
    Eigen::MatrixXd Z(3, 12);
    for (int i = 0; i < 3; ++i)
      for (int d = 0; d < 12; ++d) Z(i, d) = zs[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
    const Eigen::RowVectorXd mu = Z.colwise().mean();
    const Eigen::MatrixXd C = Z.rowwise() - mu;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C.transpose() * C);
    Eigen::VectorXd v = es.eigenvectors().col(11);
    Eigen::Index imax = 0;
    while (std::abs(v[imax]) < v.cwiseAbs().maxCoeff() - 1e-9) ++imax;
    if (v[imax] < 0) v = -v;
    for (int i = 0; i < 3; ++i) CHECK(proj[static_cast<std::size_t>(i)] == doctest::Approx(C.row(i).dot(v)).epsilon(1e-6));
  }
}

TEST_CASE("info_gain_classification") {
  CHECK(info_gain_classification({5, 0}, {0, 5}) == doctest::Approx(1.0));
  CHECK(info_gain_classification({2, 6}, {1, 3}) == doctest::Approx(0.0));
  const double expected = oracle::gain_bits(5, 1, 2, 2);
  CHECK(std::abs(info_gain_classification({5, 1}, {2, 2}) - expected) < 1e-9);
  CHECK(info_gain_classification({0, 0}, {3, 4}) == 0.0);
}

TEST_CASE("info_gain_regression") {
  const double eps = 1e-3;
  SUBCASE("two clusters at +-10 split perfectly") {
    std::vector<Eigen::VectorXd> xs;
    std::vector<std::uint8_t> right;
    for (int i = 0; i < 8; ++i) {
      xs.push_back(Eigen::Vector2d(i % 2 ? 10.0 : -10.0, 0.0));
      right.push_back(i % 2);
    }
    const auto g = info_gain_regression(xs, right, eps);
    REQUIRE(g.has_value());
    // Parent covariance diag(100, 0); children are degenerate (eps I).
    const double closed = 0.5 * std::log((100.0 + eps) * eps / (eps * eps));
    CHECK(std::abs(*g - closed) < 1e-9);
    CHECK(*g > 0);
  }
  SUBCASE("sides distributed like the parent give zero") {
    std::vector<Eigen::VectorXd> xs;
    std::vector<std::uint8_t> right;
    for (int r = 0; r < 2; ++r)
      for (int i = 0; i < 4; ++i) {
        xs.push_back(Eigen::Vector2d(i, i * i - 1.0));
        right.push_back(static_cast<std::uint8_t>(r));
      }
    CHECK(std::abs(*info_gain_regression(xs, right, eps)) < 1e-9);
  }
  SUBCASE("identical displacements give zero") {
    std::vector<Eigen::VectorXd> xs(6, Eigen::Vector2d(3, -1));
    std::vector<std::uint8_t> right{0, 1, 0, 1, 1, 0};
    CHECK(std::abs(*info_gain_regression(xs, right, eps)) < 1e-9);
  }
  SUBCASE("fewer than two samples on a side is undefined") {
    std::vector<Eigen::VectorXd> xs(3, Eigen::Vector2d(0, 0));
    std::vector<std::uint8_t> right{0, 0, 1};
    CHECK_FALSE(info_gain_regression(xs, right, eps).has_value());
  }
}

TEST_CASE("train_forest on a separable toy set") {
  const TrainingSet ts = toy_set();
  ForestConfig cfg;
  cfg.n_trees = 3;
  cfg.min_leaf = 2;
  cfg.threads = 1;
  const HybridForest f = train_forest(ts, cfg);
  REQUIRE(f.trees.size() == 3);
  for (const auto& t : f.trees) CHECK(t.depth() == 1);
  // Every training sample's averaged leaf label reproduces its label.
  int correct = 0;
  for (const auto& s : ts.samples) {
    double m = 0;
    for (const auto& t : f.trees) m += t.leaves[static_cast<std::size_t>(route(t, ts.sources[0], 0, s.cx, s.cy))].mean_label[0];
    m /= 3;
    correct += (m >= 0.5) == (s.label[0] == 1);
  }
  CHECK(correct == static_cast<int>(ts.samples.size()));
}

TEST_CASE("train_forest is independent of the thread count and defaults to 8 trees") {
  const TrainingSet ts = toy_set();
  ForestConfig cfg;
  CHECK(cfg.n_trees == 8);
  cfg.n_candidate_splits = 50;
  cfg.threads = 1;
  const auto a = serialize_model(train_forest(ts, cfg));
  cfg.threads = 4;
  const auto b = serialize_model(train_forest(ts, cfg));
  CHECK(a == b);
  CHECK(deserialize_model(a).trees.size() == 8);
}

TEST_CASE("train_forest rejects malformed data") {
  TrainingSet ts = toy_set();
  ts.samples[0].label.pop_back();
  CHECK_THROWS_AS(train_forest(ts, ForestConfig{}), InvalidInput);
  TrainingSet empty;
  CHECK_THROWS_AS(train_forest(empty, ForestConfig{}), InvalidInput);
}

TEST_CASE("augment") {
  const PlanarImage mask = make_image(64, 64, [](int x, int y) { return (x >= 20 && x < 44 && y >= 26 && y < 38) ? 1.0 : 0.0; },
                                      Vec2::Ones(), {}, Role::mask);
  TrainSample s;
  s.cx = 32;
  s.cy = 32;
  s.label = extract_label(mask, 32, 32, 16);
  s.disp = {1.0f, 0.0f};
  SUBCASE("scale 1, angle 0 is the identity") {
    const TrainSample a = augment(s, Augmentation{1.0, 0.0}, mask, 16);
    CHECK(a.label == s.label);
    CHECK(a.disp == s.disp);
    CHECK(a.probe_xf == kIdentityProbe);
  }
  SUBCASE("90 degrees rotates (1,0) to (0,1)") {
    const TrainSample a = augment(s, Augmentation{1.0, std::numbers::pi / 2}, mask, 16);
    CHECK(a.disp[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(a.disp[1] == doctest::Approx(1.0));
  }
  SUBCASE("label area scales with s^2") {
    const PlanarImage disc = make_image(
        64, 64, [](int x, int y) { return (x - 32) * (x - 32) + (y - 32) * (y - 32) <= 25 ? 1.0 : 0.0; }, Vec2::Ones(), {},
        Role::mask);
    TrainSample d = s;
    d.label = extract_label(disc, 32, 32, 16);
    auto area = [](const std::vector<std::uint8_t>& l) { return std::count(l.begin(), l.end(), 1); };
    const double a0 = static_cast<double>(area(d.label));
    for (double sc : {0.8, 1.2}) {
      const double a1 = static_cast<double>(area(augment(d, Augmentation{sc, 0.3}, disc, 16).label));
      // Nearest-neighbour quantisation: allow one boundary ring of pixels.
      CHECK(std::abs(a1 - sc * sc * a0) <= 2 * std::numbers::pi * 5 * sc + 4);
    }
  }
  SUBCASE("drawn scales are positive and angles centred") {
    std::mt19937_64 rng(3);
    double sum = 0;
    for (int i = 0; i < 2000; ++i) {
      const Augmentation a = draw_augmentation(rng);
      CHECK(a.scale > 0.5);
      sum += a.angle_rad;
    }
    CHECK(std::abs(sum / 2000) < 0.05);
  }
}

TEST_CASE("predict_psm: constant-leaf forest matches the accumulation oracle") {
  ModelMeta meta = default_meta(ModelKind::sa2d);
  HybridForest f;
  f.meta = meta;
  DecisionTree t;
  t.nodes.emplace_back();
  t.nodes[0].leaf = 0;
  LeafPayload lp;
  lp.mean_label.resize(256);
  for (int i = 0; i < 256; ++i) lp.mean_label[static_cast<std::size_t>(i)] = static_cast<float>((i % 16) * (i / 16)) / 225.0f;
  t.leaves.push_back(lp);
  f.trees = {t, t};
  const PlanarImage img = test::smooth_texture(48, 40, 1);
  const PlanarImage psm = predict_psm(img, f, 2);
  const auto ref = oracle::psm(compute_feature_stack(img, meta.features), 0, f, 48, 40, 2);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(psm.samples()[i] - ref[i]) < 1e-6);
}

TEST_CASE("predict_psm: random shallow forest matches re-route-and-average") {
  const ModelMeta meta = default_meta(ModelKind::sa2d);
  const PlanarImage img = test::smooth_texture(64, 64, 21);
  const FeatureStack fs = compute_feature_stack(img, meta.features);
  const HybridForest f = random_forest(77, 2, 3, meta, fs.planes[0].channel_count());
  const PlanarImage psm = predict_psm(fs, 0, f, img, 2);
  const auto ref = oracle::psm(fs, 0, f, 64, 64, 2);
  double worst = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(psm.samples()[i] - ref[i]));
  CHECK(worst < 1e-6);
  for (float v : psm.samples()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("predict_psm rejects images smaller than the patch") {
  HybridForest f = random_forest(1, 1, 1, default_meta(ModelKind::sa2d), 10);
  CHECK_THROWS_AS(predict_psm(test::smooth_texture(24, 40, 1), f), InvalidInput);
}

TEST_CASE("predict_landmarks") {
  ModelMeta meta = default_meta(ModelKind::la2ch);
  meta.n_landmarks = 1;
  meta.landmark_names = {"apex"};
  auto leaf = [](float mx, float my, float var, float label) {
    LeafPayload lp;
    lp.mean_label.assign(256, label);
    lp.n = 1;
    lp.reg_mean = {mx, my};
    lp.reg_cov = {var, 0.0f, 0.0f, var};
    return lp;
  };
  // Root splits on the raw intensity at the probe centre.
  DecisionTree t;
  t.nodes.resize(3);
  t.nodes[0].split = SplitParam{SplitParam::Kind::single, 0, 0, 0, 0, 0, 0, 0, 0.5f};
  t.nodes[0].left = 1;
  t.nodes[0].right = 2;
  t.nodes[1].leaf = 0;
  t.nodes[2].leaf = 1;

  SUBCASE("delta votes land exactly at centre + mean") {
    HybridForest f;
    f.meta = meta;
    DecisionTree tree = t;
    LeafPayload none;
    none.mean_label.assign(256, 0.0f);
    tree.leaves = {none, leaf(5, 0, 1e-3f, 1)};
    f.trees = {tree};
    const PlanarImage img = make_image(64, 64, [](int x, int y) { return x == 30 && y == 30 ? 1.0 : 0.0; });
    const LandmarkPrediction p = predict_landmarks(img, f, 2);
    CHECK(p.pixels[0] == Vec2(35, 30));
    for (float v : p.hough[0].samples()) CHECK(v >= 0.0f);
  }
  SUBCASE("two weighted vote sources match brute-force accumulation") {
    HybridForest f;
    f.meta = meta;
    DecisionTree tree = t;
    tree.leaves = {leaf(-3, 2, 4.0f, 0), leaf(6, -1, 0.5f, 1)};
    f.trees = {tree};
    const PlanarImage img = make_image(64, 64, [](int x, int y) { return x > 40 && y > 40 ? 1.0 : 0.0; });
    const FeatureStack fs = compute_feature_stack(img, meta.features);
    const LandmarkPrediction p = predict_landmarks(fs, 0, f, img, 2);
    const auto ref = oracle::hough(fs, 0, f, 64, 64, 2, 0);
    std::size_t arg = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(p.hough[0].samples()[i] - ref[i]) <= 1e-5 * std::max(1.0, ref[i]));
      if (ref[i] > ref[arg]) arg = i;
    }
    CHECK(p.pixels[0] == Vec2(static_cast<double>(arg % 64), static_cast<double>(arg / 64)));
  }
}

TEST_CASE("model persistence") {
  const TrainingSet ts = toy_set();
  ForestConfig cfg;
  cfg.n_trees = 2;
  cfg.n_candidate_splits = 40;
  const HybridForest f = train_forest(ts, cfg);
  const auto bytes = serialize_model(f);
  const HybridForest g = deserialize_model(bytes);
  CHECK(serialize_model(g) == bytes);
  const PlanarImage img = make_image(96, 64, [](int x, int y) { return std::sin(x * 0.2) * std::cos(y * 0.1); });
  const PlanarImage a = predict_psm(img, f), b = predict_psm(img, g);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.samples()[i] == b.samples()[i]);

  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(deserialize_model(bad), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  CHECK_THROWS_AS(deserialize_model(truncated), FormatError);
  CHECK(deserialize_model(bytes).meta.patch_size == 32);
}

TEST_CASE("default model metadata") {
  CHECK(default_meta(ModelKind::la2ch).patch_size == 48);
  CHECK(default_meta(ModelKind::la4ch).n_landmarks == 3);
  CHECK(default_meta(ModelKind::sa2d).patch_size == 32);
  CHECK(default_meta(ModelKind::sa2d).label_size == 16);
  CHECK(default_meta(ModelKind::sa3d).z_reach > 0);
  CHECK(kind_from_name("la3ch") == ModelKind::la3ch);
  CHECK_THROWS_AS(kind_from_name("la5ch"), InvalidInput);
}

TEST_CASE("probe_centers keep the label footprint inside") {
  const auto c = probe_centers(40, 16, 2);
  CHECK(c.front() == 8);
  CHECK(c.back() + 8 <= 40);
  CHECK(c == oracle::centres(40, 16, 2));
}
