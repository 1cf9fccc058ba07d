#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cmc/error.hpp"
#include "cmc/forest.hpp"
#include "cmc/parallel.hpp"

namespace cmc {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

nlohmann::json to_json(const ForestConfig& c) {
  return {{"n_trees", c.n_trees},
          {"max_depth", c.max_depth},
          {"min_leaf", c.min_leaf},
          {"n_candidate_splits", c.n_candidate_splits},
          {"thresholds_per_feature", c.thresholds_per_feature},
          {"bag_fraction", c.bag_fraction},
          {"regression_probability", c.regression_probability},
          {"regression_min_depth", c.regression_min_depth},
          {"pair_samples", c.pair_samples},
          {"pca_iterations", c.pca_iterations},
          {"pca_max_samples", c.pca_max_samples},
          {"split_eval_max_samples", c.split_eval_max_samples},
          {"difference_probability", c.difference_probability},
          {"cov_epsilon", c.cov_epsilon},
          {"seed", c.seed}};
}

ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig c) {
  c.n_trees = j.value("n_trees", c.n_trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.min_leaf = j.value("min_leaf", c.min_leaf);
  c.n_candidate_splits = j.value("n_candidate_splits", c.n_candidate_splits);
  c.thresholds_per_feature = j.value("thresholds_per_feature", c.thresholds_per_feature);
  c.bag_fraction = j.value("bag_fraction", c.bag_fraction);
  c.regression_probability = j.value("regression_probability", c.regression_probability);
  c.regression_min_depth = j.value("regression_min_depth", c.regression_min_depth);
  c.pair_samples = j.value("pair_samples", c.pair_samples);
  c.pca_iterations = j.value("pca_iterations", c.pca_iterations);
  c.pca_max_samples = j.value("pca_max_samples", c.pca_max_samples);
  c.split_eval_max_samples = j.value("split_eval_max_samples", c.split_eval_max_samples);
  c.difference_probability = j.value("difference_probability", c.difference_probability);
  c.cov_epsilon = j.value("cov_epsilon", c.cov_epsilon);
  c.seed = j.value("seed", c.seed);
  return c;
}

float split_response(const SplitParam& s, const FeatureStack& fs, int plane, int cx, int cy,
                     const ProbeTransform& xf) {
  auto probe = [&](int dx, int dy, int dz) {
    const auto ox = static_cast<int>(std::lround(xf[0] * dx + xf[1] * dy));
    const auto oy = static_cast<int>(std::lround(xf[2] * dx + xf[3] * dy));
    return fs.probe(s.channel, cx + ox, cy + oy, plane + dz);
  };
  const float a = probe(s.dx1, s.dy1, s.dz1);
  if (s.kind == SplitParam::Kind::single) return a;
  return a - probe(s.dx2, s.dy2, s.dz2);
}

int route(const DecisionTree& tree, const FeatureStack& fs, int plane, int cx, int cy, const ProbeTransform& xf) {
  std::int32_t node = 0;
  while (!tree.nodes[static_cast<std::size_t>(node)].is_leaf()) {
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = split_response(nd.split, fs, plane, cx, cy, xf) >= nd.split.threshold ? nd.right : nd.left;
  }
  return tree.nodes[static_cast<std::size_t>(node)].leaf;
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

enum class NodeType { classification, regression };

struct Candidate {
  SplitParam split;
  double gain = 0.0;
  bool valid = false;
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& data, const ForestConfig& cfg, std::uint64_t seed)
      : data_(data), meta_(data.meta), cfg_(cfg), seed_(seed),
        reg_dim_(2 * data.meta.n_landmarks), n_channels_(channel_count(data)) {}

  DecisionTree build() {
    std::mt19937_64 rng(seed_);
    const std::size_t n = data_.samples.size();
    const auto n_bag = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg_.bag_fraction * static_cast<double>(n))), 1, n);
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    for (std::size_t i = 0; i < n_bag; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    all.resize(n_bag);
    std::sort(all.begin(), all.end());

    struct Task {
      std::int32_t node;
      int depth;
      std::vector<std::uint32_t> idx;
    };
    tree_.nodes.assign(1, TreeNode{});
    std::vector<Task> stack;
    stack.push_back({0, 0, std::move(all)});
    while (!stack.empty()) {
      Task task = std::move(stack.back());
      stack.pop_back();
      auto children = grow(task.node, task.depth, task.idx);
      if (!children) continue;
      // Push right first so the left subtree is built first.
      const TreeNode& nd = tree_.nodes[static_cast<std::size_t>(task.node)];
      stack.push_back({nd.right, task.depth + 1, std::move(children->second)});
      stack.push_back({nd.left, task.depth + 1, std::move(children->first)});
    }
    return std::move(tree_);
  }

 private:
  static int channel_count(const TrainingSet& data) {
    if (data.sources.empty() || data.sources.front().planes.empty())
      throw InvalidInput("training set has no feature sources");
    return data.sources.front().planes.front().channel_count();
  }

  float response(const SplitParam& s, std::uint32_t i) const {
    const TrainSample& t = data_.samples[i];
    return split_response(s, data_.sources[t.source], t.plane, t.cx, t.cy, t.probe_xf);
  }

  using Split = std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>;

  std::optional<Split> grow(std::int32_t node, int depth, const std::vector<std::uint32_t>& idx) {
    const std::size_t n = idx.size();
    if (depth >= cfg_.max_depth || n < 2 * static_cast<std::size_t>(cfg_.min_leaf)) {
      make_leaf(node, idx);
      return std::nullopt;
    }
    std::mt19937_64 rng(derive_seed(seed_, static_cast<std::uint64_t>(node)));

    std::vector<std::uint32_t> eval = idx;
    if (n > static_cast<std::size_t>(cfg_.split_eval_max_samples)) {
      const auto m = static_cast<std::size_t>(cfg_.split_eval_max_samples);
      for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(eval[i], eval[pick(rng)]);
      }
      eval.resize(m);
      std::sort(eval.begin(), eval.end());
    }

    const bool reg_available = reg_dim_ > 0 && eval.size() >= 4;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double type_draw = uni(rng);
    NodeType first = NodeType::classification;
    if (reg_available && depth >= cfg_.regression_min_depth && type_draw < cfg_.regression_probability)
      first = NodeType::regression;

    Candidate best = search(first, eval, rng);
    if (!best.valid && reg_available) {
      const NodeType second = first == NodeType::regression ? NodeType::classification : NodeType::regression;
      best = search(second, eval, rng);
    }
    if (!best.valid) {
      make_leaf(node, idx);
      return std::nullopt;
    }

    Split out;
    for (std::uint32_t i : idx) (response(best.split, i) >= best.split.threshold ? out.second : out.first).push_back(i);
    if (out.first.size() < static_cast<std::size_t>(cfg_.min_leaf) ||
        out.second.size() < static_cast<std::size_t>(cfg_.min_leaf)) {
      make_leaf(node, idx);
      return std::nullopt;
    }
    const auto left = static_cast<std::int32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes.emplace_back();
    TreeNode& nd = tree_.nodes[static_cast<std::size_t>(node)];
    nd.split = best.split;
    nd.left = left;
    nd.right = left + 1;
    return out;
  }

  SplitParam draw_feature(std::mt19937_64& rng) const {
    const int half = std::max(1, meta_.patch_size / 2 - 1);
    std::uniform_int_distribution<int> off(-half, half);
    std::uniform_int_distribution<int> zoff(-meta_.z_reach, meta_.z_reach);
    std::uniform_int_distribution<int> chan(0, n_channels_ - 1);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    SplitParam s;
    s.kind = uni(rng) < cfg_.difference_probability ? SplitParam::Kind::difference : SplitParam::Kind::single;
    s.channel = chan(rng);
    s.dx1 = off(rng);
    s.dy1 = off(rng);
    s.dz1 = zoff(rng);
    if (s.kind == SplitParam::Kind::difference) {
      s.dx2 = off(rng);
      s.dy2 = off(rng);
      s.dz2 = zoff(rng);
    }
    return s;
  }

  // Class labels of the eval samples via the pairwise mapping + PCA. Returns
  // false when the labels are all identical (pure node).
  bool classify(const std::vector<std::uint32_t>& eval, std::mt19937_64& rng, std::vector<std::uint8_t>& classes) const {
    const int label_px = meta_.label_pixels();
    std::uniform_int_distribution<int> pix(0, label_px - 1);
    std::vector<PixelPair> pairs(static_cast<std::size_t>(cfg_.pair_samples));
    for (auto& p : pairs) {
      p.first = pix(rng);
      do p.second = pix(rng);
      while (p.second == p.first);
    }
    std::vector<std::vector<std::uint8_t>> zs;
    zs.reserve(eval.size());
    for (std::uint32_t i : eval) zs.push_back(pi_mapping(data_.samples[i].label, pairs));
    classes = binarize_labels(zs, cfg_.pca_iterations, cfg_.pca_max_samples);
    const auto ones = std::count(classes.begin(), classes.end(), std::uint8_t{1});
    return ones > 0 && ones < static_cast<std::ptrdiff_t>(classes.size());
  }

  Candidate search(NodeType type, const std::vector<std::uint32_t>& eval, std::mt19937_64& rng) const {
    Candidate best;
    std::vector<std::uint8_t> classes;
    if (type == NodeType::classification && !classify(eval, rng, classes)) return best;

    const int per_feature = std::max(1, cfg_.thresholds_per_feature);
    const int n_features = std::max(1, cfg_.n_candidate_splits / per_feature);
    const std::size_t n = eval.size();
    std::vector<float> resp(n);
    std::vector<float> thresholds;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);

    for (int f = 0; f < n_features; ++f) {
      SplitParam s = draw_feature(rng);
      for (std::size_t i = 0; i < n; ++i) resp[i] = response(s, eval[i]);
      thresholds.clear();
      for (int t = 0; t < per_feature; ++t) thresholds.push_back(resp[pick(rng)]);
      std::sort(thresholds.begin(), thresholds.end());
      thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
      const std::size_t nb = thresholds.size() + 1;

      // bucket(i) = number of thresholds <= resp[i]; sample goes right for
      // threshold t iff bucket(i) > t.
      auto bucket_of = [&](float r) {
        return static_cast<std::size_t>(std::upper_bound(thresholds.begin(), thresholds.end(), r) -
                                        thresholds.begin());
      };

      if (type == NodeType::classification) {
        std::vector<ClassCounts> buckets(nb);
        for (std::size_t i = 0; i < n; ++i) {
          ClassCounts& b = buckets[bucket_of(resp[i])];
          (classes[i] ? b.n1 : b.n0) += 1.0;
        }
        ClassCounts total;
        for (const auto& b : buckets) {
          total.n0 += b.n0;
          total.n1 += b.n1;
        }
        ClassCounts left;
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
          left.n0 += buckets[t].n0;
          left.n1 += buckets[t].n1;
          const ClassCounts right{total.n0 - left.n0, total.n1 - left.n1};
          if (left.total() < 1.0 || right.total() < 1.0) continue;
          const double g = info_gain_classification(left, right);
          if (g > 1e-12 && g > best.gain) {
            best.gain = g;
            best.split = s;
            best.split.threshold = thresholds[t];
            best.valid = true;
          }
        }
      } else {
        std::vector<DisplacementMoments> buckets(nb, DisplacementMoments(reg_dim_));
        for (std::size_t i = 0; i < n; ++i) buckets[bucket_of(resp[i])].add(data_.samples[eval[i]].disp);
        DisplacementMoments total(reg_dim_);
        for (const auto& b : buckets) total.merge(b);
        DisplacementMoments left(reg_dim_);
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
          left.merge(buckets[t]);
          DisplacementMoments right(reg_dim_);
          for (std::size_t u = t + 1; u < nb; ++u) right.merge(buckets[u]);
          const auto g = info_gain_regression(left, right, cfg_.cov_epsilon);
          if (g && *g > 1e-12 && *g > best.gain) {
            best.gain = *g;
            best.split = s;
            best.split.threshold = thresholds[t];
            best.valid = true;
          }
        }
      }
    }
    return best;
  }

  void make_leaf(std::int32_t node, const std::vector<std::uint32_t>& idx) {
    LeafPayload leaf;
    const int label_px = meta_.label_pixels();
    std::vector<double> acc(static_cast<std::size_t>(label_px), 0.0);
    for (std::uint32_t i : idx) {
      const auto& lab = data_.samples[i].label;
      for (int p = 0; p < label_px; ++p) acc[static_cast<std::size_t>(p)] += lab[static_cast<std::size_t>(p)];
    }
    leaf.mean_label.resize(static_cast<std::size_t>(label_px));
    const double inv = idx.empty() ? 0.0 : 1.0 / static_cast<double>(idx.size());
    for (int p = 0; p < label_px; ++p)
      leaf.mean_label[static_cast<std::size_t>(p)] = static_cast<float>(acc[static_cast<std::size_t>(p)] * inv);
    leaf.peak = leaf.mean_label.empty() ? 0.0f : *std::max_element(leaf.mean_label.begin(), leaf.mean_label.end());
    leaf.n = static_cast<std::uint32_t>(idx.size());

    if (reg_dim_ > 0) {
      for (int l = 0; l < meta_.n_landmarks; ++l) {
        DisplacementMoments m(2);
        for (std::uint32_t i : idx) {
          const auto& d = data_.samples[i].disp;
          const float pair[2] = {d[static_cast<std::size_t>(2 * l)], d[static_cast<std::size_t>(2 * l + 1)]};
          m.add(std::span<const float>(pair, 2));
        }
        const Eigen::VectorXd mu = m.mean();
        Eigen::MatrixXd cov = m.covariance();
        cov.diagonal().array() += cfg_.cov_epsilon;
        leaf.reg_mean.push_back(static_cast<float>(mu[0]));
        leaf.reg_mean.push_back(static_cast<float>(mu[1]));
        leaf.reg_cov.push_back(static_cast<float>(cov(0, 0)));
        leaf.reg_cov.push_back(static_cast<float>(cov(0, 1)));
        leaf.reg_cov.push_back(static_cast<float>(cov(1, 0)));
        leaf.reg_cov.push_back(static_cast<float>(cov(1, 1)));
      }
    }
    TreeNode& nd = tree_.nodes[static_cast<std::size_t>(node)];
    nd.leaf = static_cast<std::int32_t>(tree_.leaves.size());
    nd.left = nd.right = -1;
    tree_.leaves.push_back(std::move(leaf));
  }

  const TrainingSet& data_;
  const ModelMeta& meta_;
  const ForestConfig& cfg_;
  std::uint64_t seed_;
  int reg_dim_;
  int n_channels_;
  DecisionTree tree_;
};

}  // namespace

HybridForest train_forest(const TrainingSet& data, const ForestConfig& cfg) {
  if (data.samples.empty()) throw InvalidInput("train_forest: empty dataset");
  if (cfg.min_leaf < 1) throw InvalidInput("train_forest: min_leaf must be >= 1");
  if (cfg.n_trees < 1) throw InvalidInput("train_forest: need at least one tree");
  if (cfg.pair_samples < 1) throw InvalidInput("train_forest: pair_samples must be >= 1");
  const auto label_px = static_cast<std::size_t>(data.meta.label_pixels());
  const auto reg_dim = static_cast<std::size_t>(2 * data.meta.n_landmarks);
  for (const TrainSample& s : data.samples) {
    if (s.label.size() != label_px) throw InvalidInput("train_forest: label patch size mismatch");
    if (s.disp.size() != reg_dim) throw InvalidInput("train_forest: displacement labels missing or malformed");
    if (s.source >= data.sources.size()) throw InvalidInput("train_forest: sample source out of range");
  }

  HybridForest forest;
  forest.meta = data.meta;
  forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  parallel_for(forest.trees.size(), cfg.threads, [&](std::size_t t) {
    TreeBuilder builder(data, cfg, derive_seed(cfg.seed, t));
    forest.trees[t] = builder.build();
  });
  forest.meta.provenance["forest_config"] = to_json(cfg);
  forest.meta.provenance["n_training_samples"] = data.samples.size();
  return forest;
}

}  // namespace cmc
