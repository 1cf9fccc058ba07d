#include <bit>
#include <cstring>
#include <fstream>

#include "cmc/error.hpp"
#include "cmc/forest.hpp"
#include "cmc/image_io.hpp"

namespace cmc {

namespace {

constexpr const char* kKindNames[] = {"la2ch", "la3ch", "la4ch", "sa2d", "sa3d"};

}  // namespace

const char* kind_name(ModelKind kind) { return kKindNames[static_cast<int>(kind)]; }

ModelKind kind_from_name(const std::string& name) {
  for (int i = 0; i < 5; ++i)
    if (name == kKindNames[i]) return static_cast<ModelKind>(i);
  throw InvalidInput("unknown model kind '" + name + "'");
}

bool is_long_axis(ModelKind kind) {
  return kind == ModelKind::la2ch || kind == ModelKind::la3ch || kind == ModelKind::la4ch;
}

ModelMeta default_meta(ModelKind kind) {
  ModelMeta m;
  m.kind = kind;
  m.label_size = 16;
  if (is_long_axis(kind)) {
    m.patch_size = 48;
    m.n_landmarks = 3;
    m.landmark_names = {"apex", "mv1", "mv2"};
  } else {
    m.patch_size = 32;
  }
  if (kind == ModelKind::sa3d) {
    m.z_reach = 8;  // +-2 slice gaps at 2.5 mm planes
    m.z_spacing_mm = 2.5;
  }
  return m;
}

nlohmann::json to_json(const ModelMeta& m) {
  return {{"kind", kind_name(m.kind)},
          {"patch_size", m.patch_size},
          {"label_size", m.label_size},
          {"n_landmarks", m.n_landmarks},
          {"landmark_names", m.landmark_names},
          {"features", to_json(m.features)},
          {"z_reach", m.z_reach},
          {"z_spacing_mm", m.z_spacing_mm},
          {"provenance", m.provenance}};
}

ModelMeta meta_from_json(const nlohmann::json& j) {
  try {
    ModelMeta m;
    m.kind = kind_from_name(j.at("kind").get<std::string>());
    m.patch_size = j.at("patch_size").get<int>();
    m.label_size = j.at("label_size").get<int>();
    m.n_landmarks = j.at("n_landmarks").get<int>();
    m.landmark_names = j.at("landmark_names").get<std::vector<std::string>>();
    m.features = feature_config_from_json(j.at("features"));
    m.z_reach = j.value("z_reach", 0);
    m.z_spacing_mm = j.value("z_spacing_mm", 0.0);
    m.provenance = j.value("provenance", nlohmann::json::object());
    if (m.patch_size < 2 || m.label_size < 1 || m.label_size > m.patch_size || m.n_landmarks < 0)
      throw FormatError("model metadata has invalid sizes");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model metadata: ") + e.what());
  }
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("model file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const HybridForest& forest) {
  Writer w;
  w.bytes("CAMF");
  w.u16(kModelFormatVersion);
  const std::string meta = to_json(forest.meta).dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  const auto label_px = static_cast<std::size_t>(forest.meta.label_pixels());
  const auto nl = static_cast<std::size_t>(forest.meta.n_landmarks);
  w.u32(static_cast<std::uint32_t>(forest.trees.size()));
  for (const DecisionTree& t : forest.trees) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const TreeNode& n : t.nodes) {
      w.i32(n.leaf);
      w.i32(n.left);
      w.i32(n.right);
      w.u32(static_cast<std::uint32_t>(n.split.kind));
      w.i32(n.split.channel);
      for (int v : {n.split.dx1, n.split.dy1, n.split.dz1, n.split.dx2, n.split.dy2, n.split.dz2}) w.i32(v);
      w.f32(n.split.threshold);
    }
    w.u32(static_cast<std::uint32_t>(t.leaves.size()));
    for (const LeafPayload& l : t.leaves) {
      if (l.mean_label.size() != label_px) throw InvalidInput("leaf label size does not match metadata");
      w.u32(l.n);
      w.f32(l.peak);
      for (float v : l.mean_label) w.f32(v);
      const bool reg = l.has_regression();
      w.u8(reg ? 1 : 0);
      if (reg) {
        if (l.reg_mean.size() != 2 * nl || l.reg_cov.size() != 4 * nl)
          throw InvalidInput("leaf regression payload does not match metadata");
        for (float v : l.reg_mean) w.f32(v);
        for (float v : l.reg_cov) w.f32(v);
      }
    }
  }
  const std::uint32_t crc = crc32_bytes(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

HybridForest deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 14) throw FormatError("model file truncated");
  if (std::memcmp(bytes.data(), "CAMF", 4) != 0) throw FormatError("not a CAMF model (bad magic)");
  Reader head(bytes.subspan(4, 2));
  const std::uint16_t version = head.u16();
  if (version != kModelFormatVersion)
    throw FormatError("model format version " + std::to_string(version) + " unsupported (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.subspan(bytes.size() - 4));
  if (crc32_bytes(body) != tail.u32()) throw FormatError("model checksum mismatch (file corrupted)");

  Reader r(body.subspan(6));
  HybridForest f;
  const std::uint32_t meta_len = r.u32();
  try {
    f.meta = meta_from_json(nlohmann::json::parse(r.str(meta_len)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model metadata: ") + e.what());
  }
  const auto label_px = static_cast<std::size_t>(f.meta.label_pixels());
  const auto nl = static_cast<std::size_t>(f.meta.n_landmarks);
  const std::uint32_t n_trees = r.u32();
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    DecisionTree tree;
    const std::uint32_t n_nodes = r.u32();
    r.need(static_cast<std::size_t>(n_nodes) * 48);
    tree.nodes.resize(n_nodes);
    for (TreeNode& n : tree.nodes) {
      n.leaf = r.i32();
      n.left = r.i32();
      n.right = r.i32();
      const std::uint32_t kind = r.u32();
      if (kind > 1) throw FormatError("invalid split kind");
      n.split.kind = static_cast<SplitParam::Kind>(kind);
      n.split.channel = r.i32();
      for (int* v : {&n.split.dx1, &n.split.dy1, &n.split.dz1, &n.split.dx2, &n.split.dy2, &n.split.dz2})
        *v = r.i32();
      n.split.threshold = r.f32();
    }
    const std::uint32_t n_leaves = r.u32();
    r.need(static_cast<std::size_t>(n_leaves) * (9 + 4 * label_px));
    tree.leaves.resize(n_leaves);
    for (LeafPayload& l : tree.leaves) {
      l.n = r.u32();
      l.peak = r.f32();
      l.mean_label.resize(label_px);
      for (float& v : l.mean_label) v = r.f32();
      if (r.u8()) {
        l.reg_mean.resize(2 * nl);
        l.reg_cov.resize(4 * nl);
        for (float& v : l.reg_mean) v = r.f32();
        for (float& v : l.reg_cov) v = r.f32();
      }
    }
    // Structural checks so routing can never index out of range.
    const auto nn = static_cast<std::int32_t>(tree.nodes.size());
    const auto nlv = static_cast<std::int32_t>(tree.leaves.size());
    if (nn == 0) throw FormatError("tree without nodes");
    for (std::int32_t i = 0; i < nn; ++i) {
      const TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) {
        if (n.leaf >= nlv) throw FormatError("leaf index out of range");
      } else if (n.left <= i || n.right <= i || n.left >= nn || n.right >= nn) {
        throw FormatError("child index out of range");
      }
    }
    f.trees.push_back(std::move(tree));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes in model file");
  return f;
}

void save_model(const std::filesystem::path& path, const HybridForest& forest) {
  const auto bytes = serialize_model(forest);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

HybridForest load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace cmc
