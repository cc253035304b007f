// SPDX-License-Identifier: Apache-2.0
#include "devmoe/network/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "devmoe/util/digest.hpp"

namespace devmoe::network {

struct CheckpointAccess {
  static Backbone& backbone(DevMoeModel& m) { return m.backbone_; }
  static linalg::Rng& rng(DevMoeModel& m) { return m.rng_; }
  static std::size_t& tasks_seen(DevMoeModel& m) { return m.tasks_seen_; }
};

namespace {

constexpr char kMagic[8] = {'D', 'E', 'V', 'M', 'O', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    out_ += s;
  }
  void put_matrix(const Matrix& m) {
    put<std::uint64_t>(m.rows());
    put<std::uint64_t>(m.cols());
    for (double v : m.values()) put(v);
  }
  [[nodiscard]] const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string path) : data_(data), path_(std::move(path)) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Matrix get_matrix() {
    const auto r = get<std::uint64_t>();
    const auto c = get<std::uint64_t>();
    if (r != 0 && c > (data_.size() - pos_) / sizeof(double) / r) fail("matrix shape exceeds file size");
    Matrix m(r, c);
    for (double& v : m.values()) v = get<double>();
    return m;
  }
  void expect_matrix(Matrix& dst, const char* what) {
    Matrix m = get_matrix();
    if (!m.same_shape(dst)) fail(std::string(what) + " has shape " + m.shape_string() + ", expected " + dst.shape_string());
    dst = std::move(m);
  }
  [[nodiscard]] bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("checkpoint " + path_ + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DevMoeModel& model, const std::string& config_digest) {
  Writer w;
  const ModelConfig& c = model.config();
  w.put_string(config_digest);
  w.put<std::uint64_t>(c.backbone.num_blocks);
  w.put<std::uint64_t>(c.backbone.token_count);
  w.put<std::uint64_t>(c.backbone.embed_dim);
  w.put<std::uint64_t>(c.backbone.ffn_hidden);
  w.put<std::uint64_t>(c.backbone.seed);
  w.put<std::uint64_t>(c.rank);
  w.put(c.temperature);
  w.put(c.delta);
  w.put<std::uint8_t>(c.gate == moe::GateReduction::Mean ? 0 : 1);
  w.put<std::uint8_t>(c.adapt_both_ffn_linears ? 1 : 0);
  w.put<std::uint8_t>(c.residual ? 1 : 0);
  w.put<std::uint64_t>(c.adapter_seed);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(model.layout()));
  w.put<std::uint64_t>(model.tasks_seen());
  std::ostringstream rng;
  rng << model.rng();
  w.put_string(rng.str());
  for (const Block& b : model.backbone().blocks) {
    w.put_matrix(b.token_mix);
    w.put_matrix(b.w1);
    w.put_matrix(b.b1);
    w.put_matrix(b.w2);
    w.put_matrix(b.b2);
  }
  w.put_matrix(model.head().weight);
  w.put_matrix(model.head().bias);
  for (const moe::DevMoeLayer& layer : model.layers()) {
    w.put<std::uint64_t>(layer.experts().size());
    for (const moe::LoraExpert& e : layer.experts()) {
      w.put<std::uint8_t>(e.kind == moe::ExpertKind::Real ? 0 : 1);
      w.put<std::uint64_t>(e.task_id);
      w.put<std::uint8_t>(e.frozen ? 1 : 0);
      w.put_matrix(e.a);
      w.put_matrix(e.b);
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint " + path.string() + ": cannot open for writing");
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  const std::uint64_t sum = util::fnv1a64(w.bytes());
  out.write(reinterpret_cast<const char*>(&sum), sizeof sum);
  if (!out) throw std::runtime_error("checkpoint " + path.string() + ": write failed");
}

DevMoeModel load_checkpoint(const std::filesystem::path& path, const std::string& expected_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint " + path.string() + ": cannot open for reading");
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = sizeof kMagic + sizeof(std::uint32_t);
  if (file.size() < header + sizeof(std::uint64_t) || std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint " + path.string() + ": not a devmoe checkpoint");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, file.data() + sizeof kMagic, sizeof version);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::string_view payload(file.data() + header, file.size() - header - sizeof(std::uint64_t));
  std::uint64_t stored_sum = 0;
  std::memcpy(&stored_sum, file.data() + file.size() - sizeof stored_sum, sizeof stored_sum);
  if (util::fnv1a64(payload) != stored_sum) throw std::runtime_error("checkpoint " + path.string() + ": checksum mismatch");

  Reader r(payload, path.string());
  const std::string digest = r.get_string();
  if (digest != expected_digest) r.fail("config digest " + digest + " does not match expected " + expected_digest);
  ModelConfig c;
  c.backbone.num_blocks = r.get<std::uint64_t>();
  c.backbone.token_count = r.get<std::uint64_t>();
  c.backbone.embed_dim = r.get<std::uint64_t>();
  c.backbone.ffn_hidden = r.get<std::uint64_t>();
  c.backbone.seed = r.get<std::uint64_t>();
  c.rank = r.get<std::uint64_t>();
  c.temperature = r.get<double>();
  c.delta = r.get<double>();
  c.gate = r.get<std::uint8_t>() == 0 ? moe::GateReduction::Mean : moe::GateReduction::L2Norm;
  c.adapt_both_ffn_linears = r.get<std::uint8_t>() != 0;
  c.residual = r.get<std::uint8_t>() != 0;
  c.adapter_seed = r.get<std::uint64_t>();
  const auto layout_raw = r.get<std::uint8_t>();
  if (layout_raw > static_cast<std::uint8_t>(moe::BankLayout::RealAndFakeSequences)) r.fail("unknown bank layout");
  DevMoeModel model(c, static_cast<moe::BankLayout>(layout_raw));
  CheckpointAccess::tasks_seen(model) = r.get<std::uint64_t>();
  std::istringstream rng(r.get_string());
  rng >> CheckpointAccess::rng(model);
  if (!rng) r.fail("malformed RNG state");
  for (Block& b : CheckpointAccess::backbone(model).blocks) {
    r.expect_matrix(b.token_mix, "token_mix");
    r.expect_matrix(b.w1, "w1");
    r.expect_matrix(b.b1, "b1");
    r.expect_matrix(b.w2, "w2");
    r.expect_matrix(b.b2, "b2");
  }
  r.expect_matrix(model.head().weight, "head weight");
  r.expect_matrix(model.head().bias, "head bias");
  for (moe::DevMoeLayer& layer : model.layers()) {
    const auto count = r.get<std::uint64_t>();
    if (count > 1'000'000) r.fail("implausible expert count");
    auto& experts = layer.experts();
    experts.clear();
    for (std::uint64_t k = 0; k < count; ++k) {
      moe::LoraExpert e;
      e.kind = r.get<std::uint8_t>() == 0 ? moe::ExpertKind::Real : moe::ExpertKind::Fake;
      e.task_id = r.get<std::uint64_t>();
      e.frozen = r.get<std::uint8_t>() != 0;
      e.a = r.get_matrix();
      e.b = r.get_matrix();
      experts.push_back(std::move(e));
    }
    try {
      layer.validate();
    } catch (const std::logic_error& err) {
      r.fail(err.what());
    }
  }
  if (!r.done()) r.fail("trailing bytes");
  return model;
}

}  // namespace devmoe::network
