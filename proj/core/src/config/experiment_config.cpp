// SPDX-License-Identifier: Apache-2.0
#include "devmoe/config/experiment_config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "devmoe/util/digest.hpp"

namespace devmoe::config {

namespace {

class Parser {
 public:
  explicit Parser(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& key, const std::string& what) const {
    std::string where = source_;
    const YAML::Mark mark = node.Mark();
    if (mark.line >= 0 && !mark.is_null()) where += ":" + std::to_string(mark.line + 1);
    throw ConfigError(where + ": " + key + ": " + what);
  }

  void require_map(const YAML::Node& node, const std::string& key) const {
    if (!node.IsMap()) fail(node, key, "expected a mapping");
  }

  void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) const {
    require_map(node, section.empty() ? "<root>" : section);
    for (const auto& kv : node) {
      const std::string k = kv.first.as<std::string>();
      if (!allowed.count(k)) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(kv.first, section.empty() ? k : section + "." + k, "unknown key (allowed: " + list + ")");
      }
    }
  }

  std::string scalar(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, key, "expected a scalar");
    return node.Scalar();
  }

  std::uint64_t u64(const YAML::Node& node, const std::string& key) const {
    const std::string s = scalar(node, key);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(node, key, "expected a non-negative integer, got '" + s + "'");
    return v;
  }

  double real(const YAML::Node& node, const std::string& key) const {
    const std::string s = scalar(node, key);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(node, key, "expected a number, got '" + s + "'");
    return v;
  }

  bool boolean(const YAML::Node& node, const std::string& key) const {
    const std::string s = scalar(node, key);
    if (s == "true") return true;
    if (s == "false") return false;
    fail(node, key, "expected true or false, got '" + s + "'");
  }

  template <typename F>
  auto enumeration(const YAML::Node& node, const std::string& key, F parse) const {
    try {
      return parse(scalar(node, key));
    } catch (const std::invalid_argument& e) {
      fail(node, key, e.what());
    }
  }

 private:
  std::string source_;
};

using Setter = std::function<void(const Parser&, const YAML::Node&, const std::string&, ExperimentConfig&)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  using P = Parser;
  using N = YAML::Node;
  using S = std::string;
  using E = ExperimentConfig;
  static const std::map<std::string, std::map<std::string, Setter>> s{
      {"stream",
       {
           {"num_tasks", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.num_tasks = p.u64(n, k); }},
           {"n_train", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.n_train = p.u64(n, k); }},
           {"n_test", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.n_test = p.u64(n, k); }},
           {"real_basis", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.real_basis = p.u64(n, k); }},
           {"noise_std", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.noise_std = p.real(n, k); }},
           {"magnitude", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.magnitude = p.real(n, k); }},
           {"master_seed", [](const P& p, const N& n, const S& k, E& c) { c.run.stream.master_seed = p.u64(n, k); }},
           {"kind",
            [](const P& p, const N& n, const S& k, E& c) {
              c.run.stream.kind = p.enumeration(n, k, continual::parse_perturbation_kind);
            }},
       }},
      {"model",
       {
           {"num_blocks", [](const P& p, const N& n, const S& k, E& c) { c.run.model.backbone.num_blocks = p.u64(n, k); }},
           {"token_count", [](const P& p, const N& n, const S& k, E& c) { c.run.model.backbone.token_count = p.u64(n, k); }},
           {"embed_dim", [](const P& p, const N& n, const S& k, E& c) { c.run.model.backbone.embed_dim = p.u64(n, k); }},
           {"ffn_hidden", [](const P& p, const N& n, const S& k, E& c) { c.run.model.backbone.ffn_hidden = p.u64(n, k); }},
           {"backbone_seed", [](const P& p, const N& n, const S& k, E& c) { c.run.model.backbone.seed = p.u64(n, k); }},
           {"rank", [](const P& p, const N& n, const S& k, E& c) { c.run.model.rank = p.u64(n, k); }},
           {"temperature", [](const P& p, const N& n, const S& k, E& c) { c.run.model.temperature = p.real(n, k); }},
           {"delta", [](const P& p, const N& n, const S& k, E& c) { c.run.model.delta = p.real(n, k); }},
           {"gate",
            [](const P& p, const N& n, const S& k, E& c) { c.run.model.gate = p.enumeration(n, k, moe::parse_gate_reduction); }},
           {"adapt_both_ffn_linears",
            [](const P& p, const N& n, const S& k, E& c) { c.run.model.adapt_both_ffn_linears = p.boolean(n, k); }},
           {"residual", [](const P& p, const N& n, const S& k, E& c) { c.run.model.residual = p.boolean(n, k); }},
       }},
      {"trainer",
       {
           {"lr", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.adam.lr = p.real(n, k); }},
           {"beta1", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.adam.beta1 = p.real(n, k); }},
           {"beta2", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.adam.beta2 = p.real(n, k); }},
           {"epsilon", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.adam.epsilon = p.real(n, k); }},
           {"batch_size", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.batch_size = p.u64(n, k); }},
           {"epochs_per_task", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.epochs_per_task = p.u64(n, k); }},
           {"archive_samples", [](const P& p, const N& n, const S& k, E& c) { c.run.trainer.archive_samples = p.u64(n, k); }},
       }},
      {"ortho",
       {
           {"lambda3", [](const P& p, const N& n, const S& k, E& c) { c.run.ortho.lambda3 = p.real(n, k); }},
           {"svd_grad_flow", [](const P& p, const N& n, const S& k, E& c) { c.run.ortho.svd_grad_flow = p.boolean(n, k); }},
           {"column_cap", [](const P& p, const N& n, const S& k, E& c) { c.run.ortho.column_cap = p.u64(n, k); }},
           {"gap_epsilon", [](const P& p, const N& n, const S& k, E& c) { c.run.ortho.gap_epsilon = p.real(n, k); }},
           {"grad_orth_mode",
            [](const P& p, const N& n, const S& k, E& c) {
              c.run.ortho.mode = p.enumeration(n, k, objective::parse_grad_orth_mode);
            }},
           {"schedule",
            [](const P& p, const N& n, const S& k, E& c) {
              if (!n.IsSequence() || n.size() == 0) p.fail(n, k, "expected a non-empty list of {begin, end, lambda1, lambda2}");
              c.run.ortho.schedule.clear();
              for (std::size_t i = 0; i < n.size(); ++i) {
                const N e = n[i];
                const S key = k + "[" + std::to_string(i) + "]";
                p.check_keys(e, key, {"begin", "end", "lambda1", "lambda2"});
                for (const char* f : {"begin", "end", "lambda1", "lambda2"})
                  if (!e[f]) p.fail(e, key, std::string("missing ") + f);
                c.run.ortho.schedule.push_back({p.u64(e["begin"], key + ".begin"), p.u64(e["end"], key + ".end"),
                                                p.real(e["lambda1"], key + ".lambda1"),
                                                p.real(e["lambda2"], key + ".lambda2")});
              }
            }},
       }},
  };
  return s;
}

void apply_override(YAML::Node& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "': expected dotted.key=value");
  const std::string path = text.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(text.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + text + "': " + e.msg);
  }
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override '" + text + "': empty path component");
    parts.push_back(part);
  }
  // Nodes are handles; walk by re-binding a copy of each child handle.
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node child = chain.back()[parts[i]];
    if (!child.IsDefined() || child.IsNull()) {
      chain.back()[parts[i]] = YAML::Node(YAML::NodeType::Map);
      child = chain.back()[parts[i]];
    }
    if (!child.IsMap()) throw ConfigError("override '" + text + "': " + parts[i] + " is not a section");
    chain.push_back(child);
  }
  chain.back()[parts.back()] = value;
}

ExperimentConfig from_node(const YAML::Node& root, const Parser& p) {
  ExperimentConfig c;
  if (!root.IsDefined() || root.IsNull()) return c;
  std::set<std::string> top{"seeds", "variant", "sweep_ranks"};
  for (const auto& [section, _] : schema()) top.insert(section);
  p.check_keys(root, "", top);

  for (const auto& [section, fields] : schema()) {
    const YAML::Node node = root[section];
    if (!node) continue;
    std::set<std::string> allowed;
    for (const auto& [k, _] : fields) allowed.insert(k);
    p.check_keys(node, section, allowed);
    for (const auto& kv : node) {
      const std::string k = kv.first.as<std::string>();
      fields.at(k)(p, kv.second, section + "." + k, c);
    }
  }
  if (const YAML::Node v = root["variant"]) c.run.variant = p.enumeration(v, "variant", continual::parse_variant);
  const auto u64_list = [&](const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence() || n.size() == 0) p.fail(n, key, "expected a non-empty list of integers");
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(p.u64(n[i], key + "[" + std::to_string(i) + "]"));
    return out;
  };
  if (const YAML::Node v = root["seeds"]) c.seeds = u64_list(v, "seeds");
  if (const YAML::Node v = root["sweep_ranks"]) {
    c.sweep_ranks.clear();
    for (std::uint64_t r : u64_list(v, "sweep_ranks")) c.sweep_ranks.push_back(r);
  }
  c.run.stream.token_count = c.run.model.backbone.token_count;
  c.run.stream.embed_dim = c.run.model.backbone.embed_dim;
  try {
    c.run.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

std::string num(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  // Keep floats recognisable as such when read back by other tools.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source, std::span<const std::string> overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!overrides.empty() && (!root.IsDefined() || root.IsNull())) root = YAML::Node(YAML::NodeType::Map);
  for (const std::string& o : overrides) apply_override(root, o);
  return from_node(root, Parser(source));
}

ExperimentConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), overrides);
}

std::string to_yaml(const ExperimentConfig& c) {
  const auto& r = c.run;
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "variant" << YAML::Value << continual::to_string(r.variant);
  e << YAML::Key << "seeds" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto s : c.seeds) e << s;
  e << YAML::EndSeq;
  e << YAML::Key << "sweep_ranks" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto s : c.sweep_ranks) e << s;
  e << YAML::EndSeq;

  e << YAML::Key << "stream" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "num_tasks" << YAML::Value << r.stream.num_tasks;
  e << YAML::Key << "n_train" << YAML::Value << r.stream.n_train;
  e << YAML::Key << "n_test" << YAML::Value << r.stream.n_test;
  e << YAML::Key << "real_basis" << YAML::Value << r.stream.real_basis;
  e << YAML::Key << "noise_std" << YAML::Value << num(r.stream.noise_std);
  e << YAML::Key << "kind" << YAML::Value << continual::to_string(r.stream.kind);
  e << YAML::Key << "magnitude" << YAML::Value << num(r.stream.magnitude);
  e << YAML::Key << "master_seed" << YAML::Value << r.stream.master_seed;
  e << YAML::EndMap;

  e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "num_blocks" << YAML::Value << r.model.backbone.num_blocks;
  e << YAML::Key << "token_count" << YAML::Value << r.model.backbone.token_count;
  e << YAML::Key << "embed_dim" << YAML::Value << r.model.backbone.embed_dim;
  e << YAML::Key << "ffn_hidden" << YAML::Value << r.model.backbone.ffn_hidden;
  e << YAML::Key << "backbone_seed" << YAML::Value << r.model.backbone.seed;
  e << YAML::Key << "rank" << YAML::Value << r.model.rank;
  e << YAML::Key << "temperature" << YAML::Value << num(r.model.temperature);
  e << YAML::Key << "delta" << YAML::Value << num(r.model.delta);
  e << YAML::Key << "gate" << YAML::Value << moe::to_string(r.model.gate);
  e << YAML::Key << "adapt_both_ffn_linears" << YAML::Value << r.model.adapt_both_ffn_linears;
  e << YAML::Key << "residual" << YAML::Value << r.model.residual;
  e << YAML::EndMap;

  e << YAML::Key << "trainer" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "lr" << YAML::Value << num(r.trainer.adam.lr);
  e << YAML::Key << "beta1" << YAML::Value << num(r.trainer.adam.beta1);
  e << YAML::Key << "beta2" << YAML::Value << num(r.trainer.adam.beta2);
  e << YAML::Key << "epsilon" << YAML::Value << num(r.trainer.adam.epsilon);
  e << YAML::Key << "batch_size" << YAML::Value << r.trainer.batch_size;
  e << YAML::Key << "epochs_per_task" << YAML::Value << r.trainer.epochs_per_task;
  e << YAML::Key << "archive_samples" << YAML::Value << r.trainer.archive_samples;
  e << YAML::EndMap;

  e << YAML::Key << "ortho" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "lambda3" << YAML::Value << num(r.ortho.lambda3);
  e << YAML::Key << "grad_orth_mode" << YAML::Value << objective::to_string(r.ortho.mode);
  e << YAML::Key << "svd_grad_flow" << YAML::Value << r.ortho.svd_grad_flow;
  e << YAML::Key << "column_cap" << YAML::Value << r.ortho.column_cap;
  e << YAML::Key << "gap_epsilon" << YAML::Value << num(r.ortho.gap_epsilon);
  e << YAML::Key << "schedule" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : r.ortho.schedule) {
    e << YAML::Flow << YAML::BeginMap;
    e << YAML::Key << "begin" << YAML::Value << s.begin;
    e << YAML::Key << "end" << YAML::Value << s.end;
    e << YAML::Key << "lambda1" << YAML::Value << num(s.lambda1);
    e << YAML::Key << "lambda2" << YAML::Value << num(s.lambda2);
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string config_digest(const ExperimentConfig& config) { return util::to_hex(util::fnv1a64(to_yaml(config))); }

}  // namespace devmoe::config
