#include "osplit/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "osplit/errors.hpp"
#include "osplit/tensor.hpp"

namespace osplit {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expect) {
  throw ConfigError("config: bad value \"" + value + "\" for key \"" + key + "\" (expected " +
                    expect + ")");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    std::size_t pos = 0;
    unsigned long long u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(u);
  } catch (const std::exception&) {
    bad_value(key, v, "a non-negative integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  return static_cast<std::uint64_t>(parse_size(key, v));
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return i;
  } catch (const std::exception&) {
    bad_value(key, v, "an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  const std::string t = lower(v);
  if (t == "true" || t == "yes" || t == "1") return true;
  if (t == "false" || t == "no" || t == "0") return false;
  bad_value(key, v, "true or false");
}

// Maps a token through its accepted aliases onto the canonical spelling, or
// rejects it naming the alternatives.
std::string token(const std::string& key, const std::string& v,
                  const std::map<std::string, std::string>& canon) {
  auto it = canon.find(lower(v));
  if (it == canon.end()) {
    std::string opts;
    for (const auto& [alias, c] : canon)
      if (alias == c) opts += (opts.empty() ? "" : " | ") + c;
    bad_value(key, v, opts);
  }
  return it->second;
}

const std::map<std::string, std::string> kDatasetTokens = {
    {"blobs", "blobs"}, {"idx", "idx"}};
const std::map<std::string, std::string> kOwnershipTokens = {
    {"shared", "shared"}, {"sch", "shared"}, {"per-client", "per-client"},
    {"perclient", "per-client"}, {"pch", "per-client"}};
const std::map<std::string, std::string> kBottleneckTokens = {
    {"raw", "raw"},       {"projection", "projection"}, {"proj", "projection"},
    {"codec", "codec"},   {"learned-1x1", "codec"},     {"learned1x1", "codec"}};
const std::map<std::string, std::string> kModeTokens = {
    {"fixed", "fixed"}, {"lsf", "fixed"}, {"learned", "learned"}, {"lsl", "learned"}};
const std::map<std::string, std::string> kBasisTokens = {
    {"gaussian", "gaussian"}, {"uniform01", "uniform01"}, {"uniform", "uniform01"}};
const std::map<std::string, std::string> kOptimizerTokens = {
    {"adam", "adam"}, {"sgd", "sgd"}};
const std::map<std::string, std::string> kTransportTokens = {
    {"inproc", "inproc"}, {"tcp", "tcp"}};
const std::map<std::string, std::string> kAttackTokens = {{"none", "none"},
                                                          {"decoder", "decoder"},
                                                          {"gradmatch", "gradmatch"},
                                                          {"both", "both"}};

using Setter = std::function<void(ExperimentConfig&, const std::string& key,
                                  const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.dataset = token(k, v, kDatasetTokens);
       }},
      {"samples", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.samples = parse_size(k, v);
       }},
      {"test_samples", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.test_samples = parse_size(k, v);
       }},
      {"image_size", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.image_size = parse_size(k, v);
       }},
      {"classes", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.classes = parse_size(k, v);
       }},
      {"blob_spread", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.blob_spread = parse_double(k, v);
       }},
      {"idx_images", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.idx_images = v;
       }},
      {"idx_labels", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.idx_labels = v;
       }},
      {"idx_test_images", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.idx_test_images = v;
       }},
      {"idx_test_labels", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.idx_test_labels = v;
       }},
      {"clients", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.clients = parse_size(k, v);
       }},
      {"alpha", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.alpha = parse_double(k, v);
       }},
      {"head_ownership", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.head_ownership = token(k, v, kOwnershipTokens);
       }},
      {"head_depth", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.head_depth = parse_int(k, v);
       }},
      {"head_channels", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.head_channels = parse_size(k, v);
       }},
      {"u_dim", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.u_dim = parse_size(k, v);
       }},
      {"bottleneck", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.bottleneck = token(k, v, kBottleneckTokens);
       }},
      {"k", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.k = parse_size(k, v);
       }},
      {"cr", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.cr = parse_double(k, v);
       }},
      {"mode", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.mode = token(k, v, kModeTokens);
       }},
      {"m", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.m = parse_size(k, v);
       }},
      {"basis_init", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.basis_init = token(k, v, kBasisTokens);
       }},
      {"optimizer", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.optimizer = token(k, v, kOptimizerTokens);
       }},
      {"lr", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lr = parse_double(k, v);
       }},
      {"batch", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.batch = parse_size(k, v);
       }},
      {"rounds", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.rounds = parse_size(k, v);
       }},
      {"lambda", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.lambda = parse_double(k, v);
       }},
      {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.seed = parse_u64(k, v);
       }},
      {"transport", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.transport = token(k, v, kTransportTokens);
       }},
      {"tcp_addr", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.tcp_addr = v;
       }},
      {"malicious_fraction", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.malicious_fraction = parse_double(k, v);
       }},
      {"poison_rate", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.poison_rate = parse_double(k, v);
       }},
      {"poison_target", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.poison_target = parse_int(k, v);
       }},
      {"poison_patch", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.poison_patch = parse_int(k, v);
       }},
      {"attack", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.attack = token(k, v, kAttackTokens);
       }},
      {"attack_epochs", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.attack_epochs = parse_size(k, v);
       }},
      {"attack_hidden", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.attack_hidden = parse_size(k, v);
       }},
      {"attack_victims", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.attack_victims = parse_size(k, v);
       }},
      {"attack_iterations", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.attack_iterations = parse_size(k, v);
       }},
      {"attack_lr", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.attack_lr = parse_double(k, v);
       }},
      {"out_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) {
         c.out_dir = v;
       }},
      {"dump_images", [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.dump_images = parse_bool(k, v);
       }},
  };
  return table;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.clients == 0) throw ConfigError("config: clients must be at least 1");
  if (cfg.batch == 0) throw ConfigError("config: batch must be at least 1");
  if (cfg.alpha <= 0) throw ConfigError("config: alpha must be positive");
  if (cfg.lambda < 0) throw ConfigError("config: lambda must be non-negative");
  if (cfg.lr <= 0) throw ConfigError("config: lr must be positive");
  if (cfg.head_depth < 1 || cfg.head_depth > 3)
    throw ConfigError("config: head_depth must be 1, 2, or 3");
  if (cfg.malicious_fraction < 0 || cfg.malicious_fraction > 1)
    throw ConfigError("config: malicious_fraction must lie in [0,1]");
  if (cfg.poison_rate < 0 || cfg.poison_rate > 1)
    throw ConfigError("config: poison_rate must lie in [0,1]");
  if (cfg.dataset == "blobs") {
    // Geometry is known up front, so the payload-width constraint can be
    // checked now; idx runs re-check after the files are loaded.
    to_split_spec(cfg);
  } else {
    if (cfg.idx_images.empty() || cfg.idx_labels.empty())
      throw ConfigError("config: dataset = idx requires idx_images and idx_labels");
  }
}

std::string fmt_double(double d) {
  if (d == static_cast<long long>(d) && std::abs(d) < 1e15) {
    std::ostringstream os;
    os << static_cast<long long>(d);
    return os.str();
  }
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) +
                        " is not a key = value assignment: \"" + line + "\"");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config: unknown key \"" + key + "\"");
    it->second(cfg, key, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "dataset = " << c.dataset << "\n";
  o << "samples = " << c.samples << "\n";
  o << "test_samples = " << c.test_samples << "\n";
  o << "image_size = " << c.image_size << "\n";
  o << "classes = " << c.classes << "\n";
  o << "blob_spread = " << fmt_double(c.blob_spread) << "\n";
  if (!c.idx_images.empty()) o << "idx_images = " << c.idx_images << "\n";
  if (!c.idx_labels.empty()) o << "idx_labels = " << c.idx_labels << "\n";
  if (!c.idx_test_images.empty()) o << "idx_test_images = " << c.idx_test_images << "\n";
  if (!c.idx_test_labels.empty()) o << "idx_test_labels = " << c.idx_test_labels << "\n";
  o << "clients = " << c.clients << "\n";
  o << "alpha = " << fmt_double(c.alpha) << "\n";
  o << "head_ownership = " << c.head_ownership << "\n";
  o << "head_depth = " << c.head_depth << "\n";
  o << "head_channels = " << c.head_channels << "\n";
  o << "u_dim = " << c.u_dim << "\n";
  o << "bottleneck = " << c.bottleneck << "\n";
  o << "k = " << c.k << "\n";
  o << "cr = " << fmt_double(c.cr) << "\n";
  o << "mode = " << c.mode << "\n";
  o << "m = " << c.m << "\n";
  o << "basis_init = " << c.basis_init << "\n";
  o << "optimizer = " << c.optimizer << "\n";
  o << "lr = " << fmt_double(c.lr) << "\n";
  o << "batch = " << c.batch << "\n";
  o << "rounds = " << c.rounds << "\n";
  o << "lambda = " << fmt_double(c.lambda) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "transport = " << c.transport << "\n";
  o << "tcp_addr = " << c.tcp_addr << "\n";
  o << "malicious_fraction = " << fmt_double(c.malicious_fraction) << "\n";
  o << "poison_rate = " << fmt_double(c.poison_rate) << "\n";
  o << "poison_target = " << c.poison_target << "\n";
  o << "poison_patch = " << c.poison_patch << "\n";
  o << "attack = " << c.attack << "\n";
  o << "attack_epochs = " << c.attack_epochs << "\n";
  o << "attack_hidden = " << c.attack_hidden << "\n";
  o << "attack_victims = " << c.attack_victims << "\n";
  o << "attack_iterations = " << c.attack_iterations << "\n";
  o << "attack_lr = " << fmt_double(c.attack_lr) << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  o << "dump_images = " << (c.dump_images ? "true" : "false") << "\n";
  return o.str();
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = serialize_config(cfg);
  return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

SplitSpec to_split_spec(const ExperimentConfig& cfg, std::size_t img_h, std::size_t img_w,
                        std::size_t img_c, std::size_t classes) {
  SplitSpec s;
  s.img_h = img_h;
  s.img_w = img_w;
  s.img_c = img_c;
  s.classes = classes;
  s.head_depth = cfg.head_depth;
  s.head_channels = cfg.head_channels;
  s.u_dim = cfg.u_dim;
  if (cfg.bottleneck == "raw") s.bottleneck = BottleneckKind::Raw;
  else if (cfg.bottleneck == "projection") s.bottleneck = BottleneckKind::Projection;
  else s.bottleneck = BottleneckKind::Learned1x1;
  s.k = cfg.k;
  s.cr = cfg.cr;
  s.liftback = cfg.mode == "learned" ? LiftbackMode::Learned : LiftbackMode::Fixed;
  s.m = cfg.m;
  s.basis_init = cfg.basis_init == "uniform01" ? BasisInit::Uniform01 : BasisInit::Gaussian;
  try {
    s.finalize();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return s;
}

SplitSpec to_split_spec(const ExperimentConfig& cfg) {
  return to_split_spec(cfg, cfg.image_size, cfg.image_size, 1, cfg.classes);
}

SessionConfig to_session_config(const ExperimentConfig& cfg) {
  SessionConfig sc;
  sc.spec = to_split_spec(cfg);
  sc.n_clients = cfg.clients;
  sc.lambda = cfg.lambda;
  sc.ownership = cfg.head_ownership == "per-client" ? HeadOwnership::PerClient
                                                    : HeadOwnership::Shared;
  sc.opt_kind = cfg.optimizer == "sgd" ? OptKind::Sgd : OptKind::Adam;
  sc.lr = cfg.lr;
  sc.batch = cfg.batch;
  sc.epochs = cfg.rounds;
  sc.seed = cfg.seed;
  return sc;
}

}  // namespace osplit
