#pragma once

#include <cstdint>
#include <string>

#include "osplit/protocol.hpp"

namespace osplit {

// Declarative experiment description parsed from a flat key = value file
// (see docs/config-format.md).  Token-valued fields are stored canonically;
// parse() maps the accepted aliases onto these canonical spellings, so
// serialize -> parse round-trips to an equal config.
struct ExperimentConfig {
  // dataset
  std::string dataset = "blobs";  // blobs | idx
  std::size_t samples = 512;      // blobs: training samples
  std::size_t test_samples = 128; // blobs: held-out eval samples
  std::size_t image_size = 16;    // blobs: square image side
  std::size_t classes = 4;        // blobs: class count
  double blob_spread = 0.15;      // blobs: pixel noise scale
  std::string idx_images, idx_labels;            // idx: training pair
  std::string idx_test_images, idx_test_labels;  // idx: eval pair

  // cohort
  std::size_t clients = 10;
  double alpha = 1e7;                     // shard-balance concentration
  std::string head_ownership = "shared";  // shared | per-client

  // model
  int head_depth = 2;
  std::size_t head_channels = 4;
  std::size_t u_dim = 64;
  std::string bottleneck = "projection";  // raw | projection | codec
  std::size_t k = 32;                     // projection payload width
  double cr = 8.0;                        // codec compression ratio
  std::string mode = "fixed";             // fixed | learned lift-back
  std::size_t m = 64;                     // learned lift-back hidden width
  std::string basis_init = "gaussian";    // gaussian | uniform01

  // optimization
  std::string optimizer = "adam";  // adam | sgd
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t rounds = 2;  // passes over every client's shard
  double lambda = 0.0;     // compactness weight at the cut
  std::uint64_t seed = 1;

  // transport
  std::string transport = "inproc";  // inproc | tcp
  std::string tcp_addr = "127.0.0.1:7700";

  // backdoor scenario (off while malicious_fraction == 0)
  double malicious_fraction = 0.0;
  double poison_rate = 0.3;
  int poison_target = 0;
  int poison_patch = 3;

  // attack evaluation (off while attack == "none")
  std::string attack = "none";  // none | decoder | gradmatch | both
  std::size_t attack_epochs = 30;
  std::size_t attack_hidden = 128;
  std::size_t attack_victims = 32;
  std::size_t attack_iterations = 400;
  double attack_lr = 0.1;

  // output
  std::string out_dir = "out";
  bool dump_images = false;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Parses the flat key = value grammar: one assignment per line, `#` starts a
// comment, blank lines ignored.  Every key is validated; unknown keys and
// malformed values throw ConfigError naming the offender.  An empty document
// yields the defaults above.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical rendering: every key, fixed order, canonical tokens.
std::string serialize_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical rendering; binds reports to their inputs.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Model geometry implied by the config (finalized).  For idx datasets pass
// the loaded geometry; for blobs the config's own numbers are used.  A
// payload width larger than the cut width surfaces here as ConfigError.
SplitSpec to_split_spec(const ExperimentConfig& cfg);
SplitSpec to_split_spec(const ExperimentConfig& cfg, std::size_t img_h, std::size_t img_w,
                        std::size_t img_c, std::size_t classes);

// Protocol-session view of the same config (spec finalized).
SessionConfig to_session_config(const ExperimentConfig& cfg);

}  // namespace osplit
