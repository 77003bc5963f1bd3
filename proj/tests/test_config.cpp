#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "osplit/config.hpp"
#include "osplit/errors.hpp"

using namespace osplit;
namespace fs = std::filesystem;

TEST_CASE("an empty document yields the documented defaults") {
  ExperimentConfig cfg = parse_config("");
  CHECK(cfg.dataset == "blobs");
  CHECK(cfg.clients == 10);
  CHECK(cfg.alpha == 1e7);
  CHECK(cfg.head_ownership == "shared");
  CHECK(cfg.bottleneck == "projection");
  CHECK(cfg.k == 32);
  CHECK(cfg.cr == 8.0);
  CHECK(cfg.mode == "fixed");
  CHECK(cfg.optimizer == "adam");
  CHECK(cfg.lr == 1e-3);
  CHECK(cfg.batch == 32);
  CHECK(cfg.rounds == 2);
  CHECK(cfg.lambda == 0.0);
  CHECK(cfg.seed == 1);
  CHECK(cfg.transport == "inproc");
  CHECK(cfg.malicious_fraction == 0.0);
  CHECK(cfg.attack == "none");
  CHECK_FALSE(cfg.dump_images);
}

TEST_CASE("comments, blank lines and whitespace are tolerated") {
  ExperimentConfig cfg = parse_config(
      "# experiment file\n"
      "\n"
      "  clients = 4   # trailing comment\n"
      "\tlambda=0.25\n"
      "SEED = 99\n"  // keys are case-insensitive
      "\n");
  CHECK(cfg.clients == 4);
  CHECK(cfg.lambda == 0.25);
  CHECK(cfg.seed == 99);
}

TEST_CASE("token aliases map onto canonical spellings") {
  ExperimentConfig a = parse_config("mode = lsf\n");
  CHECK(a.mode == "fixed");
  ExperimentConfig b = parse_config("mode = lsl\n");
  CHECK(b.mode == "learned");
  ExperimentConfig c = parse_config("head_ownership = sch\n");
  CHECK(c.head_ownership == "shared");
  ExperimentConfig d = parse_config("head_ownership = pch\n");
  CHECK(d.head_ownership == "per-client");
  ExperimentConfig e = parse_config("head_ownership = PER-CLIENT\n");
  CHECK(e.head_ownership == "per-client");
}

TEST_CASE("serialization round-trips to an equal config") {
  ExperimentConfig cfg = parse_config(
      "dataset = blobs\n"
      "clients = 7\n"
      "alpha = 0.5\n"
      "bottleneck = codec\n"
      "cr = 4\n"
      "lambda = 0.1\n"
      "mode = lsl\n"
      "transport = tcp\n"
      "dump_images = true\n"
      "lr = 0.0005\n");
  std::string text = serialize_config(cfg);
  ExperimentConfig back = parse_config(text);
  CHECK(back == cfg);
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(serialize_config(back) == text);

  // The canonical text uses canonical tokens, not the aliases.
  CHECK(text.find("learned") != std::string::npos);
  CHECK(text.find("lsl") == std::string::npos);

  ExperimentConfig other = cfg;
  other.seed = 2;
  CHECK(config_hash(other) != config_hash(cfg));
  CHECK_FALSE(other == cfg);
}

TEST_CASE("unknown keys and malformed values name the offender") {
  try {
    (void)parse_config("cleints = 4\n");
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cleints") != std::string::npos);
  }
  try {
    (void)parse_config("clients = four\n");
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("clients") != std::string::npos);
    CHECK(msg.find("four") != std::string::npos);
  }
  try {
    (void)parse_config("clients 4\n");  // missing separator
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);  // line number
  }
  CHECK_THROWS_AS((void)parse_config("bottleneck = fourier\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("lambda = 0.1x\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("clients = -3\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("dump_images = maybe\n"), ConfigError);
}

TEST_CASE("a rejected token error lists the accepted options") {
  try {
    (void)parse_config("optimizer = rmsprop\n");
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("adam") != std::string::npos);
    CHECK(msg.find("sgd") != std::string::npos);
  }
}

TEST_CASE("cross-field validation catches impossible geometry") {
  try {
    (void)parse_config("k = 99999\n");
    FAIL("expected rejection");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("99999") != std::string::npos);
    CHECK(msg.find("256") != std::string::npos);  // the competing cut width
  }
  CHECK_THROWS_AS((void)parse_config("clients = 0\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("malicious_fraction = 1.5\n"), ConfigError);
  CHECK_THROWS_AS((void)parse_config("dataset = idx\n"), ConfigError);  // missing paths
}

TEST_CASE("the derived model geometry follows the config") {
  ExperimentConfig cfg = parse_config("k = 16\nimage_size = 16\nhead_depth = 2\n");
  SplitSpec spec = to_split_spec(cfg);
  CHECK(spec.d == 256);
  CHECK(spec.wire_dim == 16);
  CHECK(spec.classes == 4);

  ExperimentConfig raw = parse_config("bottleneck = raw\n");
  CHECK(to_split_spec(raw).wire_dim == 256);

  // The geometry overload serves loaded datasets.
  SplitSpec loaded = to_split_spec(cfg, 8, 8, 1, 3);
  CHECK(loaded.img_h == 8);
  CHECK(loaded.classes == 3);
  CHECK(loaded.d == 4 * 4 * 4);

  SessionConfig sess = to_session_config(cfg);
  CHECK(sess.n_clients == 10);
  CHECK(sess.batch == 32);
  CHECK(sess.epochs == 2);
  CHECK(sess.spec.wire_dim == 16);
}

TEST_CASE("config files load from disk and missing files are reported") {
  fs::path p = fs::temp_directory_path() /
               ("osplit_cfg_" + std::to_string(::getpid()) + ".conf");
  {
    std::ofstream f(p);
    f << "clients = 3\nrounds = 1\n";
  }
  ExperimentConfig cfg = load_config(p.string());
  CHECK(cfg.clients == 3);
  CHECK(cfg.rounds == 1);
  fs::remove(p);
  CHECK_THROWS_AS((void)load_config(p.string()), ConfigError);
}

TEST_CASE("numbers serialize precisely enough to round-trip") {
  ExperimentConfig cfg;
  cfg.lr = 0.1 + 0.2;  // 0.30000000000000004
  cfg.alpha = 1e-17;
  ExperimentConfig back = parse_config(serialize_config(cfg));
  CHECK(back.lr == cfg.lr);
  CHECK(back.alpha == cfg.alpha);
}
