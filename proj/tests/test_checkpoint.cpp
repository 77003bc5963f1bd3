#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "osplit/checkpoint.hpp"
#include "osplit/errors.hpp"
#include "osplit/rng.hpp"

using namespace osplit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("osplit_ckpt_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const char* name) const { return (path / name).string(); }
};

Network sample_net(std::uint64_t seed) {
  RngStream rng(seed);
  Network net;
  net.layers.push_back(conv2d(1, 3, 3, 1, 1, rng));
  net.layers.push_back(batchnorm(3));
  net.layers.push_back(relu());
  net.layers.push_back(flatten());
  net.layers.push_back(dense(3 * 4 * 4, 2, rng));
  // Give the running stats non-default values so restores are observable.
  net.layers[1].run_mean.fill(0.25f);
  net.layers[1].run_var.fill(2.0f);
  return net;
}

}  // namespace

TEST_CASE("tensor round trip is bitwise") {
  TempDir tmp;
  RngStream rng(500);
  Tensor a = Tensor::randn({3, 4}, rng);
  Tensor b = Tensor::randn({2, 2, 2}, rng);
  b.data[0] = -0.0f;  // sign of zero must survive
  save_checkpoint(tmp.file("t.bin"), {{"alpha", &a}, {"beta", &b}});
  auto loaded = load_checkpoint(tmp.file("t.bin"));
  REQUIRE(loaded.size() == 2);
  CHECK(loaded.at("alpha").shape == a.shape);
  CHECK(loaded.at("alpha").data == a.data);
  CHECK(loaded.at("beta").shape == b.shape);
  CHECK(loaded.at("beta").data == b.data);
  CHECK(std::signbit(loaded.at("beta").data[0]));
}

TEST_CASE("network round trip restores parameters and running stats") {
  TempDir tmp;
  Network src = sample_net(501);
  save_network(tmp.file("net.bin"), src, "m");
  Network dst = sample_net(502);  // same architecture, different values
  load_network(tmp.file("net.bin"), dst, "m");
  for (std::size_t li = 0; li < src.layers.size(); ++li) {
    CHECK(dst.layers[li].w.data == src.layers[li].w.data);
    CHECK(dst.layers[li].b.data == src.layers[li].b.data);
    CHECK(dst.layers[li].gamma.data == src.layers[li].gamma.data);
    CHECK(dst.layers[li].beta.data == src.layers[li].beta.data);
    CHECK(dst.layers[li].run_mean.data == src.layers[li].run_mean.data);
    CHECK(dst.layers[li].run_var.data == src.layers[li].run_var.data);
  }
}

TEST_CASE("named tensors carry the prefix and cover every parameter") {
  Network net = sample_net(503);
  auto names = named_tensors(net, "side");
  CHECK(!names.empty());
  std::size_t counted = 0;
  for (auto& [name, t] : names) {
    CHECK(name.rfind("side.", 0) == 0);
    counted += t->numel();
  }
  // Parameters plus the two running-stat tensors of the batch-norm layer.
  CHECK(counted == net.param_count() + 2 * 3);
}

TEST_CASE("bad files are rejected with format errors") {
  TempDir tmp;
  CHECK_THROWS_AS((void)load_checkpoint(tmp.file("missing.bin")), FormatError);

  {
    std::ofstream f(tmp.file("badmagic.bin"), std::ios::binary);
    f << "NOTACKPT-----";
  }
  CHECK_THROWS_AS((void)load_checkpoint(tmp.file("badmagic.bin")), FormatError);

  // Truncate a valid file mid-payload.
  RngStream rng(504);
  Tensor a = Tensor::randn({8, 8}, rng);
  save_checkpoint(tmp.file("full.bin"), {{"a", &a}});
  std::ifstream in(tmp.file("full.bin"), std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  {
    std::ofstream f(tmp.file("trunc.bin"), std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 17));
  }
  CHECK_THROWS_AS((void)load_checkpoint(tmp.file("trunc.bin")), FormatError);
}

TEST_CASE("loading into a mismatched architecture fails") {
  TempDir tmp;
  Network src = sample_net(505);
  save_network(tmp.file("net.bin"), src, "m");

  RngStream rng(506);
  Network other;
  other.layers.push_back(dense(4, 4, rng));
  CHECK_THROWS_AS(load_network(tmp.file("net.bin"), other, "m"), FormatError);

  // Right layer shapes, wrong prefix: every name is missing.
  Network dst = sample_net(507);
  CHECK_THROWS_AS(load_network(tmp.file("net.bin"), dst, "other"), FormatError);
}

TEST_CASE("shape mismatch under a matching name fails") {
  TempDir tmp;
  RngStream rng(508);
  Tensor small = Tensor::randn({2, 2}, rng);
  save_checkpoint(tmp.file("one.bin"), {{"m.0.w", &small}});
  Network dst;
  dst.layers.push_back(dense(3, 3, rng));
  CHECK_THROWS_AS(load_network(tmp.file("one.bin"), dst, "m"), FormatError);
}
