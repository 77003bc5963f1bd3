#include <doctest.h>
#include <stdexcept>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "osplit/errors.hpp"
#include "osplit/rng.hpp"
#include "osplit/wire.hpp"

using namespace osplit;

namespace {

// Test-local little-endian writer, independent of the library's byte helpers.
struct ByteSink {
  std::vector<std::uint8_t> bytes;
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void header(std::uint8_t type, std::uint32_t client, std::uint64_t step,
              std::uint32_t batch, std::uint32_t dim) {
    u8('S');
    u8('P');
    u8('L');
    u8('1');
    u8(type);
    u32(client);
    u64(step);
    u32(batch);
    u32(dim);
  }
};

}  // namespace

TEST_CASE("frozen byte fixture decodes and re-encodes identically") {
  // Hand-assembled frame: forward activations, client 0x01020304,
  // step 0x1122334455667788, batch 2, dim 3.
  const std::uint8_t fixture[] = {
      0x53, 0x50, 0x4C, 0x31,                          // "SPL1"
      0x02,                                            // forward-activation type
      0x04, 0x03, 0x02, 0x01,                          // client id
      0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11,  // step
      0x02, 0x00, 0x00, 0x00,                          // batch
      0x03, 0x00, 0x00, 0x00,                          // dim
      0x00, 0x00, 0x80, 0x3F,                          // 1.0f
      0x00, 0x00, 0x00, 0xC0,                          // -2.0f
      0x00, 0x00, 0x00, 0x3F,                          // 0.5f
      0x00, 0x00, 0x50, 0x40,                          // 3.25f
      0x00, 0x00, 0x00, 0x00,                          // 0.0f
      0x00, 0x00, 0x00, 0x80,                          // -0.0f
  };
  WireMessage m = decode(fixture, sizeof fixture);
  CHECK(m.type == MsgType::ZFwd);
  CHECK(m.client_id == 0x01020304u);
  CHECK(m.step == 0x1122334455667788ull);
  CHECK(m.batch == 2);
  CHECK(m.dim == 3);
  REQUIRE(m.payload.size() == 6);
  CHECK(m.payload[0] == 1.0f);
  CHECK(m.payload[1] == -2.0f);
  CHECK(m.payload[2] == 0.5f);
  CHECK(m.payload[3] == 3.25f);
  CHECK(m.payload[4] == 0.0f);
  CHECK(std::signbit(m.payload[5]));

  std::vector<std::uint8_t> re = encode(m);
  REQUIRE(re.size() == sizeof fixture);
  CHECK(std::memcmp(re.data(), fixture, sizeof fixture) == 0);
}

TEST_CASE("every message type encodes exactly per the layout") {
  for (std::uint8_t type : {0x02, 0x03, 0x04, 0x05}) {
    WireMessage m;
    m.type = static_cast<MsgType>(type);
    m.client_id = 7;
    m.step = 42;
    m.batch = 1;
    m.dim = 2;
    m.payload = {1.5f, -8.0f};
    ByteSink want;
    want.header(type, 7, 42, 1, 2);
    want.f32(1.5f);
    want.f32(-8.0f);
    CHECK(encode(m) == want.bytes);

    WireMessage back = decode(want.bytes);
    CHECK(back.type == m.type);
    CHECK(back.payload == m.payload);
  }
}

TEST_CASE("setup frames carry the basis extent extension") {
  Tensor r({3, 2});
  r.data = {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f};
  WireMessage m = make_setup(9, 3, 2, 0xFEEDFACEull, r);
  std::vector<std::uint8_t> got = encode(m);

  ByteSink want;
  want.header(0x01, 9, 0, 1, 6);  // batch 1, dim = d*k
  want.u32(3);                    // d
  want.u32(2);                    // k
  want.u64(0xFEEDFACEull);        // basis seed
  for (float f : r.data) want.f32(f);
  CHECK(got == want.bytes);
  CHECK(got.size() == 25 + 16 + 24);

  WireMessage back = decode(got);
  CHECK(back.type == MsgType::SetupR);
  CHECK(back.d == 3);
  CHECK(back.k == 2);
  CHECK(back.basis_seed == 0xFEEDFACEull);
  CHECK(back.payload == r.data);
  CHECK(encode(back) == got);

  // Extent cross-check: d*k must equal batch*dim.
  std::vector<std::uint8_t> bad = got;
  bad[25] = 99;  // d := 99
  CHECK_THROWS_AS((void)decode(bad), CorruptFrame);
}

TEST_CASE("frame size accounts for header, extension and payload") {
  WireMessage m;
  m.type = MsgType::GradZ;
  m.batch = 4;
  m.dim = 8;
  m.payload.assign(32, 0.0f);
  std::vector<std::uint8_t> frame = encode(m);
  CHECK(frame.size() == 25 + 4 * 32);
  CHECK(frame_size(frame.data()) == frame.size());

  Tensor r({4, 4});
  std::vector<std::uint8_t> setup = encode(make_setup(0, 4, 4, 1, r));
  CHECK(frame_size(setup.data()) == 25 + 16 + 4 * 16);
}

TEST_CASE("error taxonomy distinguishes corrupt, truncated and wrong-version frames") {
  WireMessage m;
  m.type = MsgType::UFwd;
  m.client_id = 1;
  m.step = 2;
  m.batch = 2;
  m.dim = 2;
  m.payload = {1, 2, 3, 4};
  std::vector<std::uint8_t> good = encode(m);

  SUBCASE("bad magic") {
    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS((void)decode(bad), CorruptFrame);
  }
  SUBCASE("unknown type") {
    for (std::uint8_t t : {0x00, 0x06, 0xFF}) {
      auto bad = good;
      bad[4] = t;
      CHECK_THROWS_AS((void)decode(bad), CorruptFrame);
    }
  }
  SUBCASE("future version") {
    auto bad = good;
    bad[3] = '2';
    CHECK_THROWS_AS((void)decode(bad), UnsupportedVersion);
  }
  SUBCASE("short buffer") {
    CHECK_THROWS_AS((void)decode(good.data(), 10), IncompleteFrame);
    CHECK_THROWS_AS((void)decode(good.data(), good.size() - 1), IncompleteFrame);
  }
  SUBCASE("trailing garbage") {
    auto bad = good;
    bad.push_back(0);
    CHECK_THROWS_AS((void)decode(bad), CorruptFrame);
  }
  SUBCASE("hostile length field") {
    auto bad = good;
    // batch := 0xFFFFFFFF so batch*dim*4 explodes past any sane allocation.
    bad[17] = bad[18] = bad[19] = bad[20] = 0xFF;
    CHECK_THROWS_AS((void)decode(bad), CorruptFrame);
  }
  SUBCASE("length field engineered to wrap the byte count") {
    auto bad = good;
    // batch = dim = 2^31 makes batch*dim*4 equal 2^66, which is 0 modulo
    // 2^64; the guard must reject on the element count, not the wrapped
    // byte total, or decode would attempt a 2^62-element allocation.
    bad[17] = bad[18] = bad[19] = 0x00;
    bad[20] = 0x80;
    bad[21] = bad[22] = bad[23] = 0x00;
    bad[24] = 0x80;
    CHECK_THROWS_AS((void)decode(bad.data(), 25), CorruptFrame);
  }
  SUBCASE("empty buffer") {
    std::uint8_t none[1] = {0};
    CHECK_THROWS_AS((void)decode(none, 0), IncompleteFrame);
  }
}

TEST_CASE("tensor payload helpers round trip") {
  RngStream rng(800);
  Tensor t = Tensor::randn({3, 5}, rng);
  WireMessage m = make_tensor_msg(MsgType::GradU, 2, 17, t);
  Tensor back = payload_tensor(decode(encode(m)));
  CHECK(back.shape == t.shape);
  CHECK(back.data == t.data);

  Tensor bad({2, 2, 2});
  CHECK_THROWS_AS((void)make_tensor_msg(MsgType::ZFwd, 0, 0, bad), std::invalid_argument);

  WireMessage broken = m;
  broken.payload.pop_back();
  CHECK_THROWS_AS((void)encode(broken), std::invalid_argument);
}

TEST_CASE("type names") {
  CHECK(std::string(msg_type_name(MsgType::SetupR)) == "SETUP_R");
  CHECK(std::string(msg_type_name(MsgType::ZFwd)) == "Z_FWD");
  CHECK(std::string(msg_type_name(MsgType::UFwd)) == "U_FWD");
  CHECK(std::string(msg_type_name(MsgType::GradU)) == "GRAD_U");
  CHECK(std::string(msg_type_name(MsgType::GradZ)) == "GRAD_Z");
}

TEST_CASE("frame info hashes the full frame") {
  WireMessage m;
  m.type = MsgType::ZFwd;
  m.batch = 1;
  m.dim = 1;
  m.payload = {2.0f};
  std::vector<std::uint8_t> f = encode(m);
  FrameInfo info = frame_info(f);
  CHECK(info.bytes == f.size());
  CHECK(info.checksum == fnv1a64(f.data(), f.size()));
  m.payload = {3.0f};
  CHECK(frame_info(encode(m)).checksum != info.checksum);
}

TEST_CASE("random buffers never crash the decoder") {
  RngStream rng(801);
  int decoded = 0, rejected = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::size_t len = rng.below(120);
    std::vector<std::uint8_t> buf(len);
    for (auto& b : buf) b = static_cast<std::uint8_t>(rng.below(256));
    // Half the trials keep a plausible prefix so deeper paths get exercised.
    if (trial % 2 == 0 && len >= 5) {
      buf[0] = 'S';
      buf[1] = 'P';
      buf[2] = 'L';
      buf[3] = '1';
      buf[4] = static_cast<std::uint8_t>(1 + rng.below(5));
    }
    try {
      (void)decode(buf.data(), buf.size());
      ++decoded;
    } catch (const WireError&) {
      ++rejected;
    }
  }
  CHECK(decoded + rejected == 2000);
  CHECK(rejected > 0);
}
