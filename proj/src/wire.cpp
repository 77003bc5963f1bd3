#include "osplit/wire.hpp"

#include <cstring>
#include <stdexcept>

#include "osplit/bytes.hpp"
#include "osplit/errors.hpp"

namespace osplit {

namespace {
constexpr std::size_t kHeader = 25;
constexpr std::size_t kSetupExt = 16;
// Allocation guard for hostile length fields (far beyond desk scale).
constexpr std::uint64_t kMaxPayloadBytes = 1ull << 28;

bool valid_type(std::uint8_t t) { return t >= 0x01 && t <= 0x05; }
}  // namespace

std::vector<std::uint8_t> encode(const WireMessage& m) {
  if (static_cast<std::uint64_t>(m.batch) * m.dim != m.payload.size())
    throw std::invalid_argument("wire encode: payload size != batch * dim");
  std::vector<std::uint8_t> out;
  out.reserve(kHeader + (m.type == MsgType::SetupR ? kSetupExt : 0) + m.payload.size() * 4);
  out.push_back('S');
  out.push_back('P');
  out.push_back('L');
  out.push_back('1');
  out.push_back(static_cast<std::uint8_t>(m.type));
  put_u32(out, m.client_id);
  put_u64(out, m.step);
  put_u32(out, m.batch);
  put_u32(out, m.dim);
  if (m.type == MsgType::SetupR) {
    put_u32(out, m.d);
    put_u32(out, m.k);
    put_u64(out, m.basis_seed);
  }
  for (float f : m.payload) put_f32(out, f);
  return out;
}

std::size_t frame_size(const std::uint8_t* h) {
  if (std::memcmp(h, "SPL", 3) != 0) throw CorruptFrame("wire: bad magic");
  if (h[3] != '1') throw UnsupportedVersion("wire: unsupported protocol version");
  if (!valid_type(h[4])) throw CorruptFrame("wire: unknown message type");
  std::uint64_t batch = get_u32(h + 17);
  std::uint64_t dim = get_u32(h + 21);
  // batch * dim fits in 64 bits for any pair of u32 extents; check the count
  // before scaling to bytes so the multiply by 4 cannot wrap past the guard.
  std::uint64_t count = batch * dim;
  if (count > kMaxPayloadBytes / 4) throw CorruptFrame("wire: implausible payload length");
  std::uint64_t payload = count * 4;
  std::uint64_t ext = (h[4] == static_cast<std::uint8_t>(MsgType::SetupR)) ? kSetupExt : 0;
  return static_cast<std::size_t>(kHeader + ext + payload);
}

WireMessage decode(const std::uint8_t* bytes, std::size_t len) {
  if (len < kHeader) throw IncompleteFrame("wire: buffer shorter than header");
  std::size_t total = frame_size(bytes);
  if (len < total) throw IncompleteFrame("wire: buffer shorter than declared frame");
  if (len > total) throw CorruptFrame("wire: trailing bytes after frame");

  WireMessage m;
  m.type = static_cast<MsgType>(bytes[4]);
  m.client_id = get_u32(bytes + 5);
  m.step = get_u64(bytes + 9);
  m.batch = get_u32(bytes + 17);
  m.dim = get_u32(bytes + 21);
  std::size_t pos = kHeader;
  if (m.type == MsgType::SetupR) {
    m.d = get_u32(bytes + pos);
    m.k = get_u32(bytes + pos + 4);
    m.basis_seed = get_u64(bytes + pos + 8);
    pos += kSetupExt;
    if (static_cast<std::uint64_t>(m.d) * m.k != static_cast<std::uint64_t>(m.batch) * m.dim)
      throw CorruptFrame("wire: setup extent mismatch");
  }
  std::size_t count = static_cast<std::size_t>(m.batch) * m.dim;
  m.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) m.payload[i] = get_f32(bytes + pos + 4 * i);
  return m;
}

WireMessage decode(const std::vector<std::uint8_t>& bytes) {
  return decode(bytes.data(), bytes.size());
}

WireMessage make_tensor_msg(MsgType type, std::uint32_t client_id, std::uint64_t step,
                            const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("wire: tensor payloads are rank 2");
  WireMessage m;
  m.type = type;
  m.client_id = client_id;
  m.step = step;
  m.batch = static_cast<std::uint32_t>(t.shape[0]);
  m.dim = static_cast<std::uint32_t>(t.shape[1]);
  m.payload = t.data;
  return m;
}

Tensor payload_tensor(const WireMessage& m) {
  Tensor t({m.batch, m.dim});
  t.data = m.payload;
  return t;
}

WireMessage make_setup(std::uint32_t client_id, std::uint32_t d, std::uint32_t k,
                       std::uint64_t seed, const Tensor& r) {
  if (r.rank() != 2 || r.shape[0] != d || r.shape[1] != k)
    throw std::invalid_argument("wire: basis shape mismatch");
  WireMessage m;
  m.type = MsgType::SetupR;
  m.client_id = client_id;
  m.step = 0;
  m.batch = 1;
  m.dim = d * k;
  m.d = d;
  m.k = k;
  m.basis_seed = seed;
  m.payload = r.data;
  return m;
}

FrameInfo frame_info(const std::vector<std::uint8_t>& frame) {
  return {frame.size(), fnv1a64(frame.data(), frame.size())};
}

const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::SetupR: return "SETUP_R";
    case MsgType::ZFwd: return "Z_FWD";
    case MsgType::UFwd: return "U_FWD";
    case MsgType::GradU: return "GRAD_U";
    case MsgType::GradZ: return "GRAD_Z";
  }
  return "UNKNOWN";
}

}  // namespace osplit
