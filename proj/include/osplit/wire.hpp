#pragma once

#include <cstdint>
#include <vector>

#include "osplit/tensor.hpp"

namespace osplit {

// Cut-layer wire protocol.  Every frame is:
//
//   offset 0   magic "SPL1" (the trailing byte is the protocol version)
//          4   msg_type (u8)
//          5   client_id (u32 LE)
//          9   step (u64 LE)
//         17   batch (u32 LE)
//         21   dim (u32 LE)
//         25   payload: batch*dim binary32 LE values
//
// giving 25 + 4*batch*dim bytes.  SETUP_R carries the basis matrix: batch=1,
// dim = d*k, and a 16-byte extension header (d u32, k u32, seed u64, all LE)
// sits between the fixed header and the payload.

enum class MsgType : std::uint8_t {
  SetupR = 0x01,
  ZFwd = 0x02,   // client -> server, transmitted representation
  UFwd = 0x03,   // server -> client, backbone output
  GradU = 0x04,  // client -> server, loss gradient at the backbone output
  GradZ = 0x05,  // server -> client, loss gradient at the cut
};

struct WireMessage {
  MsgType type = MsgType::ZFwd;
  std::uint32_t client_id = 0;
  std::uint64_t step = 0;
  std::uint32_t batch = 0;
  std::uint32_t dim = 0;
  // SETUP_R extension fields.
  std::uint32_t d = 0, k = 0;
  std::uint64_t basis_seed = 0;
  std::vector<float> payload;  // batch * dim values, row-major

  std::size_t payload_bytes() const { return payload.size() * 4; }
};

std::vector<std::uint8_t> encode(const WireMessage& m);

// Decodes one complete frame.  Throws IncompleteFrame when the buffer is
// shorter than the declared frame, CorruptFrame on bad magic/type/length,
// UnsupportedVersion when the version byte is not '1'.
WireMessage decode(const std::uint8_t* bytes, std::size_t len);
WireMessage decode(const std::vector<std::uint8_t>& bytes);

// Total frame size implied by a fixed 25-byte header (for stream framing).
std::size_t frame_size(const std::uint8_t* header25);

// [batch, dim] tensor <-> payload.
WireMessage make_tensor_msg(MsgType type, std::uint32_t client_id, std::uint64_t step,
                            const Tensor& t);
Tensor payload_tensor(const WireMessage& m);

WireMessage make_setup(std::uint32_t client_id, std::uint32_t d, std::uint32_t k,
                       std::uint64_t seed, const Tensor& r);

const char* msg_type_name(MsgType t);

// Size and content hash of one encoded frame, as recorded in step traces.
struct FrameInfo {
  std::uint64_t bytes = 0;
  std::uint64_t checksum = 0;  // fnv1a64 over the full frame
};
FrameInfo frame_info(const std::vector<std::uint8_t>& frame);

}  // namespace osplit
