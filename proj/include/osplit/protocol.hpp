#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "osplit/bottleneck.hpp"
#include "osplit/channel.hpp"
#include "osplit/nn.hpp"
#include "osplit/optimizer.hpp"
#include "osplit/wire.hpp"

namespace osplit {

// Split model layout.  The client owns the head f and the tail h (labels and
// raw inputs never leave it); the server owns the backbone g plus whatever
// reconstruction stage the bottleneck needs.  All cut tensors travel flat as
// [batch, wire_dim].

enum class BottleneckKind { Raw, Projection, Learned1x1 };
enum class LiftbackMode { Fixed, Learned };
enum class HeadOwnership { Shared, PerClient };

struct SplitSpec {
  std::size_t img_h = 16, img_w = 16, img_c = 1;
  std::size_t classes = 4;
  int head_depth = 2;            // 1..3 conv blocks before the cut
  std::size_t head_channels = 4;
  std::size_t u_dim = 64;        // backbone output width
  BottleneckKind bottleneck = BottleneckKind::Projection;
  std::size_t k = 32;            // projection width
  LiftbackMode liftback = LiftbackMode::Fixed;
  std::size_t m = 64;            // learned lift-back hidden width
  double cr = 8.0;               // channel-codec compression ratio
  BasisInit basis_init = BasisInit::Gaussian;

  // Derived by finalize().
  std::size_t cut_c = 0, cut_h = 0, cut_w = 0;  // activation map at the cut
  std::size_t d = 0;                            // flattened cut width
  std::size_t wire_dim = 0;                     // floats per sample on the wire

  void finalize();  // throws std::invalid_argument on impossible combinations
};

std::uint64_t sub_seed(std::uint64_t master, std::string_view tag);

Network make_head(const SplitSpec& s, RngStream& rng);
Network make_backbone(const SplitSpec& s, RngStream& rng);
Network make_tail(const SplitSpec& s, RngStream& rng);

// ------------------------------------------------------------------ client ---

// Parameters a client trains: head, tail, and (codec mode) the encoder.
// Shared-head sessions alias one instance across all clients; per-client
// sessions give each client its own copy.
struct ClientParams {
  Network f, h, encoder;
  Gradients gf, gh, genc;
  Optimizer opt;
};
std::shared_ptr<ClientParams> make_client_params(const SplitSpec& s, std::uint64_t seed,
                                                 const Optimizer& opt,
                                                 const std::string& tag);

enum class ClientPhase { Idle, SentForward, AwaitCutGrad };

class SplitClient {
 public:
  SplitClient(std::uint32_t id, const SplitSpec& spec, std::shared_ptr<ClientParams> params,
              double lambda);

  void install_basis(const WireMessage& setup);

  // Phase machine: Idle -> SentForward -> AwaitCutGrad -> Idle.  Calls out of
  // order throw ProtocolOrderError.
  WireMessage start_step(const Tensor& x, const std::vector<int>& y, std::uint64_t step);
  WireMessage handle_u(const WireMessage& u_msg);
  void handle_grad_z(const WireMessage& gz_msg);

  // Loss values of the step in flight / just finished.
  double last_ce() const { return last_ce_; }
  double last_wcc() const { return last_wcc_; }
  double last_total() const { return last_total_; }

  std::uint32_t id() const { return id_; }
  ClientPhase phase() const { return phase_; }
  double lambda() const { return lambda_; }
  ClientParams& params() { return *params_; }
  const std::optional<ProjectionBasis>& basis() const { return basis_; }

  // Eval-mode passes for accuracy evaluation and attacks.
  Tensor encode_eval(const Tensor& x);
  Tensor tail_eval(const Tensor& u);

  void set_basis(const ProjectionBasis& b) { basis_ = b; }

 private:
  Tensor encode_forward(const Tensor& a);  // train-mode bottleneck encode

  std::uint32_t id_;
  SplitSpec spec_;
  std::shared_ptr<ClientParams> params_;
  double lambda_;
  std::optional<ProjectionBasis> basis_;

  ClientPhase phase_ = ClientPhase::Idle;
  std::uint64_t step_ = 0;
  Tape tape_f_, tape_h_, tape_enc_;
  Tensor zt_;                // transmitted representation of the step in flight
  std::vector<int> labels_;  // stays on the client
  double last_ce_ = 0, last_wcc_ = 0, last_total_ = 0;
};

// ------------------------------------------------------------------ server ---

enum class ServerPhase { Idle, SentU };

// Per-client running mean of a vector signal (backbone outputs and server
// inputs), the detector's raw material.
struct RunningMean {
  std::vector<double> sum;
  std::uint64_t count = 0;
  std::vector<double> mean() const;
  void add_rows(const Tensor& rows);
};

class SplitServer {
 public:
  SplitServer(const SplitSpec& spec, std::uint64_t seed, const Optimizer& opt);

  // Basis broadcast frame for one client (projection mode only).
  WireMessage make_setup(std::uint32_t client_id) const;

  WireMessage handle_z(const WireMessage& z_msg);
  WireMessage handle_grad_u(const WireMessage& gu_msg);

  ServerPhase phase() const { return phase_; }
  const SplitSpec& spec() const { return spec_; }
  Network& backbone() { return g_; }
  Network& decoder_net() { return decoder_; }
  LiftbackMlp& liftback() { return lb_; }
  Optimizer& opt() { return opt_; }
  const std::optional<ProjectionBasis>& basis() const { return basis_; }

  const std::map<std::uint32_t, RunningMean>& u_means() const { return u_means_; }
  const std::map<std::uint32_t, RunningMean>& z_means() const { return z_means_; }

  // Eval-mode reconstruction + backbone pass, [b, wire_dim] -> [b, u_dim].
  Tensor backbone_eval(const Tensor& zt);

 private:
  Tensor decode_forward(const Tensor& zt);  // train-mode lift/decode stage

  SplitSpec spec_;
  Network g_, decoder_;
  LiftbackMlp lb_;
  Gradients gg_, gdec_, glb_;
  Optimizer opt_;
  std::optional<ProjectionBasis> basis_;

  ServerPhase phase_ = ServerPhase::Idle;
  std::uint32_t pending_client_ = 0;
  std::uint64_t pending_step_ = 0;
  Tape tape_g_, tape_dec_, tape_lb_;
  Tensor zt_in_;

  std::map<std::uint32_t, RunningMean> u_means_, z_means_;
};

// ------------------------------------------------------------------- trace ---

struct MsgRecord {
  MsgType type;
  std::uint64_t frame_bytes;
  std::uint64_t payload_bytes;
  std::uint64_t checksum;
};

struct StepRecord {
  std::uint64_t step;
  std::uint32_t client_id;
  std::uint32_t batch;
  std::array<MsgRecord, 4> msgs;  // Z_FWD, U_FWD, GRAD_U, GRAD_Z
  double ce = 0, wcc = 0, total = 0;
  double wall_ms = 0;
};

struct RunTrace {
  std::vector<MsgRecord> setup;
  std::vector<StepRecord> steps;
};

// Communication accounting for the transmitted representation: each sample
// costs wire_dim floats forward plus wire_dim floats backward per epoch.
struct CommAccount {
  double floats_per_sample = 0;
  std::uint64_t total_bytes = 0;
  double gib = 0;
};
CommAccount comm_closed_form(std::uint64_t wire_dim, std::uint64_t samples_per_epoch,
                             std::uint64_t epochs);
// Sums the actual Z_FWD and GRAD_Z payload bytes of a recorded trace.
CommAccount comm_from_trace(const RunTrace& trace, std::uint64_t samples_per_epoch,
                            std::uint64_t epochs);

// ------------------------------------------------------------------ driver ---

struct ClientShard {
  Tensor x;            // [n, c, h, w]
  std::vector<int> y;
};

struct SessionConfig {
  SplitSpec spec;
  std::size_t n_clients = 10;
  double lambda = 0.0;
  HeadOwnership ownership = HeadOwnership::Shared;
  OptKind opt_kind = OptKind::Adam;
  double lr = 1e-3;
  std::size_t batch = 32;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  bool shuffle = true;
};

enum class Carrier { Inproc, TcpLoopback };

// Invoked after each pass over the shards with the pass index and the trace
// recorded so far (accuracy probes, logging).
using EpochHook = std::function<void(std::size_t, const RunTrace&)>;

// Both halves of a session living in one process; drives the full wire
// exchange over the selected carrier and records the trace.
class SplitSystem {
 public:
  explicit SplitSystem(const SessionConfig& cfg);

  RunTrace run(const std::vector<ClientShard>& shards, Carrier carrier = Carrier::Inproc,
               const EpochHook& on_epoch_end = {});

  // Client half only: the server answers on the far side of `ep` (split
  // process mode).  Reads the basis broadcast first when one is expected.
  RunTrace run_remote(const std::vector<ClientShard>& shards, Endpoint& ep,
                      const EpochHook& on_epoch_end = {});

  // One full four-message exchange for a single batch.  The two-endpoint
  // form pumps the in-process server inline; the one-endpoint form talks to
  // a server answering on the other side of the wire.
  StepRecord execute_step(std::size_t client_idx, const Tensor& x, const std::vector<int>& y,
                          std::uint64_t step, Endpoint& cli_ep, Endpoint& srv_ep);
  StepRecord remote_step(std::size_t client_idx, const Tensor& x, const std::vector<int>& y,
                         std::uint64_t step, Endpoint& ep);

  double evaluate(const Tensor& x, const std::vector<int>& y, std::size_t client_idx = 0,
                  std::size_t batch = 256);
  Tensor full_forward_eval(const Tensor& x, std::size_t client_idx = 0);

  SplitSystem clone() const;  // deep copy including optimizer state

  SessionConfig& cfg() { return cfg_; }
  SplitServer& server() { return *server_; }
  SplitClient& client(std::size_t i) { return clients_[i]; }
  std::size_t n_clients() const { return clients_.size(); }

 private:
  SplitSystem() = default;
  void broadcast_setup(RunTrace& trace);
  void drive_epochs(const std::vector<ClientShard>& shards, RunTrace& trace,
                    const std::function<StepRecord(std::size_t, const Tensor&,
                                                   const std::vector<int>&, std::uint64_t)>&
                        one_step,
                    const EpochHook& on_epoch_end);

  SessionConfig cfg_;
  std::unique_ptr<SplitServer> server_;
  std::vector<std::shared_ptr<ClientParams>> param_sets_;  // 1 if shared, n otherwise
  std::vector<SplitClient> clients_;
};

// Split-process entry points used by the CLI: the server side accepts one
// connection and answers frames until the peer disconnects cleanly.
void serve_connection(SplitServer& server, Endpoint& ep, std::size_t n_clients);

}  // namespace osplit
