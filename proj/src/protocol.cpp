#include "osplit/protocol.hpp"

#include <chrono>
#include <stdexcept>
#include <thread>

#include "osplit/errors.hpp"
#include "osplit/wcc.hpp"

namespace osplit {

namespace {

// Restores a network's train/eval mode on scope exit.
struct ModeGuard {
  Network& net;
  Mode saved;
  explicit ModeGuard(Network& n, Mode m) : net(n), saved(n.mode) { net.mode = m; }
  ~ModeGuard() { net.mode = saved; }
};

}  // namespace

std::uint64_t sub_seed(std::uint64_t master, std::string_view tag) {
  return fnv1a64(tag.data(), tag.size(), master ^ 14695981039346656037ull);
}

void SplitSpec::finalize() {
  if (head_depth < 1 || head_depth > 3)
    throw std::invalid_argument("split spec: head_depth must be 1..3");
  cut_c = head_channels;
  if (head_depth == 1) {
    cut_h = img_h;
    cut_w = img_w;
  } else {
    if (img_h < 2 || img_w < 2)
      throw std::invalid_argument("split spec: image too small for pooling");
    cut_h = (img_h - 2) / 2 + 1;
    cut_w = (img_w - 2) / 2 + 1;
  }
  d = cut_c * cut_h * cut_w;
  switch (bottleneck) {
    case BottleneckKind::Raw:
      wire_dim = d;
      break;
    case BottleneckKind::Projection:
      if (k < 1 || k > d)
        throw std::invalid_argument("split spec: projection width k=" + std::to_string(k) +
                                    " must satisfy 1 <= k <= d=" + std::to_string(d));
      wire_dim = k;
      break;
    case BottleneckKind::Learned1x1:
      wire_dim = codec_channels(cut_c, cr) * cut_h * cut_w;
      break;
  }
}

Network make_head(const SplitSpec& s, RngStream& rng) {
  Network f;
  f.layers.push_back(conv2d(s.img_c, s.head_channels, 3, 1, 1, rng));
  f.layers.push_back(relu());
  if (s.head_depth >= 2) {
    f.layers.push_back(maxpool(2, 2));
    f.layers.push_back(conv2d(s.head_channels, s.head_channels, 3, 1, 1, rng));
    f.layers.push_back(relu());
  }
  if (s.head_depth >= 3) {
    f.layers.push_back(conv2d(s.head_channels, s.head_channels, 3, 1, 1, rng));
    f.layers.push_back(relu());
  }
  f.layers.push_back(flatten());
  return f;
}

Network make_backbone(const SplitSpec& s, RngStream& rng) {
  Network g;
  g.layers.push_back(unflatten(s.cut_c, s.cut_h, s.cut_w));
  g.layers.push_back(conv2d(s.cut_c, s.cut_c, 3, 1, 1, rng));
  g.layers.push_back(relu());
  g.layers.push_back(flatten());
  g.layers.push_back(dense(s.d, s.u_dim, rng));
  g.layers.push_back(relu());
  return g;
}

Network make_tail(const SplitSpec& s, RngStream& rng) {
  Network h;
  h.layers.push_back(dense(s.u_dim, s.classes, rng));
  return h;
}

std::shared_ptr<ClientParams> make_client_params(const SplitSpec& s, std::uint64_t seed,
                                                 const Optimizer& opt,
                                                 const std::string& tag) {
  auto p = std::make_shared<ClientParams>();
  RngStream rf(sub_seed(seed, tag + "/head"));
  RngStream rh(sub_seed(seed, tag + "/tail"));
  p->f = make_head(s, rf);
  p->h = make_tail(s, rh);
  if (s.bottleneck == BottleneckKind::Learned1x1) {
    RngStream re(sub_seed(seed, tag + "/encoder"));
    std::size_t kch = codec_channels(s.cut_c, s.cr);
    p->encoder.layers.push_back(unflatten(s.cut_c, s.cut_h, s.cut_w));
    p->encoder.layers.push_back(conv2d(s.cut_c, kch, 1, 1, 0, re));
    p->encoder.layers.push_back(flatten());
  }
  p->gf = make_gradients(p->f);
  p->gh = make_gradients(p->h);
  p->genc = make_gradients(p->encoder);
  p->opt = opt;
  return p;
}

// ------------------------------------------------------------------ client ---

SplitClient::SplitClient(std::uint32_t id, const SplitSpec& spec,
                         std::shared_ptr<ClientParams> params, double lambda)
    : id_(id), spec_(spec), params_(std::move(params)), lambda_(lambda) {}

void SplitClient::install_basis(const WireMessage& setup) {
  if (setup.type != MsgType::SetupR)
    throw ProtocolOrderError("client: expected SETUP_R");
  if (setup.d != spec_.d || setup.k != spec_.k)
    throw std::invalid_argument("client: basis extents do not match the model");
  Tensor r({setup.d, setup.k});
  r.data = setup.payload;
  basis_ = ProjectionBasis::from_matrix(std::move(r), setup.basis_seed);
}

Tensor SplitClient::encode_forward(const Tensor& a) {
  switch (spec_.bottleneck) {
    case BottleneckKind::Raw:
      return a;
    case BottleneckKind::Projection:
      if (!basis_) throw ProtocolOrderError("client: no basis installed before forward");
      return project(*basis_, a);
    case BottleneckKind::Learned1x1:
      return forward(params_->encoder, a, &tape_enc_);
  }
  throw std::logic_error("unreachable");
}

WireMessage SplitClient::start_step(const Tensor& x, const std::vector<int>& y,
                                    std::uint64_t step) {
  if (phase_ != ClientPhase::Idle)
    throw ProtocolOrderError("client: start_step outside Idle phase");
  if (x.rank() != 4 || x.shape[1] != spec_.img_c || x.shape[2] != spec_.img_h ||
      x.shape[3] != spec_.img_w)
    throw std::invalid_argument("client: batch shape does not match the model");
  if (y.size() != x.shape[0]) throw std::invalid_argument("client: label count mismatch");
  step_ = step;
  labels_ = y;
  params_->f.mode = Mode::Train;
  params_->h.mode = Mode::Train;
  params_->encoder.mode = Mode::Train;
  Tensor a = forward(params_->f, x, &tape_f_);
  zt_ = encode_forward(a);
  phase_ = ClientPhase::SentForward;
  return make_tensor_msg(MsgType::ZFwd, id_, step_, zt_);
}

WireMessage SplitClient::handle_u(const WireMessage& u_msg) {
  if (phase_ != ClientPhase::SentForward)
    throw ProtocolOrderError("client: U_FWD outside SentForward phase");
  if (u_msg.type != MsgType::UFwd) throw ProtocolOrderError("client: expected U_FWD");
  if (u_msg.client_id != id_ || u_msg.step != step_)
    throw ProtocolOrderError("client: U_FWD for a different step");
  Tensor u = payload_tensor(u_msg);
  Tensor logits = forward(params_->h, u, &tape_h_);
  CeResult ce = cross_entropy(logits, labels_);
  last_ce_ = ce.loss;
  last_wcc_ = wcc_loss(zt_, labels_);
  last_total_ = (lambda_ == 0.0) ? ce.loss : ce.loss + lambda_ * last_wcc_;
  params_->gf.zero();
  params_->gh.zero();
  params_->genc.zero();
  // The gradient sent to the server is of the label-loss alone; the
  // compactness term has zero derivative along the server path.
  Tensor grad_u = backward_from_seed(params_->h, tape_h_, ce.grad_logits, params_->gh);
  phase_ = ClientPhase::AwaitCutGrad;
  return make_tensor_msg(MsgType::GradU, id_, step_, grad_u);
}

void SplitClient::handle_grad_z(const WireMessage& gz_msg) {
  if (phase_ != ClientPhase::AwaitCutGrad)
    throw ProtocolOrderError("client: GRAD_Z outside AwaitCutGrad phase");
  if (gz_msg.type != MsgType::GradZ) throw ProtocolOrderError("client: expected GRAD_Z");
  if (gz_msg.client_id != id_ || gz_msg.step != step_)
    throw ProtocolOrderError("client: GRAD_Z for a different step");
  Tensor gz = payload_tensor(gz_msg);
  if (!gz.same_shape(zt_))
    throw std::invalid_argument("client: cut-gradient shape mismatch");
  // Fuse the local compactness gradient into the cut gradient, then chain
  // through the encode stage into the head.
  if (lambda_ != 0.0) gz.add_scaled(wcc_grad(zt_, labels_), static_cast<float>(lambda_));
  Tensor seed_f;
  switch (spec_.bottleneck) {
    case BottleneckKind::Raw:
      seed_f = std::move(gz);
      break;
    case BottleneckKind::Projection:
      seed_f = backprop_projection(*basis_, gz);
      break;
    case BottleneckKind::Learned1x1:
      seed_f = backward_from_seed(params_->encoder, tape_enc_, gz, params_->genc);
      break;
  }
  backward_from_seed(params_->f, tape_f_, seed_f, params_->gf);
  if (spec_.bottleneck == BottleneckKind::Learned1x1)
    params_->opt.apply({&params_->f, &params_->h, &params_->encoder},
                       {&params_->gf, &params_->gh, &params_->genc});
  else
    params_->opt.apply({&params_->f, &params_->h}, {&params_->gf, &params_->gh});
  phase_ = ClientPhase::Idle;
}

Tensor SplitClient::encode_eval(const Tensor& x) {
  ModeGuard mf(params_->f, Mode::Eval);
  ModeGuard me(params_->encoder, Mode::Eval);
  Tensor a = forward(params_->f, x);
  switch (spec_.bottleneck) {
    case BottleneckKind::Raw:
      return a;
    case BottleneckKind::Projection:
      if (!basis_) throw ProtocolOrderError("client: no basis installed");
      return project(*basis_, a);
    case BottleneckKind::Learned1x1:
      return forward(params_->encoder, a);
  }
  throw std::logic_error("unreachable");
}

Tensor SplitClient::tail_eval(const Tensor& u) {
  ModeGuard mh(params_->h, Mode::Eval);
  return forward(params_->h, u);
}

// ------------------------------------------------------------------ server ---

void RunningMean::add_rows(const Tensor& rows) {
  if (rows.rank() != 2) throw std::invalid_argument("running mean: rank-2 input");
  if (sum.empty()) sum.assign(rows.shape[1], 0.0);
  if (sum.size() != rows.shape[1])
    throw std::invalid_argument("running mean: width changed");
  for (std::size_t i = 0; i < rows.shape[0]; ++i)
    for (std::size_t j = 0; j < rows.shape[1]; ++j)
      sum[j] += static_cast<double>(rows(i, j));
  count += rows.shape[0];
}

std::vector<double> RunningMean::mean() const {
  std::vector<double> m(sum.size(), 0.0);
  if (!count) return m;
  for (std::size_t j = 0; j < sum.size(); ++j)
    m[j] = sum[j] / static_cast<double>(count);
  return m;
}

SplitServer::SplitServer(const SplitSpec& spec, std::uint64_t seed, const Optimizer& opt)
    : spec_(spec), opt_(opt) {
  RngStream rg(sub_seed(seed, "server/backbone"));
  g_ = make_backbone(spec_, rg);
  if (spec_.bottleneck == BottleneckKind::Projection) {
    basis_ = ProjectionBasis(spec_.d, spec_.k, sub_seed(seed, "server/basis"),
                             spec_.basis_init);
    if (spec_.liftback == LiftbackMode::Learned) {
      RngStream rl(sub_seed(seed, "server/liftback"));
      lb_ = make_liftback(spec_.k, spec_.m, spec_.d, rl);
    }
  } else if (spec_.bottleneck == BottleneckKind::Learned1x1) {
    RngStream rd(sub_seed(seed, "server/decoder"));
    std::size_t kch = codec_channels(spec_.cut_c, spec_.cr);
    decoder_.layers.push_back(unflatten(kch, spec_.cut_h, spec_.cut_w));
    decoder_.layers.push_back(conv2d(kch, spec_.cut_c, 1, 1, 0, rd));
    decoder_.layers.push_back(flatten());
  }
  gg_ = make_gradients(g_);
  gdec_ = make_gradients(decoder_);
  glb_ = make_gradients(lb_.net);
}

WireMessage SplitServer::make_setup(std::uint32_t client_id) const {
  if (!basis_) throw ProtocolOrderError("server: no basis in this bottleneck mode");
  return osplit::make_setup(client_id, static_cast<std::uint32_t>(spec_.d),
                            static_cast<std::uint32_t>(spec_.k), basis_->seed(),
                            basis_->r());
}

Tensor SplitServer::decode_forward(const Tensor& zt) {
  switch (spec_.bottleneck) {
    case BottleneckKind::Raw:
      return zt;
    case BottleneckKind::Projection:
      if (spec_.liftback == LiftbackMode::Fixed) return lift_fixed(*basis_, zt);
      return forward(lb_.net, zt, &tape_lb_);
    case BottleneckKind::Learned1x1:
      return forward(decoder_, zt, &tape_dec_);
  }
  throw std::logic_error("unreachable");
}

WireMessage SplitServer::handle_z(const WireMessage& z_msg) {
  if (phase_ != ServerPhase::Idle)
    throw ProtocolOrderError("server: Z_FWD outside Idle phase");
  if (z_msg.type != MsgType::ZFwd) throw ProtocolOrderError("server: expected Z_FWD");
  if (z_msg.dim != spec_.wire_dim)
    throw std::invalid_argument("server: cut width mismatch (got " +
                                std::to_string(z_msg.dim) + ", expected " +
                                std::to_string(spec_.wire_dim) + ")");
  zt_in_ = payload_tensor(z_msg);
  z_means_[z_msg.client_id].add_rows(zt_in_);
  g_.mode = Mode::Train;
  decoder_.mode = Mode::Train;
  lb_.net.mode = Mode::Train;
  Tensor zhat = decode_forward(zt_in_);
  Tensor u = forward(g_, zhat, &tape_g_);
  u_means_[z_msg.client_id].add_rows(u);
  pending_client_ = z_msg.client_id;
  pending_step_ = z_msg.step;
  phase_ = ServerPhase::SentU;
  return make_tensor_msg(MsgType::UFwd, pending_client_, pending_step_, u);
}

WireMessage SplitServer::handle_grad_u(const WireMessage& gu_msg) {
  if (phase_ != ServerPhase::SentU)
    throw ProtocolOrderError("server: GRAD_U outside SentU phase");
  if (gu_msg.type != MsgType::GradU) throw ProtocolOrderError("server: expected GRAD_U");
  if (gu_msg.client_id != pending_client_ || gu_msg.step != pending_step_)
    throw ProtocolOrderError("server: GRAD_U for a different step");
  Tensor seed = payload_tensor(gu_msg);
  gg_.zero();
  gdec_.zero();
  glb_.zero();
  Tensor grad_zhat = backward_from_seed(g_, tape_g_, seed, gg_);
  Tensor grad_zt;
  switch (spec_.bottleneck) {
    case BottleneckKind::Raw:
      grad_zt = std::move(grad_zhat);
      break;
    case BottleneckKind::Projection:
      if (spec_.liftback == LiftbackMode::Fixed)
        grad_zt = project(*basis_, grad_zhat);
      else
        grad_zt = backward_from_seed(lb_.net, tape_lb_, grad_zhat, glb_);
      break;
    case BottleneckKind::Learned1x1:
      grad_zt = backward_from_seed(decoder_, tape_dec_, grad_zhat, gdec_);
      break;
  }
  WireMessage reply = make_tensor_msg(MsgType::GradZ, pending_client_, pending_step_, grad_zt);
  if (spec_.bottleneck == BottleneckKind::Projection &&
      spec_.liftback == LiftbackMode::Learned)
    opt_.apply({&g_, &lb_.net}, {&gg_, &glb_});
  else if (spec_.bottleneck == BottleneckKind::Learned1x1)
    opt_.apply({&g_, &decoder_}, {&gg_, &gdec_});
  else
    opt_.apply(g_, gg_);
  phase_ = ServerPhase::Idle;
  return reply;
}

Tensor SplitServer::backbone_eval(const Tensor& zt) {
  ModeGuard mg(g_, Mode::Eval);
  ModeGuard md(decoder_, Mode::Eval);
  ModeGuard ml(lb_.net, Mode::Eval);
  Tensor zhat;
  switch (spec_.bottleneck) {
    case BottleneckKind::Raw:
      zhat = zt;
      break;
    case BottleneckKind::Projection:
      zhat = (spec_.liftback == LiftbackMode::Fixed) ? lift_fixed(*basis_, zt)
                                                     : forward(lb_.net, zt);
      break;
    case BottleneckKind::Learned1x1:
      zhat = forward(decoder_, zt);
      break;
  }
  return forward(g_, zhat);
}

// ------------------------------------------------------------------- comms ---

CommAccount comm_closed_form(std::uint64_t wire_dim, std::uint64_t samples_per_epoch,
                             std::uint64_t epochs) {
  CommAccount c;
  c.floats_per_sample = 2.0 * static_cast<double>(wire_dim);
  c.total_bytes = samples_per_epoch * epochs * 2 * wire_dim * 4;
  c.gib = static_cast<double>(c.total_bytes) / static_cast<double>(1ull << 30);
  return c;
}

CommAccount comm_from_trace(const RunTrace& trace, std::uint64_t samples_per_epoch,
                            std::uint64_t epochs) {
  CommAccount c;
  for (const StepRecord& s : trace.steps)
    c.total_bytes += s.msgs[0].payload_bytes + s.msgs[3].payload_bytes;
  c.floats_per_sample = static_cast<double>(c.total_bytes / 4) /
                        (static_cast<double>(samples_per_epoch) * static_cast<double>(epochs));
  c.gib = static_cast<double>(c.total_bytes) / static_cast<double>(1ull << 30);
  return c;
}

// ------------------------------------------------------------------ driver ---

SplitSystem::SplitSystem(const SessionConfig& cfg) : cfg_(cfg) {
  cfg_.spec.finalize();
  Optimizer opt = (cfg_.opt_kind == OptKind::Adam) ? Optimizer::adam(cfg_.lr)
                                                   : Optimizer::sgd(cfg_.lr);
  server_ = std::make_unique<SplitServer>(cfg_.spec, sub_seed(cfg_.seed, "server"), opt);
  if (cfg_.ownership == HeadOwnership::Shared) {
    param_sets_.push_back(make_client_params(cfg_.spec, sub_seed(cfg_.seed, "client"), opt,
                                             "client"));
  } else {
    for (std::size_t i = 0; i < cfg_.n_clients; ++i)
      param_sets_.push_back(make_client_params(
          cfg_.spec, sub_seed(cfg_.seed, "client/" + std::to_string(i)), opt,
          "client/" + std::to_string(i)));
  }
  for (std::size_t i = 0; i < cfg_.n_clients; ++i) {
    auto& set = param_sets_[cfg_.ownership == HeadOwnership::Shared ? 0 : i];
    clients_.emplace_back(static_cast<std::uint32_t>(i), cfg_.spec, set, cfg_.lambda);
  }
  // Projection clients can evaluate before any wire traffic: install the
  // basis eagerly; run() still sends (and records) the real setup frames.
  if (cfg_.spec.bottleneck == BottleneckKind::Projection)
    for (SplitClient& c : clients_) c.set_basis(*server_->basis());
}

SplitSystem SplitSystem::clone() const {
  SplitSystem s;
  s.cfg_ = cfg_;
  s.server_ = std::make_unique<SplitServer>(*server_);
  for (const auto& p : param_sets_) s.param_sets_.push_back(std::make_shared<ClientParams>(*p));
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    auto& set = s.param_sets_[cfg_.ownership == HeadOwnership::Shared ? 0 : i];
    s.clients_.emplace_back(static_cast<std::uint32_t>(i), s.cfg_.spec, set, s.cfg_.lambda);
    if (s.cfg_.spec.bottleneck == BottleneckKind::Projection)
      s.clients_.back().set_basis(*s.server_->basis());
  }
  return s;
}

StepRecord SplitSystem::execute_step(std::size_t client_idx, const Tensor& x,
                                     const std::vector<int>& y, std::uint64_t step,
                                     Endpoint& cli_ep, Endpoint& srv_ep) {
  auto t0 = std::chrono::steady_clock::now();
  SplitClient& cl = clients_[client_idx];
  StepRecord rec{};
  rec.step = step;
  rec.client_id = cl.id();
  rec.batch = static_cast<std::uint32_t>(x.shape[0]);

  auto log = [](StepRecord& r, int slot, MsgType t, const FrameInfo& fi) {
    std::size_t header = 25;
    r.msgs[slot] = {t, fi.bytes, fi.bytes - header, fi.checksum};
  };

  FrameInfo fi = cli_ep.send(cl.start_step(x, y, step));
  log(rec, 0, MsgType::ZFwd, fi);
  srv_ep.send(server_->handle_z(srv_ep.recv()));
  WireMessage mu = cli_ep.recv(&fi);
  log(rec, 1, MsgType::UFwd, fi);
  fi = cli_ep.send(cl.handle_u(mu));
  log(rec, 2, MsgType::GradU, fi);
  srv_ep.send(server_->handle_grad_u(srv_ep.recv()));
  WireMessage mgz = cli_ep.recv(&fi);
  log(rec, 3, MsgType::GradZ, fi);
  cl.handle_grad_z(mgz);

  rec.ce = cl.last_ce();
  rec.wcc = cl.last_wcc();
  rec.total = cl.last_total();
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0).count();
  return rec;
}

void SplitSystem::broadcast_setup(RunTrace& trace) {
  // Setup frames are built once per client; encode/decode mirrors the real
  // wire path so the recorded frames match the TCP carrier byte for byte.
  if (cfg_.spec.bottleneck != BottleneckKind::Projection) return;
  for (SplitClient& c : clients_) {
    WireMessage m = server_->make_setup(c.id());
    std::vector<std::uint8_t> bytes = encode(m);
    FrameInfo fi = frame_info(bytes);
    trace.setup.push_back({MsgType::SetupR, fi.bytes, fi.bytes - 25 - 16, fi.checksum});
    c.install_basis(decode(bytes));
  }
}

namespace {

struct ShardIterator {
  const ClientShard* shard = nullptr;
  std::size_t batch = 0;
  std::vector<std::size_t> order;
  std::size_t pos = 0;

  void reset_epoch(std::uint64_t seed, bool shuffle) {
    order.resize(shard->y.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (shuffle) {
      RngStream rng(seed);
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    pos = 0;
  }

  bool next(const ClientShard& sh, Tensor& x, std::vector<int>& y) {
    if (pos >= order.size()) return false;
    std::size_t take = std::min(batch, order.size() - pos);
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                 order.begin() + static_cast<std::ptrdiff_t>(pos + take));
    x = gather_rows(sh.x, idx);
    y.clear();
    for (std::size_t i : idx) y.push_back(sh.y[i]);
    pos += take;
    return true;
  }
};

}  // namespace

void SplitSystem::drive_epochs(
    const std::vector<ClientShard>& shards, RunTrace& trace,
    const std::function<StepRecord(std::size_t, const Tensor&, const std::vector<int>&,
                                   std::uint64_t)>& one_step,
    const EpochHook& on_epoch_end) {
  if (shards.size() != clients_.size())
    throw std::invalid_argument("run: one shard per client required");
  std::vector<ShardIterator> iters(clients_.size());
  for (std::size_t i = 0; i < iters.size(); ++i) {
    iters[i].shard = &shards[i];
    iters[i].batch = cfg_.batch;
  }
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (std::size_t j = 0; j < iters.size(); ++j)
      iters[j].reset_epoch(
          sub_seed(cfg_.seed, "order/" + std::to_string(epoch) + "/" + std::to_string(j)),
          cfg_.shuffle);
    // Round-robin over clients, skipping those whose shard is exhausted
    // this epoch, so every sample is seen exactly once per epoch.
    bool any = true;
    while (any) {
      any = false;
      for (std::size_t j = 0; j < clients_.size(); ++j) {
        Tensor x;
        std::vector<int> y;
        if (!iters[j].next(shards[j], x, y)) continue;
        trace.steps.push_back(one_step(j, x, y, step));
        ++step;
        any = true;
      }
    }
    if (on_epoch_end) on_epoch_end(epoch, trace);
  }
}

RunTrace SplitSystem::run(const std::vector<ClientShard>& shards, Carrier carrier,
                          const EpochHook& on_epoch_end) {
  RunTrace trace;
  if (carrier == Carrier::Inproc) {
    auto [a, b] = make_inproc_pair();
    broadcast_setup(trace);
    drive_epochs(shards, trace,
                 [&](std::size_t j, const Tensor& x, const std::vector<int>& y,
                     std::uint64_t st) { return execute_step(j, x, y, st, *a, *b); },
                 on_epoch_end);
  } else {
    TcpListener listener("127.0.0.1", 0);
    std::thread srv([&] {
      auto ep = listener.accept();
      try {
        for (;;) {
          WireMessage m = ep->recv();
          if (m.type == MsgType::ZFwd)
            ep->send(server_->handle_z(m));
          else if (m.type == MsgType::GradU)
            ep->send(server_->handle_grad_u(m));
          else
            throw ProtocolOrderError("server: unexpected frame type");
        }
      } catch (const Disconnected&) {
        // Clean end of session.
      }
    });
    {
      auto cli = tcp_connect("127.0.0.1", listener.port());
      broadcast_setup(trace);
      drive_epochs(shards, trace,
                   [&](std::size_t j, const Tensor& x, const std::vector<int>& y,
                       std::uint64_t st) { return remote_step(j, x, y, st, *cli); },
                   on_epoch_end);
    }
    srv.join();
  }
  return trace;
}

RunTrace SplitSystem::run_remote(const std::vector<ClientShard>& shards, Endpoint& ep,
                                 const EpochHook& on_epoch_end) {
  RunTrace trace;
  if (cfg_.spec.bottleneck == BottleneckKind::Projection) {
    // The far server opens the session by broadcasting one basis frame per
    // client; install each on its addressee.
    for (std::size_t i = 0; i < clients_.size(); ++i) {
      FrameInfo fi;
      WireMessage m = ep.recv(&fi);
      if (m.type != MsgType::SetupR)
        throw ProtocolOrderError("run_remote: expected a basis frame first");
      trace.setup.push_back({MsgType::SetupR, fi.bytes, fi.bytes - 25 - 16, fi.checksum});
      if (m.client_id >= clients_.size())
        throw ProtocolOrderError("run_remote: basis frame for unknown client");
      clients_[m.client_id].install_basis(m);
    }
  }
  drive_epochs(shards, trace,
               [&](std::size_t j, const Tensor& x, const std::vector<int>& y,
                   std::uint64_t st) { return remote_step(j, x, y, st, ep); },
               on_epoch_end);
  return trace;
}

StepRecord SplitSystem::remote_step(std::size_t client_idx, const Tensor& x,
                                    const std::vector<int>& y, std::uint64_t step,
                                    Endpoint& ep) {
  auto t0 = std::chrono::steady_clock::now();
  SplitClient& cl = clients_[client_idx];
  StepRecord rec{};
  rec.step = step;
  rec.client_id = cl.id();
  rec.batch = static_cast<std::uint32_t>(x.shape[0]);
  auto log = [](StepRecord& r, int slot, MsgType t, const FrameInfo& fi) {
    r.msgs[slot] = {t, fi.bytes, fi.bytes - 25, fi.checksum};
  };
  FrameInfo fi = ep.send(cl.start_step(x, y, step));
  log(rec, 0, MsgType::ZFwd, fi);
  WireMessage mu = ep.recv(&fi);
  log(rec, 1, MsgType::UFwd, fi);
  fi = ep.send(cl.handle_u(mu));
  log(rec, 2, MsgType::GradU, fi);
  WireMessage mgz = ep.recv(&fi);
  log(rec, 3, MsgType::GradZ, fi);
  cl.handle_grad_z(mgz);
  rec.ce = cl.last_ce();
  rec.wcc = cl.last_wcc();
  rec.total = cl.last_total();
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0).count();
  return rec;
}

Tensor SplitSystem::full_forward_eval(const Tensor& x, std::size_t client_idx) {
  Tensor zt = clients_[client_idx].encode_eval(x);
  Tensor u = server_->backbone_eval(zt);
  return clients_[client_idx].tail_eval(u);
}

double SplitSystem::evaluate(const Tensor& x, const std::vector<int>& y,
                             std::size_t client_idx, std::size_t batch) {
  std::size_t n = x.shape[0];
  std::size_t correct = 0;
  for (std::size_t at = 0; at < n; at += batch) {
    std::size_t take = std::min(batch, n - at);
    std::vector<std::size_t> idx(take);
    for (std::size_t i = 0; i < take; ++i) idx[i] = at + i;
    Tensor xb = gather_rows(x, idx);
    Tensor logits = full_forward_eval(xb, client_idx);
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.shape[1]; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      if (static_cast<int>(best) == y[at + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

void serve_connection(SplitServer& server, Endpoint& ep, std::size_t n_clients) {
  if (server.basis())
    for (std::size_t cid = 0; cid < n_clients; ++cid)
      ep.send(server.make_setup(static_cast<std::uint32_t>(cid)));
  try {
    for (;;) {
      WireMessage m = ep.recv();
      if (m.type == MsgType::ZFwd)
        ep.send(server.handle_z(m));
      else if (m.type == MsgType::GradU)
        ep.send(server.handle_grad_u(m));
      else
        throw ProtocolOrderError("server: unexpected frame type");
    }
  } catch (const Disconnected&) {
    if (server.phase() != ServerPhase::Idle)
      throw;  // fail-stop: the peer vanished mid-step
  }
}

}  // namespace osplit
