#include "osplit/runner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "osplit/attacks.hpp"
#include "osplit/checkpoint.hpp"
#include "osplit/data.hpp"
#include "osplit/detector.hpp"
#include "osplit/errors.hpp"
#include "osplit/metrics.hpp"

namespace osplit {

namespace {

using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ----------------------------------------------------------------- dataset ---

struct PreparedData {
  Dataset train, test;
  SplitSpec spec;
  std::vector<ClientShard> shards;
  std::vector<std::size_t> shard_sizes;
  std::vector<bool> malicious;
  std::vector<std::size_t> malicious_ids;
};

void holdout_tail(Dataset& train, Dataset& test, std::size_t n_test) {
  const std::size_t n = train.size();
  if (n_test >= n) throw ConfigError("config: idx dataset too small to hold out a test split");
  std::vector<std::size_t> head(n - n_test), tail(n_test);
  std::iota(head.begin(), head.end(), std::size_t{0});
  std::iota(tail.begin(), tail.end(), n - n_test);
  test.x = gather_rows(train.x, tail);
  test.y.assign(train.y.begin() + static_cast<std::ptrdiff_t>(n - n_test), train.y.end());
  test.classes = train.classes;
  train.x = gather_rows(train.x, head);
  train.y.resize(n - n_test);
}

PreparedData prepare(const ExperimentConfig& cfg) {
  PreparedData p;
  if (cfg.dataset == "blobs") {
    const std::size_t per_train = std::max<std::size_t>(1, cfg.samples / cfg.classes);
    const std::size_t per_test = std::max<std::size_t>(1, cfg.test_samples / cfg.classes);
    p.train = synth_blobs(cfg.classes, per_train, cfg.image_size, cfg.image_size,
                          cfg.blob_spread, sub_seed(cfg.seed, "data/train"));
    p.test = synth_blobs(cfg.classes, per_test, cfg.image_size, cfg.image_size,
                         cfg.blob_spread, sub_seed(cfg.seed, "data/test"));
  } else {
    p.train = load_idx(cfg.idx_images, cfg.idx_labels);
    if (!cfg.idx_test_images.empty() && !cfg.idx_test_labels.empty())
      p.test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
    else
      holdout_tail(p.train, p.test, std::max<std::size_t>(1, p.train.size() / 5));
  }
  p.spec = to_split_spec(cfg, p.train.x.shape[2], p.train.x.shape[3], p.train.x.shape[1],
                         p.train.classes);

  const auto parts = dirichlet_partition(p.train.y, cfg.clients, cfg.alpha,
                                         sub_seed(cfg.seed, "partition"));
  std::size_t n_mal = 0;
  if (cfg.malicious_fraction > 0) {
    n_mal = static_cast<std::size_t>(
        std::llround(cfg.malicious_fraction * static_cast<double>(cfg.clients)));
    n_mal = std::min(n_mal, cfg.clients);
  }
  p.malicious.assign(cfg.clients, false);
  // The highest-indexed clients act maliciously, keeping client 0 clean for
  // evaluation in per-client-head sessions.
  for (std::size_t i = cfg.clients - n_mal; i < cfg.clients; ++i) {
    p.malicious[i] = true;
    p.malicious_ids.push_back(i);
  }
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    ClientShard sh;
    sh.x = gather_rows(p.train.x, parts[i]);
    sh.y.reserve(parts[i].size());
    for (std::size_t idx : parts[i]) sh.y.push_back(p.train.y[idx]);
    if (p.malicious[i])
      apply_poison(sh.x, sh.y, cfg.poison_rate, cfg.poison_target,
                   sub_seed(cfg.seed, "poison/" + std::to_string(i)), 1.0f,
                   cfg.poison_patch);
    p.shard_sizes.push_back(sh.y.size());
    p.shards.push_back(std::move(sh));
  }
  return p;
}

// -------------------------------------------------------------- evaluation ---

std::vector<int> predict_all(SplitSystem& sys, const Tensor& x, std::size_t batch = 256) {
  std::vector<int> preds;
  const std::size_t n = x.shape[0];
  for (std::size_t at = 0; at < n; at += batch) {
    const std::size_t take = std::min(batch, n - at);
    std::vector<std::size_t> idx(take);
    std::iota(idx.begin(), idx.end(), at);
    Tensor logits = sys.full_forward_eval(gather_rows(x, idx));
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.shape[1]; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      preds.push_back(static_cast<int>(best));
    }
  }
  return preds;
}

double attack_success_rate(SplitSystem& sys, const Dataset& test,
                           const ExperimentConfig& cfg) {
  Tensor xp = test.x;
  std::vector<int> yp = test.y;
  apply_poison(xp, yp, 1.0, cfg.poison_target, sub_seed(cfg.seed, "poison/eval"), 1.0f,
               cfg.poison_patch);
  const std::vector<int> preds = predict_all(sys, xp);
  std::size_t hits = 0, considered = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (test.y[i] == cfg.poison_target) continue;  // already the target class
    ++considered;
    if (preds[i] == cfg.poison_target) ++hits;
  }
  return considered ? static_cast<double>(hits) / static_cast<double>(considered) : 0.0;
}

// ----------------------------------------------------------------- attacks ---

Tensor channel0(const Tensor& x) {  // [n,c,h,w] -> [n,h,w], first channel
  const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  Tensor out({n, h, w});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(i * c * h * w), h * w,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * h * w));
  return out;
}

Tensor collect_payloads(SplitClient& client, const Tensor& x, std::size_t batch = 256) {
  Tensor out;
  const std::size_t n = x.shape[0];
  for (std::size_t at = 0; at < n; at += batch) {
    const std::size_t take = std::min(batch, n - at);
    std::vector<std::size_t> idx(take);
    std::iota(idx.begin(), idx.end(), at);
    Tensor zt = client.encode_eval(gather_rows(x, idx));
    if (out.numel() == 0) {
      out = Tensor({n, zt.shape[1]});
    }
    std::copy(zt.data.begin(), zt.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(at * zt.shape[1]));
  }
  return out;
}

ordered_json recon_json(const ReconReport& r) {
  ordered_json j;
  j["mean_mse"] = r.mean_mse;
  j["mean_psnr"] = r.mean_psnr;
  j["mean_ssim"] = r.mean_ssim;
  j["masked"] = ordered_json{{"defined", r.masked_defined},
                             {"mean_mse", r.masked_defined ? ordered_json(r.mean_masked_mse)
                                                           : ordered_json(nullptr)},
                             {"mean_psnr", r.masked_defined ? ordered_json(r.mean_masked_psnr)
                                                            : ordered_json(nullptr)},
                             {"mean_ssim", r.masked_defined ? ordered_json(r.mean_masked_ssim)
                                                            : ordered_json(nullptr)}};
  j["victims"] = r.mse.size();
  return j;
}

// ------------------------------------------------------------------ output ---

ordered_json comm_json(const CommAccount& c) {
  return ordered_json{{"floats_per_sample", c.floats_per_sample},
                      {"total_bytes", c.total_bytes},
                      {"gib", c.gib}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open for writing: " + path);
  f << text;
}

void write_trace_jsonl(const std::string& path, const RunTrace& trace,
                       std::uint64_t config_hash_v, std::size_t wire_dim) {
  std::ostringstream o;
  ordered_json meta{{"config_hash", hex_u64(config_hash_v)},
                    {"wire_dim", wire_dim},
                    {"setup_frames", trace.setup.size()},
                    {"steps", trace.steps.size()}};
  o << meta.dump() << "\n";
  for (const MsgRecord& m : trace.setup) {
    ordered_json j{{"type", msg_type_name(m.type)},
                   {"frame_bytes", m.frame_bytes},
                   {"payload_bytes", m.payload_bytes},
                   {"checksum", hex_u64(m.checksum)}};
    o << j.dump() << "\n";
  }
  for (const StepRecord& s : trace.steps) {
    ordered_json j{{"step", s.step}, {"client", s.client_id}, {"batch", s.batch}};
    ordered_json msgs = ordered_json::array();
    for (const MsgRecord& m : s.msgs)
      msgs.push_back(ordered_json{{"type", msg_type_name(m.type)},
                                  {"frame_bytes", m.frame_bytes},
                                  {"payload_bytes", m.payload_bytes},
                                  {"checksum", hex_u64(m.checksum)}});
    j["msgs"] = std::move(msgs);
    j["ce"] = s.ce;
    j["wcc"] = s.wcc;
    j["total"] = s.total;
    o << j.dump() << "\n";
  }
  write_text(path, o.str());
}

ordered_json trace_summary_json(const RunTrace& trace) {
  std::map<std::string, std::uint64_t> by_type;
  std::uint64_t total = 0;
  for (const MsgRecord& m : trace.setup) {
    by_type[msg_type_name(m.type)] += m.frame_bytes;
    total += m.frame_bytes;
  }
  for (const StepRecord& s : trace.steps)
    for (const MsgRecord& m : s.msgs) {
      by_type[msg_type_name(m.type)] += m.frame_bytes;
      total += m.frame_bytes;
    }
  ordered_json bytes;
  for (const char* name : {"SETUP_R", "Z_FWD", "U_FWD", "GRAD_U", "GRAD_Z"})
    if (by_type.count(name)) bytes[name] = by_type[name];
  return ordered_json{{"steps", trace.steps.size()},
                      {"setup_frames", trace.setup.size()},
                      {"frame_bytes", bytes},
                      {"total_frame_bytes", total}};
}

void save_session_checkpoints(const ExperimentConfig& cfg, SplitSystem& sys) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::string, const Tensor*>> cli, srv;
  auto add = [](std::vector<std::pair<std::string, const Tensor*>>& out, Network& net,
                const std::string& prefix) {
    for (auto& [name, t] : named_tensors(net, prefix)) out.emplace_back(name, t);
  };
  ClientParams& cp = sys.client(0).params();
  add(cli, cp.f, "client.head");
  add(cli, cp.h, "client.tail");
  if (!cp.encoder.layers.empty()) add(cli, cp.encoder, "client.encoder");
  add(srv, sys.server().backbone(), "server.backbone");
  if (!sys.server().liftback().net.layers.empty())
    add(srv, sys.server().liftback().net, "server.liftback");
  if (!sys.server().decoder_net().layers.empty())
    add(srv, sys.server().decoder_net(), "server.decoder");
  save_checkpoint((fs::path(cfg.out_dir) / "checkpoint_client.bin").string(), cli);
  save_checkpoint((fs::path(cfg.out_dir) / "checkpoint_server.bin").string(), srv);
}

void dump_recon_images(const ExperimentConfig& cfg, const ReconReport& rep,
                       const Tensor& reference) {
  namespace fs = std::filesystem;
  const std::size_t n = std::min<std::size_t>(rep.recon.shape[0], 8);
  const std::size_t h = rep.recon.shape[1], w = rep.recon.shape[2];
  for (std::size_t i = 0; i < n; ++i) {
    Tensor r({h, w}), g({h, w});
    std::copy_n(rep.recon.data.begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w,
                r.data.begin());
    std::copy_n(reference.data.begin() + static_cast<std::ptrdiff_t>(i * h * w), h * w,
                g.data.begin());
    std::ostringstream rp, gp;
    rp << "recon_" << std::setw(2) << std::setfill('0') << i << ".pgm";
    gp << "reference_" << std::setw(2) << std::setfill('0') << i << ".pgm";
    write_pgm((fs::path(cfg.out_dir) / rp.str()).string(), r);
    write_pgm((fs::path(cfg.out_dir) / gp.str()).string(), g);
  }
}

std::pair<std::string, std::uint16_t> split_addr(const std::string& addr) {
  const std::size_t colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw ConfigError("address must look like host:port, got \"" + addr + "\"");
  const std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in address \"" + addr + "\"");
  }
  if (port < 0 || port > 65535) throw ConfigError("port out of range in \"" + addr + "\"");
  return {host, static_cast<std::uint16_t>(port)};
}

// ------------------------------------------------------------ full report ---

struct EpochRow {
  std::size_t epoch = 0;
  double train_acc = 0, test_acc = 0;
  bool acc_known = false;
  double mean_ce = 0, mean_wcc = 0, mean_total = 0;
};

EpochRow losses_of_epoch(const RunTrace& tr, std::size_t from, std::size_t epoch) {
  EpochRow row;
  row.epoch = epoch;
  const std::size_t n = tr.steps.size() - from;
  for (std::size_t i = from; i < tr.steps.size(); ++i) {
    row.mean_ce += tr.steps[i].ce;
    row.mean_wcc += tr.steps[i].wcc;
    row.mean_total += tr.steps[i].total;
  }
  if (n > 0) {
    row.mean_ce /= static_cast<double>(n);
    row.mean_wcc /= static_cast<double>(n);
    row.mean_total /= static_cast<double>(n);
  }
  return row;
}

ordered_json epochs_json(const std::vector<EpochRow>& rows) {
  ordered_json arr = ordered_json::array();
  for (const EpochRow& r : rows) {
    ordered_json j{{"epoch", r.epoch}};
    j["train_accuracy"] = r.acc_known ? ordered_json(r.train_acc) : ordered_json(nullptr);
    j["test_accuracy"] = r.acc_known ? ordered_json(r.test_acc) : ordered_json(nullptr);
    j["mean_ce"] = r.mean_ce;
    j["mean_wcc"] = r.mean_wcc;
    j["mean_total"] = r.mean_total;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::string metrics_csv(const std::vector<EpochRow>& rows) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "epoch,train_accuracy,test_accuracy,mean_ce,mean_wcc,mean_total\n";
  for (const EpochRow& r : rows) {
    o << r.epoch << ",";
    if (r.acc_known)
      o << r.train_acc << "," << r.test_acc << ",";
    else
      o << ",,";
    o << r.mean_ce << "," << r.mean_wcc << "," << r.mean_total << "\n";
  }
  return o.str();
}

// Shared reporting tail for the one-process and client-half runs.
RunReport finish_report(const ExperimentConfig& cfg, const PreparedData& p, SplitSystem& sys,
                        const RunTrace& trace, const std::vector<EpochRow>& rows,
                        bool has_server_side, bool write_files, Clock::time_point t_start,
                        double train_s) {
  namespace fs = std::filesystem;
  const std::uint64_t cfg_hash = config_hash(cfg);
  const auto t_attacks = Clock::now();

  ordered_json doc;
  doc["config"] = ordered_json{{"hash", hex_u64(cfg_hash)},
                               {"seed", cfg.seed},
                               {"text", serialize_config(cfg)}};
  doc["dataset"] = ordered_json{
      {"name", cfg.dataset},
      {"train_samples", p.train.size()},
      {"test_samples", p.test.size()},
      {"classes", p.train.classes},
      {"image", {p.train.x.shape[1], p.train.x.shape[2], p.train.x.shape[3]}},
      {"train_hash", hex_u64(p.train.content_hash())},
      {"test_hash", hex_u64(p.test.content_hash())}};

  const SplitSpec& spec = p.spec;
  ClientParams& cp = sys.client(0).params();
  std::size_t client_params = cp.f.param_count() + cp.h.param_count() +
                              cp.encoder.param_count();
  std::size_t server_params = sys.server().backbone().param_count() +
                              sys.server().liftback().net.param_count() +
                              sys.server().decoder_net().param_count();
  doc["model"] = ordered_json{
      {"cut", {spec.cut_c, spec.cut_h, spec.cut_w}},
      {"d", spec.d},
      {"wire_dim", spec.wire_dim},
      {"compression_ratio", static_cast<double>(spec.d) / static_cast<double>(spec.wire_dim)},
      {"bottleneck", cfg.bottleneck},
      {"mode", cfg.mode},
      {"lambda", cfg.lambda},
      {"client_params", client_params},
      {"server_params", server_params}};

  ordered_json mal = ordered_json::array();
  for (std::size_t id : p.malicious_ids) mal.push_back(id);
  doc["partition"] = ordered_json{{"alpha", cfg.alpha},
                                  {"shard_sizes", p.shard_sizes},
                                  {"malicious_clients", std::move(mal)}};

  doc["epochs"] = epochs_json(rows);

  ordered_json final_j;
  const bool acc_known = !rows.empty() && rows.back().acc_known;
  final_j["train_accuracy"] =
      acc_known ? ordered_json(rows.back().train_acc) : ordered_json(nullptr);
  final_j["test_accuracy"] =
      acc_known ? ordered_json(rows.back().test_acc) : ordered_json(nullptr);
  if (!p.malicious_ids.empty() && has_server_side)
    final_j["attack_success_rate"] = attack_success_rate(sys, p.test, cfg);
  doc["final"] = std::move(final_j);

  const CommAccount closed =
      comm_closed_form(spec.wire_dim, p.train.size(), cfg.rounds);
  const CommAccount traced = comm_from_trace(trace, p.train.size(), cfg.rounds);
  doc["comm"] = ordered_json{{"closed_form", comm_json(closed)},
                             {"traced", comm_json(traced)},
                             {"match", closed.total_bytes == traced.total_bytes}};

  doc["trace_summary"] = trace_summary_json(trace);

  if (!p.malicious_ids.empty() && has_server_side && cfg.clients >= 3) {
    std::vector<std::vector<double>> vecs;
    for (const auto& [cid, rm] : sys.server().u_means()) {
      (void)cid;
      vecs.push_back(rm.mean());
    }
    std::vector<bool> truth(p.malicious.begin(), p.malicious.end());
    const DetectionReport det = mad_z_detect(vecs, &truth);
    ordered_json flagged = ordered_json::array();
    for (std::size_t i = 0; i < det.flagged.size(); ++i)
      if (det.flagged[i]) flagged.push_back(i);
    doc["detection"] = ordered_json{{"signal", "mean_backbone_output"},
                                    {"scores", det.scores},
                                    {"zscores", det.zscores},
                                    {"flagged", std::move(flagged)},
                                    {"f1", det.f1}};
  }

  const ProjectionBasis* basis =
      sys.client(0).basis() ? &*sys.client(0).basis() : nullptr;
  ReconReport decoder_rep;
  bool have_decoder = false;
  if (cfg.attack == "decoder" || cfg.attack == "both") {
    const std::size_t n_vic = std::min(cfg.attack_victims, p.test.size());
    std::vector<std::size_t> vic(n_vic);
    std::iota(vic.begin(), vic.end(), std::size_t{0});
    Tensor x_vic = gather_rows(p.test.x, vic);
    Tensor z_aux = collect_payloads(sys.client(0), p.train.x);
    Tensor z_vic = collect_payloads(sys.client(0), x_vic);
    DecoderAttackConfig dcfg;
    dcfg.hidden = cfg.attack_hidden;
    dcfg.epochs = cfg.attack_epochs;
    dcfg.seed = sub_seed(cfg.seed, "attack/decoder");
    decoder_rep = decoder_inversion(z_aux, channel0(p.train.x), z_vic, channel0(x_vic),
                                    basis, dcfg);
    have_decoder = true;
    ordered_json aj = recon_json(decoder_rep);
    aj["train_mse"] = decoder_rep.train_mse;
    doc["attacks"]["decoder"] = std::move(aj);
  }
  if (cfg.attack == "gradmatch" || cfg.attack == "both") {
    std::vector<std::size_t> one{0};
    Tensor x0 = gather_rows(p.test.x, one);
    Tensor target = sys.client(0).encode_eval(x0);
    RngStream rng(sub_seed(cfg.seed, "attack/clone"));
    Network clone = make_head(spec, rng);
    if (spec.bottleneck == BottleneckKind::Learned1x1) {
      // The attacker rebuilds the client's trainable encoder from the known
      // architecture; its weights are optimized along with the head clone.
      const std::size_t kch = codec_channels(spec.cut_c, spec.cr);
      clone.layers.push_back(unflatten(spec.cut_c, spec.cut_h, spec.cut_w));
      clone.layers.push_back(conv2d(spec.cut_c, kch, 1, 1, 0, rng));
      clone.layers.push_back(flatten());
    }
    GradMatchConfig gcfg;
    gcfg.iterations = cfg.attack_iterations;
    gcfg.lr = cfg.attack_lr;
    gcfg.adam = true;
    gcfg.optimize_head = true;
    const GradMatchResult gm =
        gradient_match_inversion(clone, basis, target, x0.shape, gcfg);
    Tensor rec = channel0(gm.recon), ref = channel0(x0);
    ReconReport gr = score_reconstructions(std::move(rec), ref);
    ordered_json gj = recon_json(gr);
    gj["fit_mse"] = gm.fit_mse;
    doc["attacks"]["gradmatch"] = std::move(gj);
  }
  const double attack_s = seconds_since(t_attacks);

  RunReport rep;
  rep.determinism_hash = [&doc] {
    const std::string s = doc.dump();
    return fnv1a64(s.data(), s.size());
  }();
  doc["determinism"] = ordered_json{{"report_hash", hex_u64(rep.determinism_hash)}};
  doc["timing"] = ordered_json{{"total_s", seconds_since(t_start)},
                               {"train_s", train_s},
                               {"attack_s", attack_s}};
  rep.doc = std::move(doc);

  if (write_files) {
    fs::create_directories(cfg.out_dir);
    write_text((fs::path(cfg.out_dir) / "report.json").string(), rep.doc.dump(2) + "\n");
    write_text((fs::path(cfg.out_dir) / "metrics.csv").string(), metrics_csv(rows));
    write_trace_jsonl((fs::path(cfg.out_dir) / "trace.jsonl").string(), trace, cfg_hash,
                      spec.wire_dim);
    save_session_checkpoints(cfg, sys);
    if (cfg.dump_images && have_decoder) {
      const std::size_t n_vic = std::min(cfg.attack_victims, p.test.size());
      std::vector<std::size_t> vic(n_vic);
      std::iota(vic.begin(), vic.end(), std::size_t{0});
      dump_recon_images(cfg, decoder_rep, channel0(gather_rows(p.test.x, vic)));
    }
  }
  return rep;
}

}  // namespace

std::string hex_u64(std::uint64_t v) {
  std::ostringstream o;
  o << "0x" << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

RunReport run_experiment(const ExperimentConfig& cfg, bool write_files) {
  const auto t_start = Clock::now();
  PreparedData p = prepare(cfg);

  SessionConfig scfg = to_session_config(cfg);
  scfg.spec = p.spec;
  SplitSystem sys(scfg);

  std::vector<EpochRow> rows;
  std::size_t prev_steps = 0;
  auto hook = [&](std::size_t epoch, const RunTrace& tr) {
    EpochRow row = losses_of_epoch(tr, prev_steps, epoch);
    prev_steps = tr.steps.size();
    row.train_acc = sys.evaluate(p.train.x, p.train.y);
    row.test_acc = sys.evaluate(p.test.x, p.test.y);
    row.acc_known = true;
    rows.push_back(row);
  };

  const Carrier carrier =
      cfg.transport == "tcp" ? Carrier::TcpLoopback : Carrier::Inproc;
  const auto t_train = Clock::now();
  RunTrace trace = sys.run(p.shards, carrier, hook);
  const double train_s = seconds_since(t_train);

  return finish_report(cfg, p, sys, trace, rows, /*has_server_side=*/true, write_files,
                       t_start, train_s);
}

int serve_experiment(const ExperimentConfig& cfg, const std::string& listen_addr) {
  const auto [host, port] = split_addr(listen_addr);
  PreparedData p = prepare(cfg);  // geometry must match the client's exactly
  Optimizer opt = cfg.optimizer == "sgd" ? Optimizer::sgd(cfg.lr) : Optimizer::adam(cfg.lr);
  SplitServer server(p.spec, sub_seed(cfg.seed, "server"), opt);
  TcpListener listener(host, port);
  auto ep = listener.accept();
  serve_connection(server, *ep, cfg.clients);
  return 0;
}

RunReport run_experiment_client(const ExperimentConfig& cfg, const std::string& connect_addr,
                                bool write_files) {
  const auto t_start = Clock::now();
  const auto [host, port] = split_addr(connect_addr);
  PreparedData p = prepare(cfg);

  SessionConfig scfg = to_session_config(cfg);
  scfg.spec = p.spec;
  SplitSystem sys(scfg);

  std::vector<EpochRow> rows;
  std::size_t prev_steps = 0;
  auto hook = [&](std::size_t epoch, const RunTrace& tr) {
    // Accuracy needs the backbone, which lives in the server process; the
    // client half records losses only.
    rows.push_back(losses_of_epoch(tr, prev_steps, epoch));
    prev_steps = tr.steps.size();
  };

  const auto t_train = Clock::now();
  RunTrace trace;
  {
    auto ep = tcp_connect(host, port);
    trace = sys.run_remote(p.shards, *ep, hook);
  }
  const double train_s = seconds_since(t_train);

  return finish_report(cfg, p, sys, trace, rows, /*has_server_side=*/false, write_files,
                       t_start, train_s);
}

nlohmann::ordered_json compare_reports(const std::vector<nlohmann::ordered_json>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare: no reports given");
  const ordered_json& base = reports[0];
  auto axis = [](const ordered_json& r) {
    return std::tuple<std::string, std::size_t, ordered_json>(
        r.at("dataset").at("name").get<std::string>(),
        r.at("dataset").at("classes").get<std::size_t>(), r.at("dataset").at("image"));
  };
  for (const ordered_json& r : reports)
    if (axis(r) != axis(base))
      throw std::invalid_argument("compare: reports disagree on the dataset axis");

  auto opt_double = [](const ordered_json& r,
                       std::initializer_list<const char*> path) -> ordered_json {
    const ordered_json* at = &r;
    for (const char* key : path) {
      auto it = at->find(key);
      if (it == at->end() || it->is_null()) return nullptr;
      at = &*it;
    }
    return *at;
  };
  auto fmt_ratio = [](double ratio) {
    std::ostringstream o;
    o << "\xC3\x97" << std::fixed << std::setprecision(2) << ratio;  // e.g. "×1.27"
    return o.str();
  };

  const ordered_json base_acc = opt_double(base, {"final", "test_accuracy"});
  const ordered_json base_comm = opt_double(base, {"comm", "closed_form", "total_bytes"});
  const ordered_json base_mse = opt_double(base, {"attacks", "decoder", "mean_mse"});

  ordered_json rows = ordered_json::array();
  std::vector<double> deltas, mse_ratios, comm_ratios;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const ordered_json& r = reports[i];
    ordered_json row;
    row["label"] = r.at("config").at("hash").get<std::string>() + "/seed" +
                   std::to_string(r.at("config").at("seed").get<std::uint64_t>());
    row["baseline"] = (i == 0);
    const ordered_json acc = opt_double(r, {"final", "test_accuracy"});
    row["test_accuracy"] = acc;
    if (!acc.is_null() && !base_acc.is_null()) {
      const double d = (acc.get<double>() - base_acc.get<double>()) * 100.0;
      row["delta_pp"] = d;
      deltas.push_back(d);
    } else {
      row["delta_pp"] = nullptr;
    }
    const ordered_json comm = opt_double(r, {"comm", "closed_form", "total_bytes"});
    row["comm_bytes"] = comm;
    if (!comm.is_null() && !base_comm.is_null() && comm.get<double>() > 0) {
      const double ratio = base_comm.get<double>() / comm.get<double>();
      row["comm_ratio"] = ratio;
      comm_ratios.push_back(ratio);
    } else {
      row["comm_ratio"] = nullptr;
    }
    const ordered_json mse = opt_double(r, {"attacks", "decoder", "mean_mse"});
    row["decoder_mse"] = mse;
    if (!mse.is_null() && !base_mse.is_null() && base_mse.get<double>() > 0) {
      const double ratio = mse.get<double>() / base_mse.get<double>();
      row["mse_ratio"] = ratio;
      row["mse_ratio_formatted"] = fmt_ratio(ratio);
      mse_ratios.push_back(ratio);
    } else {
      row["mse_ratio"] = nullptr;
    }
    rows.push_back(std::move(row));
  }

  auto agg = [](const std::vector<double>& v) -> ordered_json {
    if (v.empty()) return nullptr;
    double mn = v[0], mx = v[0], sum = 0;
    for (double d : v) {
      mn = std::min(mn, d);
      mx = std::max(mx, d);
      sum += d;
    }
    return ordered_json{{"mean", sum / static_cast<double>(v.size())}, {"min", mn}, {"max", mx}};
  };
  ordered_json out;
  out["baseline"] = rows.empty() ? ordered_json(nullptr) : rows[0]["label"];
  out["rows"] = std::move(rows);
  out["aggregate"] = ordered_json{{"delta_pp", agg(deltas)},
                                  {"mse_ratio", agg(mse_ratios)},
                                  {"comm_ratio", agg(comm_ratios)}};
  return out;
}

nlohmann::ordered_json inspect_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("inspect: cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  auto parse_line = [&](const std::string& text) {
    try {
      return ordered_json::parse(text);
    } catch (const std::exception& e) {
      throw FormatError("inspect: line " + std::to_string(lineno) + " is not JSON: " +
                        e.what());
    }
  };
  if (!std::getline(f, line)) throw FormatError("inspect: empty trace file");
  ++lineno;
  const ordered_json meta = parse_line(line);
  for (const char* key : {"config_hash", "wire_dim", "setup_frames", "steps"})
    if (!meta.contains(key))
      throw FormatError(std::string("inspect: metadata line lacks \"") + key + "\"");

  const std::array<const char*, 4> expected_order = {"Z_FWD", "U_FWD", "GRAD_U", "GRAD_Z"};
  std::uint64_t steps = 0, setups = 0, total_bytes = 0, cut_payload = 0;
  std::uint64_t checksum_chain = 14695981039346656037ull;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const ordered_json j = parse_line(line);
    auto check_msg = [&](const ordered_json& m, std::size_t header_extra) {
      const std::uint64_t frame = m.at("frame_bytes").get<std::uint64_t>();
      const std::uint64_t payload = m.at("payload_bytes").get<std::uint64_t>();
      if (frame != payload + 25 + header_extra)
        throw FormatError("inspect: line " + std::to_string(lineno) +
                          ": frame/payload byte accounting is off");
      total_bytes += frame;
      const std::string sum = m.at("checksum").get<std::string>();
      checksum_chain = fnv1a64(sum.data(), sum.size(), checksum_chain);
    };
    if (j.contains("msgs")) {
      const ordered_json& msgs = j.at("msgs");
      if (msgs.size() != 4)
        throw FormatError("inspect: line " + std::to_string(lineno) +
                          ": a step must log exactly 4 frames");
      for (std::size_t i = 0; i < 4; ++i) {
        if (msgs[i].at("type").get<std::string>() != expected_order[i])
          throw FormatError("inspect: line " + std::to_string(lineno) +
                            ": frame order must be Z_FWD, U_FWD, GRAD_U, GRAD_Z");
        check_msg(msgs[i], 0);
      }
      cut_payload += msgs[0].at("payload_bytes").get<std::uint64_t>() +
                     msgs[3].at("payload_bytes").get<std::uint64_t>();
      ++steps;
    } else if (j.contains("type")) {
      if (j.at("type").get<std::string>() != "SETUP_R")
        throw FormatError("inspect: line " + std::to_string(lineno) +
                          ": standalone frames must be SETUP_R");
      check_msg(j, 16);
      ++setups;
    } else {
      throw FormatError("inspect: line " + std::to_string(lineno) + ": unrecognized record");
    }
  }
  if (steps != meta.at("steps").get<std::uint64_t>())
    throw FormatError("inspect: step count differs from the metadata line");
  if (setups != meta.at("setup_frames").get<std::uint64_t>())
    throw FormatError("inspect: setup frame count differs from the metadata line");

  return ordered_json{{"config_hash", meta.at("config_hash")},
                      {"wire_dim", meta.at("wire_dim")},
                      {"steps", steps},
                      {"setup_frames", setups},
                      {"total_frame_bytes", total_bytes},
                      {"cut_payload_bytes", cut_payload},
                      {"checksum_chain", hex_u64(checksum_chain)}};
}

}  // namespace osplit
