#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "osplit/config.hpp"

namespace osplit {

// One finished experiment: the full report document plus the hash that the
// (config, seed) tuple pins down.  The hash covers every field serialized
// before the "determinism" entry — everything except the wall-clock timings.
struct RunReport {
  nlohmann::ordered_json doc;
  std::uint64_t determinism_hash = 0;
};

// Runs the experiment a config describes end to end: data synthesis/loading,
// partitioning, optional poisoning, protocol training over the selected
// carrier, communication accounting, optional detector and attack passes.
// With write_files it also emits report.json, metrics.csv, trace.jsonl,
// checkpoints (and reconstruction images on request) into cfg.out_dir.
RunReport run_experiment(const ExperimentConfig& cfg, bool write_files = true);

// Split-process halves behind the CLI's --listen / --connect flags.  The
// server half owns only the server-side model and answers one connection;
// the client half drives training through the socket.  Client-half reports
// omit accuracy (evaluation needs both halves in one process).
int serve_experiment(const ExperimentConfig& cfg, const std::string& listen_addr);
RunReport run_experiment_client(const ExperimentConfig& cfg, const std::string& connect_addr,
                                bool write_files = true);

// Comparison table: the first report is the baseline; every report is a row
// with accuracy delta (percentage points) and metric ratios vs that baseline,
// plus mean/min/max aggregates.  Reports must share dataset axes.
nlohmann::ordered_json compare_reports(const std::vector<nlohmann::ordered_json>& reports);

// Validates a trace.jsonl file (frame structure, byte accounting) and
// returns its summary.  Throws FormatError on malformed traces.
nlohmann::ordered_json inspect_trace(const std::string& path);

std::string hex_u64(std::uint64_t v);

}  // namespace osplit
