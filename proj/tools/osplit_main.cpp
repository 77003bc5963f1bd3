#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "osplit/config.hpp"
#include "osplit/errors.hpp"
#include "osplit/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string transport;
  std::string listen_addr;
  std::string connect_addr;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "experiment file (key = value lines)");
  cmd->add_option("--seed", o.seed, "master seed override")->each([&o](const std::string&) {
    o.seed_set = true;
  });
  cmd->add_option("--out", o.out_dir, "output directory override");
  cmd->add_option("--transport", o.transport, "inproc or tcp (single-process run)");
  cmd->add_option("--listen", o.listen_addr, "serve the model half on host:port");
  cmd->add_option("--connect", o.connect_addr, "drive training against host:port");
}

osplit::ExperimentConfig materialize(const CommonOpts& o) {
  osplit::ExperimentConfig cfg =
      o.config_path.empty() ? osplit::parse_config("") : osplit::load_config(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (!o.transport.empty()) {
    if (o.transport != "inproc" && o.transport != "tcp")
      throw osplit::ConfigError("--transport must be inproc or tcp");
    cfg.transport = o.transport;
  }
  return cfg;
}

int run_cmd(const CommonOpts& o, const std::string& force_attack) {
  osplit::ExperimentConfig cfg = materialize(o);
  if (!force_attack.empty()) cfg.attack = force_attack;
  if (!o.listen_addr.empty() && !o.connect_addr.empty())
    throw osplit::ConfigError("--listen and --connect are mutually exclusive");

  if (!o.listen_addr.empty()) {
    std::cout << "serving one session on " << o.listen_addr << "\n";
    return osplit::serve_experiment(cfg, o.listen_addr);
  }

  osplit::RunReport rep;
  if (!o.connect_addr.empty())
    rep = osplit::run_experiment_client(cfg, o.connect_addr);
  else
    rep = osplit::run_experiment(cfg);

  const auto& final_j = rep.doc.at("final");
  std::cout << "report: " << cfg.out_dir << "/report.json\n";
  if (!final_j.at("test_accuracy").is_null())
    std::cout << "test_accuracy: " << final_j.at("test_accuracy").get<double>() << "\n";
  std::cout << "comm_bytes: "
            << rep.doc.at("comm").at("closed_form").at("total_bytes").get<std::uint64_t>()
            << "\n";
  std::cout << "report_hash: "
            << rep.doc.at("determinism").at("report_hash").get<std::string>() << "\n";
  return kExitOk;
}

nlohmann::ordered_json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw osplit::FormatError("cannot open " + path);
  return nlohmann::ordered_json::parse(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"split-learning workbench: compressed-cut training, wire traces, "
               "inversion attacks, and report tooling"};
  app.require_subcommand(1);

  CommonOpts run_opts, attack_opts;
  std::string attack_kind = "both";
  std::vector<std::string> compare_paths;
  std::string compare_out;
  std::string trace_path;

  CLI::App* c_run = app.add_subcommand("run", "train per the experiment file");
  add_common(c_run, run_opts);

  CLI::App* c_attack =
      app.add_subcommand("attack", "train, then force the inversion-attack passes");
  add_common(c_attack, attack_opts);
  c_attack->add_option("--kind", attack_kind, "decoder, gradmatch, or both")
      ->check(CLI::IsMember({"decoder", "gradmatch", "both"}));

  CLI::App* c_compare =
      app.add_subcommand("compare", "tabulate reports against the first (baseline)");
  c_compare->add_option("reports", compare_paths, "report.json paths")->required();
  c_compare->add_option("--out", compare_out, "write the table here instead of stdout");

  CLI::App* c_inspect =
      app.add_subcommand("inspect-trace", "validate a trace.jsonl and summarize it");
  c_inspect->add_option("trace", trace_path, "trace.jsonl path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (c_run->parsed()) return run_cmd(run_opts, "");
    if (c_attack->parsed()) return run_cmd(attack_opts, attack_kind);
    if (c_compare->parsed()) {
      std::vector<nlohmann::ordered_json> reports;
      for (const std::string& p : compare_paths) reports.push_back(load_json(p));
      const nlohmann::ordered_json table = osplit::compare_reports(reports);
      if (compare_out.empty()) {
        std::cout << table.dump(2) << "\n";
      } else {
        std::ofstream f(compare_out);
        f << table.dump(2) << "\n";
      }
      return kExitOk;
    }
    if (c_inspect->parsed()) {
      std::cout << osplit::inspect_trace(trace_path).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const osplit::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
