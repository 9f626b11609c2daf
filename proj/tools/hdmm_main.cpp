//
// Copyright 2026 HDMM Contributors.
// SPDX-License-Identifier: Apache-2.0
//
// hdmm: workload-adaptive differentially private query answering.
//   optimize  select a measurement strategy for a workload
//   error     expected-error report (strategy vs Identity and Laplace baselines)
//   run       full select-measure-reconstruct pipeline over a CSV
//   validate  parse and sanity-check inputs

#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hdmm/csv.hpp"
#include "hdmm/error_analysis.hpp"
#include "hdmm/mechanism.hpp"
#include "hdmm/serialization.hpp"

namespace {

using namespace hdmm;

struct Cli {
  std::string workload_path;
  std::string schema_path;
  std::string data_path;
  std::string strategy_path;
  std::string out_path;
  double epsilon = 1.0;
  std::uint64_t seed = 0;
  int restarts = 25;
  std::string operators = "kron,plus,marginals";
  int threads = 0;
};

OperatorSet parse_operators(const std::string& spec) {
  OperatorSet set{false, false, false};
  std::size_t at = 0;
  while (at <= spec.size()) {
    const std::size_t comma = spec.find(',', at);
    const std::string name =
        spec.substr(at, comma == std::string::npos ? comma : comma - at);
    if (name == "kron") {
      set.kron = true;
    } else if (name == "plus") {
      set.plus = true;
    } else if (name == "marginals") {
      set.marginals = true;
    } else if (!name.empty()) {
      throw DomainError("unknown operator '" + name + "'");
    }
    if (comma == std::string::npos) break;
    at = comma + 1;
  }
  if (!set.kron && !set.plus && !set.marginals)
    throw DomainError("operator set must not be empty");
  return set;
}

LogicalWorkload load_workload(const Cli& cli) {
  if (cli.workload_path.empty()) throw DomainError("--workload is required");
  Json j = load_json_file(cli.workload_path);
  if (!cli.schema_path.empty())
    j["schema"] = load_json_file(cli.schema_path);
  return workload_from_json(j);
}

HdmmOptions hdmm_options(const Cli& cli) {
  HdmmOptions o;
  o.threads = cli.threads;
  return o;
}

int cmd_optimize(const Cli& cli) {
  LogicalWorkload w = load_workload(cli);
  HdmmSelection sel = opt_hdmm(w, parse_operators(cli.operators), cli.restarts,
                               cli.seed, hdmm_options(cli));
  ErrorReport report = make_error_report(w, sel.strategy, sel.operator_name,
                                         cli.epsilon, cli.workload_path);
  std::cout << format_error_table(report);
  if (!cli.out_path.empty()) {
    save_json_file(cli.out_path, strategy_to_json(sel.strategy));
    std::cout << "strategy written to " << cli.out_path << "\n";
  }
  return 0;
}

int cmd_error(const Cli& cli) {
  LogicalWorkload w = load_workload(cli);
  std::optional<Strategy> strategy;
  std::string name;
  if (!cli.strategy_path.empty()) {
    strategy = strategy_from_json(load_json_file(cli.strategy_path));
    name = cli.strategy_path;
  } else {
    HdmmSelection sel = opt_hdmm(w, parse_operators(cli.operators), cli.restarts,
                                 cli.seed, hdmm_options(cli));
    strategy = std::move(sel.strategy);
    name = sel.operator_name;
  }
  ErrorReport report =
      make_error_report(w, *strategy, name, cli.epsilon, cli.workload_path);
  std::cout << format_error_table(report);
  if (!cli.out_path.empty()) save_json_file(cli.out_path, error_report_to_json(report));
  return 0;
}

int cmd_run(const Cli& cli) {
  LogicalWorkload w = load_workload(cli);
  if (cli.data_path.empty()) throw DomainError("--data is required for run");
  std::ifstream in(cli.data_path);
  if (!in) throw IoError("cannot open '" + cli.data_path + "'");
  DataVector data = ingest_csv(w.schema, in);
  PrivateAnswer ans = run_hdmm(w, data, cli.epsilon,
                               parse_operators(cli.operators), cli.restarts,
                               cli.seed, hdmm_options(cli));
  Json j = private_answer_to_json(ans, w);
  if (cli.out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    save_json_file(cli.out_path, j);
    std::cout << "answers written to " << cli.out_path << "\n";
  }
  return 0;
}

int cmd_validate(const Cli& cli) {
  LogicalWorkload w = load_workload(cli);
  std::cout << "workload ok: " << w.terms.size() << " terms, "
            << w.query_count() << " queries, domain " << w.schema.domain_size()
            << " over " << w.schema.dimensions() << " attributes\n";
  if (!cli.data_path.empty()) {
    std::ifstream in(cli.data_path);
    if (!in) throw IoError("cannot open '" + cli.data_path + "'");
    DataVector data = ingest_csv(w.schema, in);
    std::cout << "data ok: " << data.counts.sum() << " records\n";
  }
  if (!cli.strategy_path.empty()) {
    Strategy s = strategy_from_json(load_json_file(cli.strategy_path));
    std::cout << "strategy ok: " << s.rows() << " measurement rows\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"high-dimensional matrix mechanism"};
  app.require_subcommand(1);
  Cli cli;

  auto add_common = [&](CLI::App* cmd, bool with_eps) {
    cmd->add_option("--workload", cli.workload_path, "workload JSON file");
    cmd->add_option("--schema", cli.schema_path,
                    "schema JSON file (overrides the workload's schema)");
    cmd->add_option("--seed", cli.seed, "seed for all randomness");
    cmd->add_option("--restarts", cli.restarts, "optimizer restarts")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--operators", cli.operators,
                    "comma list of kron,plus,marginals");
    cmd->add_option("--threads", cli.threads,
                    "restart/trial parallelism (0 = all cores)");
    cmd->add_option("--out", cli.out_path, "output file");
    if (with_eps)
      cmd->add_option("--epsilon", cli.epsilon, "privacy budget")
          ->check(CLI::PositiveNumber);
  };

  auto* optimize = app.add_subcommand("optimize", "select a strategy");
  add_common(optimize, true);
  auto* error = app.add_subcommand("error", "expected-error report");
  add_common(error, true);
  error->add_option("--strategy", cli.strategy_path, "strategy JSON file");
  auto* run = app.add_subcommand("run", "private answering pipeline");
  add_common(run, true);
  run->add_option("--data", cli.data_path, "CSV data file");
  auto* validate = app.add_subcommand("validate", "check inputs");
  add_common(validate, false);
  validate->add_option("--data", cli.data_path, "CSV data file");
  validate->add_option("--strategy", cli.strategy_path, "strategy JSON file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (optimize->parsed()) return cmd_optimize(cli);
    if (error->parsed()) return cmd_error(cli);
    if (run->parsed()) return cmd_run(cli);
    if (validate->parsed()) return cmd_validate(cli);
  } catch (const hdmm::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const hdmm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
