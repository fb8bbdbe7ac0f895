// Runs one workload against one protocol over the simulated WAN and writes
// per-transaction CSV. `mdcc_bench csv --from-trace t.txt` recomputes the
// same CSV from a saved trace.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mdcc/bench.hpp"

namespace {

int csv_from_trace(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) {
    std::cerr << "cannot open " << in_path << "\n";
    return 2;
  }
  mdcc::TraceMetrics m;
  for (std::string line; std::getline(in, line);) m.consume(line);
  if (out_path.empty() || out_path == "-") {
    mdcc::write_csv(std::cout, m.records());
  } else {
    std::ofstream out(out_path);
    mdcc::write_csv(out, m.records());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MDCC protocol simulator benchmark"};
  app.require_subcommand(0, 1);

  std::string workload = "micro-purchase", protocol = "mdcc-fast-comm", sim_config, failure, out, trace_path;
  std::string cdf_path, series_path;
  std::uint32_t clients = 100, items = 10000;
  double duration = 10;
  std::uint64_t seed = 1;
  app.add_option("--workload", workload, "micro-purchase | tpcw-lite");
  app.add_option("--protocol", protocol, "mdcc-classic | mdcc-fast-noncomm | mdcc-fast-comm | 2pc | qw3 | qw4");
  app.add_option("--clients", clients)->check(CLI::PositiveNumber);
  app.add_option("--items", items)->check(CLI::PositiveNumber);
  app.add_option("--duration", duration, "simulated seconds")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed);
  app.add_option("--sim-config", sim_config, "latency matrix JSON (default: built-in five data centers)");
  app.add_option("--failure", failure, "dc:fail_at:heal_at (seconds)");
  app.add_option("--out", out, "per-transaction CSV");
  app.add_option("--trace", trace_path, "write the event trace");
  app.add_option("--cdf", cdf_path, "write the committed-latency CDF");
  app.add_option("--series", series_path, "write the per-second series (needs --failure)");

  auto* csv = app.add_subcommand("csv", "recompute the CSV from a saved trace");
  std::string from_trace, csv_out;
  csv->add_option("--from-trace", from_trace)->required();
  csv->add_option("--out", csv_out);

  CLI11_PARSE(app, argc, argv);
  if (csv->parsed()) return csv_from_trace(from_trace, csv_out);

  try {
    const auto cfg = sim_config.empty() ? mdcc::SimConfig::five_dc() : mdcc::SimConfig::load(sim_config);
    mdcc::WorkloadSpec spec;
    spec.kind = mdcc::parse_workload(workload);
    spec.protocol = mdcc::parse_protocol(protocol);
    spec.clients = clients;
    spec.items = items;
    spec.duration_s = duration;
    spec.seed = seed;
    spec.keep_trace = !trace_path.empty();
    if (!failure.empty()) spec.failure = mdcc::parse_failure(failure, cfg);

    const auto r = mdcc::run_workload(spec, cfg);
    if (!out.empty()) {
      std::ofstream os(out);
      mdcc::write_csv(os, r.records);
    }
    if (!trace_path.empty()) {
      std::ofstream os(trace_path);
      for (const auto& l : r.trace) os << l << '\n';
    }
    if (!cdf_path.empty()) {
      std::ofstream os(cdf_path);
      os << "latency_ms,fraction\n";
      for (const auto& [ms, f] : mdcc::latency_cdf(r.records)) os << ms << ',' << f << '\n';
    }
    if (spec.failure) {
      const auto s = mdcc::failure_series(r.records, *spec.failure, duration);
      std::cout << "failure: pre mean " << s.pre_mean_ms << " ms var " << s.pre_var << ", post mean "
                << s.post_mean_ms << " ms var " << s.post_var << ", longest gap " << s.max_gap_s << " s\n";
      if (!series_path.empty()) {
        std::ofstream os(series_path);
        os << "second,commits,mean_ms\n";
        for (const auto& b : s.buckets) os << b.second << ',' << b.commits << ',' << b.mean_ms << '\n';
      }
    }
    std::cout << protocol << " " << workload << ": committed " << r.committed << ", aborted " << r.aborted
              << ", throughput " << r.throughput << " txn/s, latency p50 " << r.p50_ms << " p90 " << r.p90_ms
              << " p99 " << r.p99_ms << " ms, recoveries " << r.recoveries << "\n";
    if (r.counts.lost_updates > 0) std::cout << "lost updates (quorum writes): " << r.counts.lost_updates << "\n";
    for (const auto& v : r.violations) std::cerr << "VIOLATION " << v << "\n";
    return r.violations.empty() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
