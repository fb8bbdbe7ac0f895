#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdcc/cluster.hpp"

namespace mdcc {

enum class WorkloadKind : std::uint8_t { micro_purchase, tpcw_lite };

const char* to_string(WorkloadKind k);
WorkloadKind parse_workload(const std::string& s);

struct FailureScript {
  std::uint32_t dc = 0;
  double fail_at_s = 0;
  double heal_at_s = 0;  // <= fail_at_s: never heals
};

// Parses "dc:fail_at:heal_at"; dc is an index or a data-center name.
FailureScript parse_failure(const std::string& s, const SimConfig& cfg);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::micro_purchase;
  Protocol protocol = Protocol::mdcc_fast_comm;
  std::uint32_t items = 10000;
  std::uint32_t clients = 1;
  double duration_s = 10;
  std::uint64_t seed = 1;
  std::optional<FailureScript> failure;
  std::uint32_t client_dc = 0;
  std::int64_t initial_stock = 100;
  std::uint32_t max_items = 5;  // items per purchase: uniform in [1, max_items]
  std::uint32_t gamma = 10;
  bool demarcation = true;
  bool keep_trace = false;  // retain trace lines in the report
  // Optional hook for tests: called once the cluster is built.
  std::function<void(Cluster&)> setup;
};

struct TxnRecord {
  TxnId txn = 0;
  std::string protocol;
  SimTime start_us = 0;
  SimTime decide_us = -1;
  std::string outcome;
  std::string mode;
  std::uint64_t msgs = 0;
  std::uint64_t conflicts = 0;

  double latency_ms() const { return static_cast<double>(decide_us - start_us) / 1000.0; }
  bool committed() const { return outcome == "commit"; }
};

// Rebuilds per-transaction records from trace lines, one line at a time.
class TraceMetrics {
 public:
  void consume(const std::string& line);
  // Decided transactions, by transaction id.
  std::vector<TxnRecord> records() const;

 private:
  std::map<TxnId, TxnRecord> txns_;
};

struct MetricsReport {
  std::vector<TxnRecord> records;
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;
  double throughput = 0;  // commits per simulated second within the run window
  double p50_ms = 0, p90_ms = 0, p99_ms = 0, mean_ms = 0;
  Observer::Counts counts;
  std::vector<std::string> violations;
  std::vector<std::string> trace;
  std::uint64_t recoveries = 0;
  std::uint64_t app_aborts = 0;  // purchases dropped before proposing (stock too low)
};

MetricsReport run_workload(const WorkloadSpec& spec, const SimConfig& sim);

// Fills the aggregate fields of `r` from `r.records`.
void summarize(MetricsReport& r, double duration_s);

void write_csv(std::ostream& os, const std::vector<TxnRecord>& records);
// (latency_ms, cumulative fraction) over committed transactions.
std::vector<std::pair<double, double>> latency_cdf(const std::vector<TxnRecord>& records);
double percentile(std::vector<double> xs, double p);

struct FailureSeries {
  struct Bucket {
    std::uint32_t second = 0;
    std::uint64_t commits = 0;
    double mean_ms = 0;
  };
  std::vector<Bucket> buckets;
  double pre_mean_ms = 0, post_mean_ms = 0;
  double pre_var = 0, post_var = 0;
  double max_gap_s = 0;  // longest stretch without a commit
};

FailureSeries failure_series(const std::vector<TxnRecord>& records, const FailureScript& f, double duration_s);

}  // namespace mdcc
