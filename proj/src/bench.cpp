#include "mdcc/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mdcc {

const char* to_string(WorkloadKind k) {
  return k == WorkloadKind::micro_purchase ? "micro-purchase" : "tpcw-lite";
}

WorkloadKind parse_workload(const std::string& s) {
  if (s == "micro-purchase") return WorkloadKind::micro_purchase;
  if (s == "tpcw-lite" || s == "tpcw-lite-ordering") return WorkloadKind::tpcw_lite;
  throw std::invalid_argument("unknown workload '" + s + "'");
}

FailureScript parse_failure(const std::string& s, const SimConfig& cfg) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw std::invalid_argument("--failure expects dc:fail_at:heal_at");
  FailureScript f;
  auto it = std::find(cfg.datacenters.begin(), cfg.datacenters.end(), parts[0]);
  if (it != cfg.datacenters.end()) {
    f.dc = static_cast<std::uint32_t>(it - cfg.datacenters.begin());
  } else {
    f.dc = static_cast<std::uint32_t>(std::stoul(parts[0]));
    if (f.dc >= cfg.dc_count()) throw std::invalid_argument("--failure: no data center " + parts[0]);
  }
  f.fail_at_s = std::stod(parts[1]);
  f.heal_at_s = std::stod(parts[2]);
  return f;
}

// --- metrics from the trace -----------------------------------------------------

void TraceMetrics::consume(const std::string& line) {
  if (line.size() < 2) return;
  if (line[0] == 'M') {
    const auto pos = line.rfind(' ');
    const TxnId txn = std::stoull(line.substr(pos + 1));
    if (txn != 0) ++txns_[txn].msgs;
    return;
  }
  if (line[0] != 'E') return;
  std::istringstream is(line);
  char tag;
  SimTime t;
  NodeId node;
  std::string kind;
  is >> tag >> t >> node >> kind;
  if (kind == "begin") {
    TxnId txn;
    std::string proto;
    is >> txn >> proto;
    auto& r = txns_[txn];
    r.txn = txn;
    r.protocol = proto;
    r.start_us = t;
  } else if (kind == "decide") {
    TxnId txn;
    std::string outcome, mode;
    std::uint64_t conflicts;
    is >> txn >> outcome >> mode >> conflicts;
    auto& r = txns_[txn];
    r.decide_us = t;
    r.outcome = outcome;
    r.mode = mode;
    r.conflicts = conflicts;
  }
}

std::vector<TxnRecord> TraceMetrics::records() const {
  std::vector<TxnRecord> out;
  for (const auto& [txn, r] : txns_) {
    if (r.decide_us >= 0 && r.txn != 0) out.push_back(r);
  }
  return out;
}

double percentile(std::vector<double> xs, double p) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(xs.size()))) - 1;
  return xs[std::min(idx, xs.size() - 1)];
}

void summarize(MetricsReport& r, double duration_s) {
  const auto end = static_cast<SimTime>(duration_s * 1e6);
  std::vector<double> lat;
  r.committed = r.aborted = 0;
  std::uint64_t in_window = 0;
  for (const auto& t : r.records) {
    if (t.committed()) {
      ++r.committed;
      lat.push_back(t.latency_ms());
      if (t.decide_us <= end) ++in_window;
    } else {
      ++r.aborted;
    }
  }
  r.throughput = duration_s > 0 ? static_cast<double>(in_window) / duration_s : 0;
  r.p50_ms = percentile(lat, 0.5);
  r.p90_ms = percentile(lat, 0.9);
  r.p99_ms = percentile(lat, 0.99);
  r.mean_ms = lat.empty() ? 0 : std::accumulate(lat.begin(), lat.end(), 0.0) / static_cast<double>(lat.size());
}

void write_csv(std::ostream& os, const std::vector<TxnRecord>& records) {
  os << "txn_id,protocol,start_us,decide_us,outcome,mode,msgs,conflicts\n";
  for (const auto& r : records) {
    os << r.txn << ',' << r.protocol << ',' << r.start_us << ',' << r.decide_us << ',' << r.outcome << ',' << r.mode
       << ',' << r.msgs << ',' << r.conflicts << '\n';
  }
}

std::vector<std::pair<double, double>> latency_cdf(const std::vector<TxnRecord>& records) {
  std::vector<double> lat;
  for (const auto& r : records) {
    if (r.committed()) lat.push_back(r.latency_ms());
  }
  std::sort(lat.begin(), lat.end());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    if (i + 1 < lat.size() && lat[i + 1] == lat[i]) continue;
    out.emplace_back(lat[i], static_cast<double>(i + 1) / static_cast<double>(lat.size()));
  }
  return out;
}

namespace {

std::pair<double, double> mean_var(const std::vector<double>& xs) {
  if (xs.empty()) return {0, 0};
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, v / static_cast<double>(xs.size())};
}

}  // namespace

FailureSeries failure_series(const std::vector<TxnRecord>& records, const FailureScript& f, double duration_s) {
  FailureSeries s;
  const auto secs = static_cast<std::uint32_t>(std::ceil(duration_s));
  s.buckets.resize(secs);
  for (std::uint32_t i = 0; i < secs; ++i) s.buckets[i].second = i;
  const auto fail_us = static_cast<SimTime>(f.fail_at_s * 1e6);
  const auto heal_us = f.heal_at_s > f.fail_at_s ? static_cast<SimTime>(f.heal_at_s * 1e6) : INT64_MAX;
  std::vector<double> pre, post;
  std::vector<SimTime> times;
  for (const auto& r : records) {
    if (!r.committed()) continue;
    const auto b = static_cast<std::size_t>(r.decide_us / 1000000);
    if (b >= s.buckets.size()) continue;
    times.push_back(r.decide_us);
    auto& bk = s.buckets[b];
    bk.mean_ms += (r.latency_ms() - bk.mean_ms) / static_cast<double>(++bk.commits);
    // Transactions straddling the failure belong to neither side.
    if (r.decide_us < fail_us) {
      pre.push_back(r.latency_ms());
    } else if (r.start_us >= fail_us && r.decide_us < heal_us) {
      post.push_back(r.latency_ms());
    }
  }
  std::tie(s.pre_mean_ms, s.pre_var) = mean_var(pre);
  std::tie(s.post_mean_ms, s.post_var) = mean_var(post);
  std::sort(times.begin(), times.end());
  SimTime last = 0;
  for (auto t : times) {
    s.max_gap_s = std::max(s.max_gap_s, static_cast<double>(t - last) / 1e6);
    last = t;
  }
  const auto end = static_cast<SimTime>(duration_s * 1e6);
  s.max_gap_s = std::max(s.max_gap_s, static_cast<double>(end - last) / 1e6);
  return s;
}

// --- workload driver ------------------------------------------------------------

namespace {

std::string item_key(std::uint32_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "item:%05u", i);
  return buf;
}

class Driver {
 public:
  Driver(Cluster& c, const WorkloadSpec& spec)
      : c_(c), spec_(spec), rng_(spec.seed * 0x9e3779b97f4a7c15ULL + 7), end_(static_cast<SimTime>(spec.duration_s * 1e6)),
        seq_(c.client_count(), 0) {}

  void start() {
    for (std::size_t i = 0; i < c_.client_count(); ++i) next(i);
  }
  std::uint64_t app_aborts() const { return app_aborts_; }

 private:
  struct Plan {
    std::size_t client = 0;
    std::vector<std::pair<Key, std::int64_t>> items;  // key, decrement
    std::map<Key, ReadResult> reads;
    std::size_t outstanding = 0;
    bool failed = false;
  };

  bool comm() const { return spec_.protocol == Protocol::mdcc_fast_comm; }
  bool plain() const { return !is_mdcc(spec_.protocol); }
  AppServer& app(std::size_t i) { return c_.client(i); }

  void next(std::size_t i) {
    if (c_.sim().now() >= end_) return;
    auto plan = std::make_shared<Plan>();
    plan->client = i;
    const auto k = std::uniform_int_distribution<std::uint32_t>(1, std::min(spec_.max_items, spec_.items))(rng_);
    std::set<std::uint32_t> picked;
    while (picked.size() < k) picked.insert(std::uniform_int_distribution<std::uint32_t>(0, spec_.items - 1)(rng_));
    for (auto idx : picked) {
      plan->items.emplace_back(item_key(idx), std::uniform_int_distribution<std::int64_t>(1, 3)(rng_));
    }
    plan->outstanding = plan->items.size();
    for (const auto& [key, d] : plan->items) {
      auto cb = [this, plan, key](const ReadResult& r) {
        plan->reads[key] = r;
        plan->failed = plan->failed || !r.ok || !r.found;
        if (--plan->outstanding == 0) reads_done(plan);
      };
      if (plain()) {
        app(i).read_plain(key, cb);
      } else {
        app(i).read_local(key, cb);
      }
    }
  }

  void later(std::size_t i, SimTime delay) {
    c_.sim().set_timer(app(i).id(), delay, [this, i] { next(i); });
  }

  void reads_done(const std::shared_ptr<Plan>& plan) {
    const auto i = plan->client;
    if (plan->failed) {
      later(i, c_.sim().max_rtt());
      return;
    }
    std::vector<TxnUpdate> ups;
    for (const auto& [key, d] : plan->items) {
      const auto& r = plan->reads.at(key);
      if (comm()) {
        CommutativeUpdate cu;
        cu.deltas["stock"] = -d;
        cu.constraints["stock"] = Constraint{0, std::nullopt};
        cu.round = r.round;
        ups.push_back({key, cu});
        continue;
      }
      const auto stock = r.value.get("stock");
      if (stock < d) {
        ++app_aborts_;
        later(i, 1000);
        return;
      }
      Value w = r.value;
      w.attrs["stock"] = stock - d;
      ups.push_back({key, PhysicalUpdate{r.version, w}});
    }
    if (spec_.kind == WorkloadKind::tpcw_lite) {
      const auto n = seq_[i]++;
      const std::string order = "order:" + std::to_string(app(i).id()) + ":" + std::to_string(n);
      ups.push_back({order, PhysicalUpdate{std::nullopt, Value{{{"lines", static_cast<std::int64_t>(plan->items.size())}}, false}}});
      for (std::size_t l = 0; l < plan->items.size(); ++l) {
        ups.push_back({order + ":" + std::to_string(l),
                       PhysicalUpdate{std::nullopt, Value{{{"qty", plan->items[l].second}}, false}}});
      }
    }
    Stages st;
    st.finally = [this, i](TxnId, bool, bool) {
      // Defer so the next transaction starts outside the delivery callback.
      c_.sim().set_timer(app(i).id(), 0, [this, i] { next(i); });
    };
    app(i).commit(std::move(ups), 0, std::move(st));
  }

  Cluster& c_;
  const WorkloadSpec& spec_;
  std::mt19937_64 rng_;
  SimTime end_;
  std::vector<std::uint64_t> seq_;
  std::uint64_t app_aborts_ = 0;
};

}  // namespace

MetricsReport run_workload(const WorkloadSpec& spec, const SimConfig& simcfg) {
  if (spec.items < 1 || spec.clients < 1) throw std::invalid_argument("items and clients must be at least 1");
  SimConfig cfg = simcfg;
  cfg.seed = spec.seed;
  ProtocolParams params;
  params.protocol = spec.protocol;
  params.gamma = spec.gamma;
  params.demarcation = spec.demarcation;
  if (spec.protocol == Protocol::mdcc_fast_comm) {
    params.kind_of = [](const Key& k) {
      return k.rfind("item:", 0) == 0 ? RecordKind::commutative : RecordKind::physical;
    };
  }
  Cluster c(cfg, params, spec.clients, spec.client_dc);
  TraceMetrics metrics;
  auto& trace = c.sim().trace();
  trace.enable(true);
  trace.keep(spec.keep_trace);
  trace.set_sink([&metrics](const std::string& l) { metrics.consume(l); });

  for (std::uint32_t i = 0; i < spec.items; ++i) c.preload(item_key(i), Value{{{"stock", spec.initial_stock}}, false});
  if (spec.failure) {
    const auto& f = *spec.failure;
    c.sim().fail_datacenter(f.dc, static_cast<SimTime>(f.fail_at_s * 1e6));
    if (f.heal_at_s > f.fail_at_s) c.sim().heal_datacenter(f.dc, static_cast<SimTime>(f.heal_at_s * 1e6));
  }
  c.start();
  if (spec.setup) spec.setup(c);
  Driver d(c, spec);
  d.start();
  const auto end = static_cast<SimTime>(spec.duration_s * 1e6);
  c.sim().run_until(end + 10 * c.sim().max_rtt());
  c.obs().finish();
  trace.set_sink(nullptr);

  MetricsReport r;
  r.records = metrics.records();
  summarize(r, spec.duration_s);
  r.counts = c.obs().counts();
  r.violations = c.obs().violations();
  if (spec.keep_trace) r.trace = trace.lines();
  for (std::size_t i = 0; i < c.storage_count(); ++i) r.recoveries += c.storage(i).recoveries();
  r.app_aborts = d.app_aborts();
  return r;
}

}  // namespace mdcc
