#include "mdcc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace mdcc {

std::string SimConfig::validate() const {
  const auto n = datacenters.size();
  if (n == 0) return "no data centers";
  if (replicas_per_dc == 0) return "replicas_per_dc must be >= 1";
  if (latency_ms.size() != n) return "latency matrix size does not match data centers";
  for (const auto& row : latency_ms) {
    if (row.size() != n) return "latency matrix is not square";
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (latency_ms[a][a] <= 0) return "intra-DC delay must be positive";
    for (std::size_t b = 0; b < n; ++b) {
      if (latency_ms[a][b] != latency_ms[b][a]) return "latency matrix is not symmetric";
      if (a != b && !(latency_ms[a][a] < latency_ms[a][b])) return "intra-DC delay must be below inter-DC delay";
    }
  }
  if (jitter < 0) return "jitter must be >= 0";
  if (drop_rate < 0 || drop_rate >= 1) return "drop_rate must be in [0, 1)";
  return {};
}

double SimConfig::max_rtt_ms() const {
  double m = 0;
  for (std::uint32_t a = 0; a < dc_count(); ++a) {
    for (std::uint32_t b = 0; b < dc_count(); ++b) m = std::max(m, rtt_ms(a, b));
  }
  return m;
}

// Illustrative round trips between five regions (ms): US-West, US-East,
// Europe, Singapore, Tokyo. Not measured data.
SimConfig SimConfig::five_dc() {
  SimConfig c;
  c.datacenters = {"us-west", "us-east", "eu", "singapore", "tokyo"};
  const double rtt[5][5] = {{1, 80, 140, 180, 120},
                            {80, 1, 90, 230, 160},
                            {140, 90, 1, 170, 240},
                            {180, 230, 170, 1, 70},
                            {120, 160, 240, 70, 1}};
  c.latency_ms.assign(5, std::vector<double>(5));
  for (int a = 0; a < 5; ++a) {
    for (int b = 0; b < 5; ++b) c.latency_ms[a][b] = rtt[a][b] / 2;
  }
  return c;
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  SimConfig c;
  c.datacenters = j.at("datacenters").get<std::vector<std::string>>();
  c.latency_ms = j.at("latency_ms").get<std::vector<std::vector<double>>>();
  c.jitter = j.value("jitter", 0.1);
  c.drop_rate = j.value("drop_rate", 0.0);
  c.seed = j.value("seed", std::uint64_t{1});
  c.replicas_per_dc = j.value("replicas_per_dc", 1u);
  if (auto why = c.validate(); !why.empty()) throw std::invalid_argument("sim config: " + why);
  return c;
}

SimConfig SimConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sim config " + path);
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json SimConfig::to_json() const {
  return {{"datacenters", datacenters}, {"latency_ms", latency_ms}, {"jitter", jitter},
          {"drop_rate", drop_rate},     {"seed", seed},             {"replicas_per_dc", replicas_per_dc}};
}

void Trace::message(SimTime t, NodeId src, NodeId dst, const Message& m) {
  if (!enabled_) return;
  char buf[160];
  const int n = std::snprintf(buf, sizeof buf, "M %lld %u %u %s %016llx %llu", static_cast<long long>(t), src, dst,
                              message_type(m), static_cast<unsigned long long>(digest(m)),
                              static_cast<unsigned long long>(message_txn(m)));
  emit(std::string(buf, static_cast<std::size_t>(n)));
}

void Trace::dropped(SimTime t, NodeId src, NodeId dst, const Message& m) {
  if (!enabled_) return;
  char buf[96];
  const int n = std::snprintf(buf, sizeof buf, "D %lld %u %u %s", static_cast<long long>(t), src, dst, message_type(m));
  emit(std::string(buf, static_cast<std::size_t>(n)));
}

void Trace::event(SimTime t, NodeId node, std::string_view kind, std::string_view args) {
  if (!enabled_) return;
  std::string line = "E " + std::to_string(t) + " " + std::to_string(node) + " ";
  line.append(kind);
  if (!args.empty()) {
    line.push_back(' ');
    line.append(args);
  }
  emit(std::move(line));
}

void Trace::emit(std::string line) {
  if (sink_) sink_(line);
  if (keep_) lines_.push_back(std::move(line));
}

void Trace::write(std::ostream& os) const {
  for (const auto& l : lines_) os << l << '\n';
}

Simulator::Simulator(SimConfig cfg) : cfg_(std::move(cfg)), failed_(cfg_.dc_count(), false), rng_(cfg_.seed) {
  if (auto why = cfg_.validate(); !why.empty()) throw std::invalid_argument("sim config: " + why);
}

void Simulator::add_node(NodeId id, std::uint32_t dc, Endpoint* ep) {
  if (dc >= cfg_.dc_count()) throw std::invalid_argument("node placed in unknown data center");
  if (nodes_.size() <= id) nodes_.resize(id + 1);
  nodes_[id] = NodeInfo{dc, ep, true};
}

SimTime Simulator::mean_delay(std::uint32_t from_dc, std::uint32_t to_dc) const {
  return static_cast<SimTime>(std::llround(cfg_.latency_ms[from_dc][to_dc] * 1000.0));
}

SimTime Simulator::max_rtt() const { return static_cast<SimTime>(std::llround(cfg_.max_rtt_ms() * 1000.0)); }

SimTime Simulator::sample_delay(std::uint32_t from_dc, std::uint32_t to_dc) {
  const double mean = cfg_.latency_ms[from_dc][to_dc] * 1000.0;
  double d = mean;
  if (cfg_.jitter > 0) {
    const double sigma = cfg_.jitter * mean;
    std::normal_distribution<double> dist(mean, sigma);
    do {
      d = dist(rng_);
    } while (std::abs(d - mean) > 2 * sigma);
  }
  return std::max<SimTime>(1, static_cast<SimTime>(std::llround(d)));
}

bool Simulator::suppressed(NodeId src, NodeId dst) const {
  return failed_[nodes_[src].dc] || failed_[nodes_[dst].dc];
}

void Simulator::push(SimTime at, std::variant<Delivery, Timer> what) {
  queue_.push_back(Event{at, seq_++, std::move(what)});
  std::push_heap(queue_.begin(), queue_.end(), Later{});
}

void Simulator::send(NodeId src, NodeId dst, Message m) {
  if (send_hook_) send_hook_(src, dst, m);
  if (!nodes_.at(src).alive) return;
  ++sent_;
  trace_.message(now_, src, dst, m);
  if (suppressed(src, dst) || (filter_ && filter_(src, dst, m))) {
    trace_.dropped(now_, src, dst, m);
    return;
  }
  if (cfg_.drop_rate > 0 && std::uniform_real_distribution<double>(0, 1)(rng_) < cfg_.drop_rate) {
    trace_.dropped(now_, src, dst, m);
    return;
  }
  const SimTime delay = sample_delay(nodes_[src].dc, nodes_.at(dst).dc);
  push(now_ + delay, Delivery{src, dst, std::move(m)});
}

void Simulator::set_timer(NodeId node, SimTime delay, std::function<void()> fn) {
  push(now_ + std::max<SimTime>(0, delay), Timer{node, std::move(fn)});
}

void Simulator::at(SimTime t, std::function<void()> fn) { push(std::max(t, now_), Timer{0, std::move(fn)}); }

void Simulator::fail_datacenter(std::uint32_t dc, SimTime t) {
  at(t, [this, dc] {
    failed_.at(dc) = true;
    trace_.event(now_, 0, "fail", std::to_string(dc));
  });
}

void Simulator::heal_datacenter(std::uint32_t dc, SimTime t) {
  at(t, [this, dc] {
    failed_.at(dc) = false;
    trace_.event(now_, 0, "heal", std::to_string(dc));
  });
}

void Simulator::kill(NodeId id) {
  if (!nodes_.at(id).alive) return;
  nodes_[id].alive = false;
  trace_.event(now_, id, "kill", "");
}

bool Simulator::step() {
  if (queue_.empty()) return false;
  std::pop_heap(queue_.begin(), queue_.end(), Later{});
  Event ev = std::move(queue_.back());
  queue_.pop_back();
  now_ = ev.at;
  if (auto* d = std::get_if<Delivery>(&ev.what)) {
    if (!nodes_[d->dst].alive) return true;
    if (suppressed(d->src, d->dst)) {
      trace_.dropped(now_, d->src, d->dst, d->msg);
      return true;
    }
    ++delivered_;
    nodes_[d->dst].ep->deliver(d->src, d->msg);
    if (delivery_hook_) delivery_hook_();
  } else {
    auto& t = std::get<Timer>(ev.what);
    if (t.node != 0 && !nodes_[t.node].alive) return true;
    t.fn();
  }
  return true;
}

void Simulator::run_until(SimTime t) {
  while (!queue_.empty() && queue_.front().at <= t) step();
  now_ = std::max(now_, t);
}

}  // namespace mdcc
