#pragma once

#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "mdcc/messages.hpp"

namespace mdcc {

struct SimConfig {
  std::vector<std::string> datacenters;
  // Mean one-way delay in milliseconds; the diagonal is the intra-DC delay.
  std::vector<std::vector<double>> latency_ms;
  double jitter = 0.1;  // stddev as a fraction of the mean, truncated at 2 sigma
  double drop_rate = 0.0;
  std::uint64_t seed = 1;
  std::uint32_t replicas_per_dc = 1;

  std::uint32_t dc_count() const { return static_cast<std::uint32_t>(datacenters.size()); }
  // Empty when valid, otherwise the first problem found.
  std::string validate() const;
  double rtt_ms(std::uint32_t a, std::uint32_t b) const { return latency_ms[a][b] + latency_ms[b][a]; }
  double max_rtt_ms() const;

  static SimConfig five_dc();
  static SimConfig from_json(const nlohmann::json& j);
  static SimConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

// Line-delimited run record. Message lines are
//   M <time_us> <src> <dst> <type> <digest> <txn>
// and protocol events are
//   E <time_us> <node> <kind> <args...>
class Trace {
 public:
  void enable(bool on) { enabled_ = on; }
  bool enabled() const { return enabled_; }
  void message(SimTime t, NodeId src, NodeId dst, const Message& m);
  void dropped(SimTime t, NodeId src, NodeId dst, const Message& m);
  void event(SimTime t, NodeId node, std::string_view kind, std::string_view args);
  const std::vector<std::string>& lines() const { return lines_; }
  void write(std::ostream& os) const;
  // Every line is also handed to `sink`; with keep=false only the sink sees it.
  void set_sink(std::function<void(const std::string&)> sink) { sink_ = std::move(sink); }
  void keep(bool on) { keep_ = on; }

 private:
  void emit(std::string line);

  bool enabled_ = false;
  bool keep_ = true;
  std::function<void(const std::string&)> sink_;
  std::vector<std::string> lines_;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual void deliver(NodeId src, const Message& m) = 0;
};

// Single-threaded discrete-event loop over an integer microsecond clock.
// Events run in (time, insertion) order; every random draw comes from one
// seeded engine, so a (config, seed) pair fixes the whole run.
class Simulator {
 public:
  explicit Simulator(SimConfig cfg);

  SimTime now() const { return now_; }
  const SimConfig& config() const { return cfg_; }
  std::mt19937_64& rng() { return rng_; }
  Trace& trace() { return trace_; }

  void add_node(NodeId id, std::uint32_t dc, Endpoint* ep);
  std::uint32_t dc_of(NodeId id) const { return nodes_.at(id).dc; }

  void send(NodeId src, NodeId dst, Message m);
  // Runs `fn` after `delay` unless `node` has been killed by then.
  void set_timer(NodeId node, SimTime delay, std::function<void()> fn);
  void at(SimTime t, std::function<void()> fn);

  // Deliveries from or into a failed data center are suppressed.
  void fail_datacenter(std::uint32_t dc, SimTime at);
  void heal_datacenter(std::uint32_t dc, SimTime at);
  bool dc_failed(std::uint32_t dc) const { return failed_.at(dc); }
  void kill(NodeId id);
  bool alive(NodeId id) const { return nodes_.at(id).alive; }

  // Called before a send is scheduled; lets tests stop a node mid-trace.
  void set_send_hook(std::function<void(NodeId src, NodeId dst, const Message&)> hook) {
    send_hook_ = std::move(hook);
  }
  // Returning true drops the message (targeted partitions in tests).
  void set_filter(std::function<bool(NodeId src, NodeId dst, const Message&)> f) { filter_ = std::move(f); }
  // Called after every delivery.
  void set_delivery_hook(std::function<void()> hook) { delivery_hook_ = std::move(hook); }

  SimTime sample_delay(std::uint32_t from_dc, std::uint32_t to_dc);
  SimTime mean_delay(std::uint32_t from_dc, std::uint32_t to_dc) const;
  SimTime max_rtt() const;

  bool step();
  void run_until(SimTime t);
  bool idle() const { return queue_.empty(); }
  std::uint64_t sent() const { return sent_; }
  std::uint64_t delivered() const { return delivered_; }

 private:
  struct Delivery {
    NodeId src;
    NodeId dst;
    Message msg;
  };
  struct Timer {
    NodeId node;  // 0: global
    std::function<void()> fn;
  };
  struct Event {
    SimTime at;
    std::uint64_t seq;
    std::variant<Delivery, Timer> what;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };
  struct NodeInfo {
    std::uint32_t dc = 0;
    Endpoint* ep = nullptr;
    bool alive = true;
  };

  void push(SimTime at, std::variant<Delivery, Timer> what);
  bool suppressed(NodeId src, NodeId dst) const;

  SimConfig cfg_;
  SimTime now_ = 0;
  std::uint64_t seq_ = 0;
  std::vector<Event> queue_;
  std::vector<NodeInfo> nodes_;
  std::vector<bool> failed_;
  std::mt19937_64 rng_;
  Trace trace_;
  std::function<void(NodeId, NodeId, const Message&)> send_hook_;
  std::function<bool(NodeId, NodeId, const Message&)> filter_;
  std::function<void()> delivery_hook_;
  std::uint64_t sent_ = 0;
  std::uint64_t delivered_ = 0;
};

}  // namespace mdcc
