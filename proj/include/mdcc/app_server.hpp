#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "mdcc/observer.hpp"
#include "mdcc/reads.hpp"
#include "mdcc/topology.hpp"

namespace mdcc {

struct TxnUpdate {
  Key key;
  std::variant<PhysicalUpdate, CommutativeUpdate> update;
};

// Programming-model callbacks. At the deadline exactly one of on_failure,
// on_accept, on_commit has fired; `finally` fires once the outcome is known.
struct Stages {
  std::function<void(TxnId)> on_failure;
  std::function<void(TxnId)> on_accept;
  std::function<void(TxnId, bool success)> on_commit;
  std::function<void(TxnId, bool success, bool timeout)> finally;
  bool finally_remote = false;  // durable callback executed by the replicas
};

enum class KeyStatus : std::uint8_t { unsent, proposed, phase2b_seen, learned_accept, learned_reject };
enum class Outcome : std::uint8_t { pending, committed, aborted, unknown };

const char* to_string(Outcome o);

struct TxnHandle {
  TxnId txn = 0;
  std::vector<std::pair<Key, RoundIndex>> read_set;
  std::vector<OptionRef> write_set;
  SimTime slo_deadline = 0;  // 0: none
  std::map<Key, KeyStatus> per_key_status;
  Outcome outcome = Outcome::pending;
};

// Transaction coordinator and read client. One per client; the local storage
// node is the one in the same data center.
class AppServer : public Endpoint {
 public:
  AppServer(NodeId id, Simulator& sim, Observer& obs, const Topology& topo, const ProtocolParams& params);

  NodeId id() const { return id_; }
  NodeId local() const { return local_; }

  // Proposes `updates` under a fresh transaction id. `slo` of 0 sets no deadline.
  TxnId commit(std::vector<TxnUpdate> updates, SimTime slo, Stages stages);
  const TxnHandle* handle(TxnId txn) const;

  void read_local(const Key& key, ReadCallback cb);
  void read_quorum(const Key& key, ReadCallback cb);
  void read_monotonic(const std::shared_ptr<Session>& s, const Key& key, ReadCallback cb);
  // Reads the map-backed store of the 2PC and quorum-write baselines.
  void read_plain(const Key& key, ReadCallback cb);

  void deliver(NodeId src, const Message& m) override;

 private:
  struct KeyState {
    OptionRef option;
    std::map<NodeId, Vote> votes;
    bool classic = false;  // a classic request is out
    bool conflict = false;
    std::uint32_t attempt = 0;
    NodeId master = 0;
    std::uint64_t epoch = 0;
    bool learned = false;
    bool via_classic = false;
    RoundIndex round = 0;
    Entry entry;
    bool primary = false;
    std::set<NodeId> acks;  // quorum writes
  };
  struct Txn {
    TxnHandle h;
    Stages stages;
    std::map<Key, KeyState> keys;
    bool any_2b = false;
    bool stage_fired = false;
    bool finished = false;
    std::uint32_t conflicts = 0;
  };
  struct PendingRead {
    Key key;
    ReadCallback cb;
    Freshness freshness = Freshness::local;
    std::vector<NodeId> targets;  // local: fallback order
    std::size_t next = 0;
    std::size_t need = 1;
    std::map<NodeId, ReadReply> replies;
    Store store = Store::paxos;
    std::shared_ptr<Session> session;
    bool done = false;
  };

  void on_vote(NodeId src, const Vote& v);
  void on_decided(const Decided& d);
  void on_tpc_reply(const TpcReply& r);
  void on_qw_ack(NodeId src, const QwAck& a);
  void on_read_reply(NodeId src, const ReadReply& r);

  void propose_fast(Txn& t, KeyState& ks);
  void send_classic(Txn& t, KeyState& ks, NodeId master);
  void arm_key_timer(TxnId txn, const Key& key, SimTime delay);
  void tally(Txn& t, KeyState& ks);
  void learn(Txn& t, KeyState& ks, RoundIndex round, const Entry& e, bool primary, bool classic);
  void maybe_decide(Txn& t);
  void decide(Txn& t, Decision d);
  void saw_2b(Txn& t);
  void at_deadline(TxnId txn);

  std::uint64_t start_read(PendingRead pr);
  void send_read(std::uint64_t req, NodeId to);
  void arm_read_timer(std::uint64_t req);
  void finish_read(std::uint64_t req, PendingRead& pr);
  void event(std::string_view kind, const std::string& args);

  NodeId id_;
  Simulator& sim_;
  Observer& obs_;
  const Topology& topo_;
  ProtocolParams params_;
  NodeId local_;
  std::uint64_t next_txn_ = 1;
  std::uint64_t next_req_ = 1;
  std::map<TxnId, Txn> txns_;
  std::map<std::uint64_t, PendingRead> reads_;
};

}  // namespace mdcc
