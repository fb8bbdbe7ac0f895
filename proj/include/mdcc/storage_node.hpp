#pragma once

#include <map>
#include <set>
#include <vector>

#include "mdcc/observer.hpp"
#include "mdcc/topology.hpp"

namespace mdcc {

// Row of the lock-based and quorum-write baselines.
struct PlainRow {
  Value value;
  bool absent = true;
  std::uint64_t version = 0;
  NodeId writer = 0;
  TxnId lock = 0;
  OptionRef staged;
};

// A storage node: replica of every record, master for any record it is asked
// to drive, recovery agent for dangling transactions, and participant in the
// baseline protocols.
class StorageNode : public Endpoint {
 public:
  StorageNode(NodeId id, Simulator& sim, Observer& obs, const Topology& topo, const ProtocolParams& params);

  NodeId id() const { return id_; }
  void preload(const Key& key, const Value& v);
  // Pre-grants this node's classic ballot for all rounds of `key`.
  void bootstrap_master(const Key& key);
  void accept_bootstrap(const Key& key, NodeId master);
  void start();

  void deliver(NodeId src, const Message& m) override;

  const ReplicaStore& store() const { return store_; }
  const std::map<Key, PlainRow>& plain() const { return plain_; }
  std::uint64_t recoveries() const { return recoveries_; }

 private:
  struct MasterRequest {
    TxnId txn = 0;
    OptionRef option;
    NodeId reply_to = 0;
    bool conflict = false;
  };
  struct MasterState {
    Ballot ballot;  // number 0: none held
    std::uint32_t max_number = 0;
    RoundIndex p1_round = ~RoundIndex{0};
    RoundIndex free_from = ~RoundIndex{0};
    std::optional<RoundIndex> range_end;
    enum class Phase : std::uint8_t { idle, phase1, phase2, backoff } phase = Phase::idle;
    RoundIndex round = 0;
    RoundMeta range;
    std::map<NodeId, Phase1bReply> p1;
    std::uint32_t p1_needed = 0;  // promises to wait for; grows on ambiguous votes
    std::set<NodeId> acks;
    CStruct proposed;  // latest value proposed for `proposed_round` at `ballot`
    RoundIndex proposed_round = ~RoundIndex{0};
    RoundIndex chosen_round = ~RoundIndex{0};
    std::vector<MasterRequest> waiting;
    std::vector<MasterRequest> inflight;
    std::uint64_t epoch = 0;
    std::uint32_t retries = 0;
    FastPolicyState policy;
    RoundIndex last_classic_end = 0;
  };
  struct Recovery {
    TxnId txn = 0;
    std::vector<Key> keys;
    std::map<Key, OptionRef> known;
    std::map<Key, Decided> got;
    std::uint32_t attempt = 0;
  };
  struct TpcCoord {
    NodeId client = 0;
    std::vector<OptionRef> options;
    std::map<std::pair<Key, NodeId>, bool> votes;
    std::set<std::pair<Key, NodeId>> acks;
    bool deciding = false;
    bool commit = false;
  };

  // replica side
  void on_fast(NodeId src, const FastPropose& m);
  void on_phase1a(NodeId src, const Phase1a& m);
  void on_phase2a(NodeId src, const Phase2a& m);
  void on_learned(const Learned& m);
  void on_chosen(const Chosen& m);
  void on_catchup(NodeId src, const CatchupRequest& m);
  void on_snapshot(const Snapshot& m);
  void on_read(NodeId src, const ReadRequest& m);
  void after_update(const Key& key, const LearnResult& r);
  void request_catchup(const Key& key);
  void broadcast(const Key& key, const Message& m);

  // master side
  void on_request(NodeId src, const ClassicRequest& m);
  void on_phase1b(NodeId src, const Phase1b& m);
  void on_phase2b(NodeId src, const Phase2b& m);
  void pump(const Key& key);
  void start_phase1(const Key& key, MasterState& ms, RoundIndex r);
  void finish_phase1(const Key& key, MasterState& ms);
  // `extend`: append the waiting requests to `base`.
  void propose(const Key& key, MasterState& ms, CStruct base, bool extend);
  // The one round in which `o` can be accepted.
  static RoundIndex target_round(const UpdateOption& o);
  void chosen(const Key& key, MasterState& ms);
  void abandon(const Key& key, MasterState& ms, bool lost_ballot);
  void arm_master_timer(const Key& key, MasterState& ms);
  bool prepared(const MasterState& ms, RoundIndex r) const;
  Verdict master_verdict(const ReplicaRecord& rec, const CStruct& proposal, const UpdateOption& o) const;
  // Replies at once if `q.txn` is already decided on `key`.
  bool answer_known(const Key& key, const MasterRequest& q);
  void reply_decided(const MasterRequest& q, const Key& key, RoundIndex round, const Entry& e, bool primary);

  // recovery
  void recovery_tick();
  void start_recovery(const OptionRef& option);
  void send_resolves(TxnId txn);
  void on_decided(const Decided& m);

  // baselines
  void on_tpc_request(NodeId src, const TpcRequest& m);
  void on_tpc_prepare(NodeId src, const TpcPrepare& m);
  void on_tpc_vote(NodeId src, const TpcVote& m);
  void on_tpc_finish(NodeId src, const TpcFinish& m);
  void on_tpc_ack(NodeId src, const TpcAck& m);
  void tpc_resend(TxnId txn);
  void on_qw_write(NodeId src, const QwWrite& m);

  void event(std::string_view kind, const std::string& args);

  NodeId id_;
  Simulator& sim_;
  Observer& obs_;
  const Topology& topo_;
  ProtocolParams params_;
  std::uint32_t index_;
  SimTime recovery_timeout_;
  ReplicaStore store_;
  std::map<Key, MasterState> masters_;
  std::set<Key> watch_;  // records with outstanding options
  std::map<Key, SimTime> catchup_until_;
  std::map<TxnId, Recovery> recovering_;
  std::map<TxnId, SimTime> recovered_at_;
  std::uint64_t recoveries_ = 0;

  std::map<Key, PlainRow> plain_;
  std::map<std::pair<TxnId, Key>, bool> tpc_votes_;
  std::map<TxnId, TpcCoord> tpc_;
};

}  // namespace mdcc
