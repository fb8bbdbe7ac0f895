#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mdcc/messages.hpp"

namespace mdcc {

// Omniscient checker fed by every node. Each hook is cheap; violations are
// collected as human-readable strings.
class Observer {
 public:
  struct Counts {
    std::uint64_t divergent = 0;       // two decisions for one (record, round)
    std::uint64_t dual_commits = 0;    // two commits from one (record, read version)
    std::uint64_t dirty_reads = 0;     // read of a value no committed txn produced
    std::uint64_t bound_breaks = 0;    // constrained attribute out of bounds at a commit
    std::uint64_t outcome_splits = 0;  // txn learned as both commit and abort
    std::uint64_t verdict_splits = 0;  // (record, txn) learned with two verdicts
    std::uint64_t lost_updates = 0;    // quorum-write anomaly, not an MDCC violation
  };

  // Preloaded rows (round 0) are committed by definition.
  void on_load(const Key& key, const Value& v);
  void on_round_closed(NodeId node, const Key& key, RecordKind kind, RoundIndex r, const CStruct& decided);
  void on_execute(NodeId node, const Key& key, RecordKind kind, const Version& v, const OptionRef& option);
  // A verdict a coordinator (or recovery) treats as learned.
  void on_learned_verdict(const Key& key, RoundIndex r, TxnId txn, Verdict v);
  void on_outcome(TxnId txn, Decision d);
  void on_read(const Key& key, RecordKind kind, const ReadReply& reply);
  // Baselines.
  void on_plain_commit(const Key& key, const Value& v, const OptionRef& option);
  void on_qw_ack(const Key& key, std::uint64_t read_version, TxnId txn);

  // Checks that need the whole run (read of a version whose txn aborted).
  void finish();

  const Counts& counts() const { return counts_; }
  // Safety violations only; lost updates are reported separately.
  const std::vector<std::string>& violations() const { return violations_; }
  bool clean() const { return violations_.empty(); }
  std::uint64_t commits_seen() const { return commits_; }

 private:
  void violation(std::uint64_t& counter, std::string what);
  static std::string round_value(RecordKind kind, const CStruct& c);

  Counts counts_;
  std::vector<std::string> violations_;
  std::uint64_t commits_ = 0;

  std::map<std::pair<Key, RoundIndex>, std::string> decided_;
  std::map<std::pair<Key, std::uint64_t>, TxnId> physical_commit_;  // read version+1 (0: insert)
  std::map<std::pair<Key, RoundIndex>, Value> physical_value_;
  std::map<TxnId, Decision> outcome_;
  std::map<std::pair<Key, TxnId>, Verdict> verdict_;
  std::vector<std::pair<Key, TxnId>> reads_of_;
  std::map<std::pair<Key, std::uint64_t>, std::set<TxnId>> qw_;
};

}  // namespace mdcc
