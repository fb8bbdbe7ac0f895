#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mdcc/replica.hpp"

namespace mdcc {

using KindResolver = std::function<RecordKind(const Key&)>;

// One line of the option log: every input that changed (or could change) a
// record, in arrival order. Tab separated:
//   time key round ballot txn kind payload-json verdict
struct LogLine {
  SimTime time = 0;
  Key key;
  RoundIndex round = 0;
  Ballot ballot;
  TxnId txn = 0;
  std::string kind;
  nlohmann::json payload;
  std::string verdict = "-";

  std::string format() const;
  static LogLine parse(const std::string& line);
};

// All records of one storage node plus their option log. Replaying the log
// into an empty store reproduces every record exactly.
class ReplicaStore {
 public:
  ReplicaStore(QuorumSpec quorum, KindResolver kind_of, bool demarcation = true);

  bool contains(const Key& key) const { return records_.count(key) > 0; }
  const ReplicaRecord* find(const Key& key) const;
  ReplicaRecord& record(SimTime now, const Key& key);
  const std::map<Key, ReplicaRecord>& records() const { return records_; }

  void load(SimTime now, const Key& key, const Value& v);
  // Installs a mastership range without a Phase 1 exchange (bootstrap).
  void install_meta(SimTime now, const Key& key, const RoundMeta& meta);
  Phase1Result phase1a(SimTime now, const Key& key, const Ballot& b, const RoundMeta& range);
  Phase2Result phase2a(SimTime now, const Key& key, const Ballot& b, RoundIndex round, const CStruct& value);
  FastResult fast(SimTime now, const OptionRef& option);
  LearnResult learned(SimTime now, const Key& key, RoundIndex round, const Entry& e, Decision d, bool primary);
  LearnResult chosen(SimTime now, const Key& key, RoundIndex round, const CStruct& value);
  LearnResult snapshot(SimTime now, const Key& key, const RecordSnapshot& snap);
  // Durable record with no effect on protocol state (remote callbacks).
  void note(SimTime now, const Key& key, TxnId txn, const std::string& kind);

  const std::vector<std::string>& log() const { return log_; }
  void set_logging(bool on) { logging_ = on; }
  std::string digest_text() const;

  static ReplicaStore replay(const std::vector<std::string>& lines, QuorumSpec quorum, KindResolver kind_of,
                             bool demarcation = true);

 private:
  void append(LogLine line);
  void apply(const LogLine& line);

  QuorumSpec quorum_;
  KindResolver kind_of_;
  bool demarcation_;
  bool logging_ = true;
  std::map<Key, ReplicaRecord> records_;
  std::vector<std::string> log_;
};

nlohmann::json to_json(const RecordSnapshot& s);
RecordSnapshot snapshot_from_json(const nlohmann::json& j);

}  // namespace mdcc
