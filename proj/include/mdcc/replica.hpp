#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mdcc/escrow.hpp"
#include "mdcc/fast_policy.hpp"
#include "mdcc/types.hpp"

namespace mdcc {

enum class RecordKind : std::uint8_t { physical, commutative };

const char* to_string(RecordKind k);

struct Phase1bReply {
  enum class State : std::uint8_t { open, decided, behind };
  RoundIndex round = 0;  // the round asked about
  State state = State::open;
  Ballot promised;
  std::optional<Ballot> vote_ballot;
  CStruct vote;                    // open: the acceptor's current vote
  std::optional<CStruct> decided;  // decided (or known chosen while open)
  RoundIndex replica_round = 0;    // the replica's own open round
};

struct Nack {
  RoundIndex round = 0;
  Ballot promised;
};

struct Phase2bReply {
  RoundIndex round = 0;
  Ballot ballot;
  TxnId txn = 0;
  Verdict verdict = Verdict::reject;
  std::size_t accepted_len = 0;  // classic: length of the accepted cstruct
  bool decided = false;          // verdict read from a closed round
};

struct Refusal {
  enum class Reason : std::uint8_t { conflict, classic_round, stale_round, behind };
  RoundIndex round = 0;
  Reason reason = Reason::conflict;
  std::optional<RoundMeta> meta;  // classic_round: where to find the master
  CStruct current;                // conflict: what the acceptor holds instead
};

const char* to_string(Refusal::Reason r);

using Phase1Result = std::variant<Phase1bReply, Nack>;
using FastResult = std::variant<Phase2bReply, Refusal>;
using Phase2Result = std::variant<Phase2bReply, Nack, Refusal>;

struct LearnResult {
  bool applied = false;          // state changed
  bool buffered = false;         // future round; caller should catch up
  std::vector<Version> executed;  // versions appended by this call
  std::vector<OptionRef> executed_options;  // parallel to `executed`
  std::vector<RoundIndex> closed;  // rounds closed by this call
  std::vector<RoundMode> closed_modes;  // parallel to `closed`
  std::string diagnostic;
};

// Snapshot handed to a lagging replica during catch-up.
struct RecordSnapshot {
  RoundIndex round = 0;
  std::vector<CStruct> history;
  std::vector<Version> versions;
  Value base;
  std::optional<CStruct> decided;  // open round
  std::set<TxnId> executed;        // open round
};

// Acceptor/learner state of one record at one storage node. Each round
// decides a CStruct; closed rounds are kept in `history`. A single-threaded
// value type: one call in, one state transition, one result out.
class ReplicaRecord {
 public:
  ReplicaRecord(Key key, RecordKind kind, QuorumSpec quorum);

  // Preloads a committed row as round 0.
  void load(const Value& v);

  Phase1Result handle_phase1a(SimTime now, const Ballot& ballot, const RoundMeta& range);
  // Classic accept of a master-built value (verdicts chosen by the master).
  Phase2Result handle_phase2a(SimTime now, const Ballot& ballot, RoundIndex round, const CStruct& value);
  // Classic accept of one option: validated locally and appended to the
  // round's value (as primary, or as a dual-learned reject behind one).
  Phase2Result handle_phase2a(SimTime now, const Ballot& ballot, RoundIndex round, const OptionRef& option);
  FastResult handle_fast_propose(SimTime now, const OptionRef& option);

  Verdict validate_option(const UpdateOption& option) const;
  Verdict escrow_check(const UpdateOption& option) const;

  // Decision for `option` in `round`. `primary` marks the round's first entry.
  LearnResult apply_learned(SimTime now, RoundIndex round, const OptionRef& option, Verdict verdict,
                            Decision decision, bool primary);
  // A master announced the round's chosen value.
  LearnResult apply_chosen(SimTime now, RoundIndex round, const CStruct& value);
  // Meta covering `r` with the highest ballot, if any was installed.
  std::optional<RoundMeta> meta_for(RoundIndex r) const;

  RecordSnapshot snapshot() const;
  LearnResult import_snapshot(SimTime now, const RecordSnapshot& snap);

  // Options blocking progress until their transaction outcome is learned:
  // accepted pending options, plus an undecided physical primary reject.
  std::vector<std::pair<OptionRef, SimTime>> outstanding() const;
  // Round and entry of `txn` among closed rounds, if any.
  std::optional<std::pair<RoundIndex, Entry>> decided_entry(TxnId txn) const;

  const Key& key() const { return key_; }
  RecordKind kind() const { return kind_; }
  const QuorumSpec& quorum() const { return quorum_; }
  RoundIndex round() const { return round_; }
  Ballot promised() const { return promised_for(round_); }
  Ballot promised_for(RoundIndex r) const;
  RoundMode mode_for(RoundIndex r) const;
  const std::vector<RoundMeta>& meta() const { return meta_; }
  const std::optional<Ballot>& vote_ballot() const { return vote_ballot_; }
  const CStruct& vote() const { return vote_; }
  const std::optional<CStruct>& decided() const { return decided_; }
  const std::vector<CStruct>& history() const { return history_; }
  const std::vector<Version>& versions() const { return versions_; }
  std::optional<Version> latest() const;
  bool absent() const;
  bool executed(TxnId txn) const { return executed_in_round(txn); }
  const Value& base() const { return base_; }
  Value current_value() const;
  std::vector<OptionRef> pending() const;
  // Demarcation limit of `attr` for the open commutative round.
  Rational limit(const std::string& attr, std::int64_t lo = 0) const;
  void set_demarcation(bool on) { demarcation_ = on; }

  // Canonical serialisation of the whole state; equal iff states are equal.
  std::string digest_text() const;

 private:
  void record_promise(const Ballot& ballot, const RoundMeta& range);
  void close_round(CStruct decided, LearnResult& out);
  void try_close_commutative(LearnResult& out);
  void execute_physical(const Entry& primary, Decision decision, LearnResult& out);
  void execute_commutative(const OptionRef& option, Decision decision, LearnResult& out);
  void drain_future(SimTime now, LearnResult& out);
  void learned_impl(SimTime now, RoundIndex round, const OptionRef& option, Verdict verdict,
                    Decision decision, bool primary, LearnResult& out);
  void chosen_impl(SimTime now, RoundIndex round, const CStruct& value, LearnResult& out);
  void sync_pending(SimTime now, const CStruct& accepted);
  void index_round(RoundIndex r, const CStruct& decided);
  bool executed_in_round(TxnId txn) const { return executed_.count(txn) > 0; }

  Key key_;
  RecordKind kind_;
  QuorumSpec quorum_;
  bool demarcation_ = true;

  std::vector<RoundMeta> meta_;  // explicit overrides of the implicit fast range
  RoundIndex round_ = 0;
  std::optional<Ballot> vote_ballot_;
  CStruct vote_;
  std::optional<CStruct> decided_;
  std::vector<CStruct> history_;
  std::vector<Version> versions_;

  Value base_;                           // commutative round's base value
  std::map<TxnId, OptionRef> pending_;   // accepted, not yet executed
  std::map<TxnId, SimTime> seen_at_;
  SimTime vote_since_ = -1;              // when the open round got its first vote
  std::set<TxnId> executed_;             // executed in the open round
  std::map<TxnId, std::pair<RoundIndex, Entry>> decided_txns_;  // derived from history_

  struct FutureLearn {
    RoundIndex round;
    OptionRef option;
    Verdict verdict;
    Decision decision;
    bool primary;
  };
  std::vector<FutureLearn> future_learned_;
  std::map<RoundIndex, CStruct> future_chosen_;
};

}  // namespace mdcc
