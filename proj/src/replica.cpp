#include "mdcc/replica.hpp"

#include <algorithm>

namespace mdcc {

const char* to_string(RecordKind k) { return k == RecordKind::physical ? "physical" : "commutative"; }

const char* to_string(Refusal::Reason r) {
  switch (r) {
    case Refusal::Reason::conflict: return "conflict";
    case Refusal::Reason::classic_round: return "classic";
    case Refusal::Reason::stale_round: return "stale";
    case Refusal::Reason::behind: return "behind";
  }
  return "?";
}

ReplicaRecord::ReplicaRecord(Key key, RecordKind kind, QuorumSpec quorum)
    : key_(std::move(key)), kind_(kind), quorum_(quorum) {}

void ReplicaRecord::load(const Value& v) {
  versions_ = {Version{0, v, v.tombstone, 0}};
  history_ = {CStruct{}};
  round_ = 1;
  base_ = v;
}

std::optional<RoundMeta> ReplicaRecord::meta_for(RoundIndex r) const {
  std::optional<RoundMeta> best;
  for (const auto& m : meta_) {
    if (m.covers(r) && (!best || m.ballot > best->ballot)) best = m;
  }
  return best;
}

Ballot ReplicaRecord::promised_for(RoundIndex r) const {
  auto m = meta_for(r);
  return m ? m->ballot : Ballot::implicit_fast();
}

RoundMode ReplicaRecord::mode_for(RoundIndex r) const {
  auto m = meta_for(r);
  return (!m || m->fast) ? RoundMode::fast : RoundMode::classic;
}

std::optional<Version> ReplicaRecord::latest() const {
  if (versions_.empty()) return std::nullopt;
  return versions_.back();
}

bool ReplicaRecord::absent() const { return versions_.empty() || versions_.back().absent; }

Value ReplicaRecord::current_value() const { return versions_.empty() ? Value{} : versions_.back().value; }

std::vector<OptionRef> ReplicaRecord::pending() const {
  std::vector<OptionRef> out;
  out.reserve(pending_.size());
  for (const auto& [txn, o] : pending_) out.push_back(o);
  return out;
}

Rational ReplicaRecord::limit(const std::string& attr, std::int64_t lo) const {
  return compute_limit(quorum_.n, demarcation_ ? quorum_.q_fast : quorum_.n, base_.get(attr), lo);
}

void ReplicaRecord::record_promise(const Ballot& ballot, const RoundMeta& range) {
  RoundMeta m = range;
  m.ballot = ballot;
  if (std::find(meta_.begin(), meta_.end(), m) != meta_.end()) return;
  meta_.push_back(m);
}

Phase1Result ReplicaRecord::handle_phase1a(SimTime, const Ballot& ballot, const RoundMeta& range) {
  const RoundIndex target = range.start_round;
  Ballot highest = Ballot::implicit_fast();
  for (const auto& m : meta_) {
    const bool overlaps = (!range.end_round || m.start_round <= *range.end_round) &&
                          (!m.end_round || *m.end_round >= range.start_round);
    if (overlaps && m.ballot > highest) highest = m.ballot;
  }
  if (ballot < highest) return Nack{target, highest};
  if (ballot > highest) record_promise(ballot, range);

  Phase1bReply reply;
  reply.round = target;
  reply.promised = ballot;
  reply.replica_round = round_;
  if (target < round_) {
    reply.state = Phase1bReply::State::decided;
    if (target < history_.size()) reply.decided = history_[target];
  } else if (target == round_) {
    reply.state = Phase1bReply::State::open;
    reply.vote_ballot = vote_ballot_;
    reply.vote = vote_;
    reply.decided = decided_;
  } else {
    reply.state = Phase1bReply::State::behind;
  }
  return reply;
}

void ReplicaRecord::sync_pending(SimTime now, const CStruct& accepted) {
  if (!accepted.empty() && vote_since_ < 0) vote_since_ = now;
  std::map<TxnId, OptionRef> next;
  for (const auto& e : accepted) {
    if (e.verdict != Verdict::accept || executed_in_round(e.option->txn)) continue;
    next.emplace(e.option->txn, e.option);
    seen_at_.emplace(e.option->txn, now);
  }
  for (auto it = seen_at_.begin(); it != seen_at_.end();) {
    it = next.count(it->first) ? std::next(it) : seen_at_.erase(it);
  }
  pending_ = std::move(next);
}

Phase2Result ReplicaRecord::handle_phase2a(SimTime now, const Ballot& ballot, RoundIndex round,
                                           const CStruct& value) {
  const Ballot promised = promised_for(round);
  if (ballot < promised) return Nack{round, promised};
  if (value.empty()) return Refusal{round, Refusal::Reason::conflict, std::nullopt, vote_};

  const Entry& last = value.back();
  if (round < round_) {
    if (round < history_.size() && is_prefix(history_[round], value)) {
      // Physical extensions carry only rejects of options that cannot win
      // any other round; recording them early is safe.
      if (kind_ == RecordKind::physical) {
        for (std::size_t i = history_[round].size(); i < value.size(); ++i) {
          history_[round].push_back(value[i]);
          decided_txns_.emplace(value[i].option->txn, std::make_pair(round, value[i]));
        }
      }
      return Phase2bReply{round, ballot, last.option->txn, last.verdict, value.size()};
    }
    return Refusal{round, Refusal::Reason::stale_round, std::nullopt,
                   round < history_.size() ? history_[round] : CStruct{}};
  }
  if (round > round_) return Refusal{round, Refusal::Reason::behind, std::nullopt, {}};

  if (ballot > promised) record_promise(ballot, RoundMeta{round, round, !ballot.classic, ballot});
  if (vote_ballot_ && *vote_ballot_ == ballot) {
    if (value.size() > vote_.size()) vote_ = value;
  } else {
    vote_ballot_ = ballot;
    vote_ = value;
  }
  if (!decided_) sync_pending(now, vote_);
  return Phase2bReply{round, ballot, last.option->txn, last.verdict, vote_.size()};
}

Phase2Result ReplicaRecord::handle_phase2a(SimTime now, const Ballot& ballot, RoundIndex round,
                                           const OptionRef& option) {
  CStruct value = (round == round_ && vote_ballot_ && *vote_ballot_ == ballot) ? vote_ : CStruct{};
  if (!find_entry(value, option->txn)) {
    Verdict v;
    if (kind_ == RecordKind::physical) {
      v = value.empty() ? validate_option(*option) : Verdict::reject;
    } else {
      v = escrow_check(*option);
    }
    value.push_back(Entry{option, v});
  }
  return handle_phase2a(now, ballot, round, value);
}

FastResult ReplicaRecord::handle_fast_propose(SimTime now, const OptionRef& option) {
  const TxnId txn = option->txn;
  if (auto d = decided_entry(txn)) {
    Phase2bReply rep{d->first, Ballot::implicit_fast(), txn, d->second.verdict, 0};
    rep.decided = true;
    return rep;
  }
  if (kind_ == RecordKind::commutative) {
    const RoundIndex target = option->is_commutative() ? option->commutative().round : round_;
    if (target < round_) return Refusal{target, Refusal::Reason::stale_round, std::nullopt, {}};
    if (target > round_) return Refusal{target, Refusal::Reason::behind, std::nullopt, {}};
  }
  const RoundIndex r = round_;
  if (mode_for(r) == RoundMode::classic) {
    return Refusal{r, Refusal::Reason::classic_round, meta_for(r), {}};
  }
  const Ballot ballot = promised_for(r);

  if (decided_) {
    if (const Entry* e = find_entry(*decided_, txn)) {
      return Phase2bReply{r, vote_ballot_.value_or(ballot), txn, e->verdict, decided_->size()};
    }
    const auto reason = kind_ == RecordKind::physical ? Refusal::Reason::conflict : Refusal::Reason::stale_round;
    return Refusal{r, reason, std::nullopt, *decided_};
  }

  if (const Entry* e = find_entry(vote_, txn)) {
    return Phase2bReply{r, *vote_ballot_, txn, e->verdict, vote_.size()};
  }

  if (kind_ == RecordKind::physical) {
    if (!vote_.empty()) return Refusal{r, Refusal::Reason::conflict, std::nullopt, vote_};
    const Verdict v = validate_option(*option);
    vote_ballot_ = ballot;
    vote_ = {Entry{option, v}};
    sync_pending(now, vote_);
    return Phase2bReply{r, ballot, txn, v, 1};
  }

  if (executed_in_round(txn)) return Phase2bReply{r, ballot, txn, Verdict::accept, vote_.size()};
  const Verdict v = escrow_check(*option);
  vote_ballot_ = ballot;
  vote_.push_back(Entry{option, v});
  if (vote_since_ < 0) vote_since_ = now;
  if (v == Verdict::accept) {
    pending_.emplace(txn, option);
    seen_at_.emplace(txn, now);
  }
  return Phase2bReply{r, ballot, txn, v, vote_.size()};
}

Verdict ReplicaRecord::validate_option(const UpdateOption& option) const {
  if (option.is_commutative()) return escrow_check(option);
  const auto& p = option.physical();
  if (!p.read_version) return absent() && round_ == p.insert_round ? Verdict::accept : Verdict::reject;
  if (versions_.empty()) return Verdict::reject;
  return versions_.back().index == *p.read_version && !versions_.back().absent ? Verdict::accept
                                                                               : Verdict::reject;
}

Verdict ReplicaRecord::escrow_check(const UpdateOption& option) const {
  if (!option.is_commutative()) return validate_option(option);
  std::vector<OptionRef> others;
  for (const auto& [txn, o] : pending_) {
    if (txn != option.txn) others.push_back(o);
  }
  const EscrowContext ctx{base_, current_value(), quorum_, demarcation_};
  return mdcc::escrow_check(ctx, others, option);
}

void ReplicaRecord::index_round(RoundIndex r, const CStruct& decided) {
  for (const auto& e : decided) decided_txns_.emplace(e.option->txn, std::make_pair(r, e));
}

std::optional<std::pair<RoundIndex, Entry>> ReplicaRecord::decided_entry(TxnId txn) const {
  auto it = decided_txns_.find(txn);
  if (it == decided_txns_.end()) return std::nullopt;
  return it->second;
}

void ReplicaRecord::close_round(CStruct decided, LearnResult& out) {
  index_round(round_, decided);
  history_.push_back(std::move(decided));
  out.closed.push_back(round_);
  out.closed_modes.push_back(mode_for(round_));
  ++round_;
  vote_.clear();
  vote_ballot_.reset();
  decided_.reset();
  pending_.clear();
  seen_at_.clear();
  vote_since_ = -1;
  executed_.clear();
  if (kind_ == RecordKind::commutative) base_ = current_value();
  std::erase_if(meta_, [&](const RoundMeta& m) { return m.end_round && *m.end_round < round_; });
  out.applied = true;
}

void ReplicaRecord::execute_physical(const Entry& primary, Decision decision, LearnResult& out) {
  Version v;
  v.index = versions_.size();
  if (primary.verdict == Verdict::accept && decision == Decision::commit) {
    v.value = primary.option->physical().write_value;
    v.absent = v.value.tombstone;
    v.committed_by = primary.option->txn;
  } else if (!versions_.empty()) {
    v.value = versions_.back().value;
    v.absent = versions_.back().absent;
  } else {
    v.absent = true;
  }
  versions_.push_back(v);
  out.executed.push_back(v);
  out.executed_options.push_back(primary.option);
  CStruct decided = decided_ ? *decided_ : CStruct{primary};
  close_round(std::move(decided), out);
}

void ReplicaRecord::execute_commutative(const OptionRef& option, Decision decision, LearnResult& out) {
  Version v;
  v.index = versions_.size();
  v.value = current_value();
  if (decision == Decision::commit) {
    for (const auto& [attr, d] : option->commutative().deltas) v.value.attrs[attr] += d;
    v.committed_by = option->txn;
  }
  versions_.push_back(v);
  out.executed.push_back(v);
  out.executed_options.push_back(option);
  executed_.insert(option->txn);
  pending_.erase(option->txn);
  seen_at_.erase(option->txn);
  out.applied = true;
}

void ReplicaRecord::try_close_commutative(LearnResult& out) {
  if (!decided_) return;
  for (const auto& e : *decided_) {
    if (e.verdict == Verdict::accept && !executed_in_round(e.option->txn)) return;
  }
  close_round(*decided_, out);
}

void ReplicaRecord::learned_impl(SimTime, RoundIndex round, const OptionRef& option, Verdict verdict,
                                 Decision decision, bool primary, LearnResult& out) {
  if (round < round_) {
    out.diagnostic = "learned for closed round " + std::to_string(round);
    return;
  }
  if (round > round_) {
    future_learned_.push_back({round, option, verdict, decision, primary});
    out.buffered = true;
    return;
  }
  if (kind_ == RecordKind::physical) {
    if (!primary) {
      out.diagnostic = "dual-learned reject needs no execution";
      return;
    }
    if (decided_ && !decided_->empty() && decided_->front().option->txn != option->txn) {
      out.diagnostic = "learned primary disagrees with chosen value";
      return;
    }
    execute_physical(Entry{option, verdict}, decision, out);
    return;
  }
  if (verdict == Verdict::reject) {
    if (pending_.erase(option->txn) > 0) {
      seen_at_.erase(option->txn);
      out.applied = true;
    }
    return;
  }
  if (executed_in_round(option->txn)) {
    out.diagnostic = "duplicate learned";
    return;
  }
  execute_commutative(option, decision, out);
  try_close_commutative(out);
}

void ReplicaRecord::chosen_impl(SimTime now, RoundIndex round, const CStruct& value, LearnResult& out) {
  if (round < round_) {
    // A physical round may gain dual-learned rejects after it closed here.
    auto& h = history_[round];
    if (kind_ != RecordKind::physical || value.size() <= h.size() || h.empty() ||
        value.front().option->txn != h.front().option->txn) {
      return;
    }
    for (const auto& e : value) {
      if (find_entry(h, e.option->txn)) continue;
      h.push_back(e);
      decided_txns_.emplace(e.option->txn, std::make_pair(round, e));
    }
    return;
  }
  if (round > round_) {
    auto& slot = future_chosen_[round];
    if (value.size() > slot.size()) slot = value;
    out.buffered = true;
    return;
  }
  if (value.empty()) return;
  if (decided_ && decided_->size() >= value.size()) return;
  if (decided_ && !is_prefix(*decided_, value)) out.diagnostic = "chosen value does not extend decided";
  decided_ = value;
  out.applied = true;
  sync_pending(now, *decided_);
  if (kind_ == RecordKind::physical) {
    if (decided_->front().verdict == Verdict::reject) execute_physical(decided_->front(), Decision::abort, out);
    return;
  }
  try_close_commutative(out);
}

void ReplicaRecord::drain_future(SimTime now, LearnResult& out) {
  bool progress = true;
  while (progress) {
    progress = false;
    std::erase_if(future_learned_, [&](const FutureLearn& f) { return f.round < round_; });
    std::erase_if(future_chosen_, [&](const auto& kv) { return kv.first < round_; });
    if (auto it = future_chosen_.find(round_); it != future_chosen_.end()) {
      CStruct value = std::move(it->second);
      future_chosen_.erase(it);
      const RoundIndex before = round_;
      chosen_impl(now, round_, value, out);
      progress = progress || round_ != before;
    }
    for (std::size_t i = 0; i < future_learned_.size(); ++i) {
      if (future_learned_[i].round != round_) continue;
      FutureLearn f = future_learned_[i];
      future_learned_.erase(future_learned_.begin() + static_cast<std::ptrdiff_t>(i));
      learned_impl(now, f.round, f.option, f.verdict, f.decision, f.primary, out);
      progress = true;
      break;
    }
  }
}

LearnResult ReplicaRecord::apply_learned(SimTime now, RoundIndex round, const OptionRef& option,
                                         Verdict verdict, Decision decision, bool primary) {
  LearnResult out;
  learned_impl(now, round, option, verdict, decision, primary, out);
  if (out.applied) drain_future(now, out);
  return out;
}

LearnResult ReplicaRecord::apply_chosen(SimTime now, RoundIndex round, const CStruct& value) {
  LearnResult out;
  chosen_impl(now, round, value, out);
  if (out.applied) drain_future(now, out);
  return out;
}

RecordSnapshot ReplicaRecord::snapshot() const {
  return RecordSnapshot{round_, history_, versions_, base_, decided_, executed_};
}

LearnResult ReplicaRecord::import_snapshot(SimTime now, const RecordSnapshot& snap) {
  LearnResult out;
  if (snap.round <= round_) return out;
  history_ = snap.history;
  decided_txns_.clear();
  for (RoundIndex r = 0; r < history_.size(); ++r) index_round(r, history_[r]);
  versions_ = snap.versions;
  round_ = snap.round;
  base_ = snap.base;
  vote_.clear();
  vote_ballot_.reset();
  decided_ = snap.decided;
  pending_.clear();
  seen_at_.clear();
  vote_since_ = -1;
  executed_ = snap.executed;
  std::erase_if(meta_, [&](const RoundMeta& m) { return m.end_round && *m.end_round < round_; });
  out.applied = true;
  if (decided_) {
    sync_pending(now, *decided_);
    if (kind_ == RecordKind::physical && decided_->front().verdict == Verdict::reject) {
      execute_physical(decided_->front(), Decision::abort, out);
    } else if (kind_ == RecordKind::commutative) {
      try_close_commutative(out);
    }
  }
  drain_future(now, out);
  return out;
}

std::vector<std::pair<OptionRef, SimTime>> ReplicaRecord::outstanding() const {
  std::vector<std::pair<OptionRef, SimTime>> out;
  for (const auto& [txn, o] : pending_) {
    auto it = seen_at_.find(txn);
    out.emplace_back(o, it == seen_at_.end() ? 0 : it->second);
  }
  if (kind_ == RecordKind::physical && !decided_ && !vote_.empty() && vote_.front().verdict == Verdict::reject) {
    out.emplace_back(vote_.front().option, vote_since_);
  }
  return out;
}

std::string ReplicaRecord::digest_text() const {
  nlohmann::json j;
  j["key"] = key_;
  j["kind"] = to_string(kind_);
  j["round"] = round_;
  nlohmann::json metas = nlohmann::json::array();
  for (const auto& m : meta_) {
    metas.push_back({m.start_round, m.end_round ? nlohmann::json(*m.end_round) : nlohmann::json(nullptr), m.fast,
                     to_json(m.ballot)});
  }
  j["meta"] = metas;
  j["vote_ballot"] = vote_ballot_ ? to_json(*vote_ballot_) : nlohmann::json(nullptr);
  j["vote"] = to_json(vote_);
  j["decided"] = decided_ ? to_json(*decided_) : nlohmann::json(nullptr);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : history_) hist.push_back(to_json(h));
  j["history"] = hist;
  nlohmann::json vers = nlohmann::json::array();
  for (const auto& v : versions_) vers.push_back({v.index, to_json(v.value), v.absent, v.committed_by});
  j["versions"] = vers;
  j["base"] = to_json(base_);
  nlohmann::json pend = nlohmann::json::array();
  for (const auto& [txn, o] : pending_) pend.push_back({txn, seen_at_.count(txn) ? seen_at_.at(txn) : -1});
  j["pending"] = pend;
  j["executed"] = executed_;
  j["vote_since"] = vote_since_;
  j["future_learned"] = future_learned_.size();
  j["future_chosen"] = future_chosen_.size();
  return j.dump();
}

}  // namespace mdcc
