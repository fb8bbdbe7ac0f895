#include <algorithm>
#include <random>

#include "mdcc/collision.hpp"
#include "mdcc/storage_node.hpp"

namespace mdcc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// Stands in for an option the requester could not supply; it can only be
// decided as rejected.
OptionRef placeholder(TxnId txn, const Key& key, RecordKind kind, RoundIndex round) {
  UpdateOption o;
  o.txn = txn;
  o.key = key;
  o.writeset = {key};
  if (kind == RecordKind::commutative) {
    o.update = CommutativeUpdate{{}, {}, round};
  } else {
    o.update = PhysicalUpdate{};
  }
  return std::make_shared<const UpdateOption>(std::move(o));
}

std::string label(const Entry& e) { return std::to_string(e.option->txn) + ":" + to_string(e.verdict); }

}  // namespace

bool StorageNode::prepared(const MasterState& ms, RoundIndex r) const {
  if (ms.ballot.number == 0) return false;
  if (r == ms.p1_round) return true;
  return r >= ms.free_from && (!ms.range_end || r <= *ms.range_end);
}

void StorageNode::reply_decided(const MasterRequest& q, const Key& key, RoundIndex round, const Entry& e,
                                bool primary) {
  sim_.send(id_, q.reply_to, Decided{key, q.txn, round, e, primary});
}

void StorageNode::on_request(NodeId src, const ClassicRequest& m) {
  auto& ms = masters_[m.key];
  for (auto* list : {&ms.waiting, &ms.inflight}) {
    for (auto& q : *list) {
      if (q.txn == m.txn && q.reply_to == src) {
        if (!q.option && m.option) q.option = m.option;
        return;
      }
    }
  }
  ms.waiting.push_back(MasterRequest{m.txn, m.option, src, m.conflict});
  pump(m.key);
}

Verdict StorageNode::master_verdict(const ReplicaRecord& rec, const CStruct& proposal, const UpdateOption& o) const {
  // Exact bound: every accepted, unexecuted entry of the round may still commit.
  std::vector<OptionRef> pending;
  for (const auto& e : proposal) {
    if (e.verdict == Verdict::accept && !rec.executed(e.option->txn)) pending.push_back(e.option);
  }
  const EscrowContext ctx{rec.base(), rec.current_value(), topo_.quorum, false};
  return escrow_check(ctx, pending, o);
}

bool StorageNode::answer_known(const Key& key, const MasterRequest& q) {
  const auto& rec = store_.record(sim_.now(), key);
  if (auto d = rec.decided_entry(q.txn)) {
    reply_decided(q, key, d->first, d->second, rec.history()[d->first].front().option->txn == q.txn);
    return true;
  }
  if (rec.decided()) {
    if (const Entry* e = find_entry(*rec.decided(), q.txn)) {
      reply_decided(q, key, rec.round(), *e, rec.decided()->front().option->txn == q.txn);
      return true;
    }
  }
  return false;
}

RoundIndex StorageNode::target_round(const UpdateOption& o) {
  if (o.is_commutative()) return o.commutative().round;
  const auto& p = o.physical();
  return p.read_version ? *p.read_version + 1 : p.insert_round;
}

void StorageNode::pump(const Key& key) {
  auto& ms = masters_[key];
  std::erase_if(ms.waiting, [&](const MasterRequest& q) { return answer_known(key, q); });
  if (ms.phase != MasterState::Phase::idle) return;
  auto& rec = store_.record(sim_.now(), key);
  const RoundIndex r = rec.round();
  if (ms.waiting.empty()) return;

  // An option aimed at a later round means this replica lags; deciding it
  // here could reject it in a round it was never meant for.
  for (const auto& q : ms.waiting) {
    if (q.option && target_round(*q.option) > r) {
      request_catchup(key);
      abandon(key, ms, false);
      return;
    }
  }
  const bool comm = rec.kind() == RecordKind::commutative;
  // A chosen commutative round is final (replicas close on it); wait for the
  // close, nudging a lagging local replica.
  if (comm && (rec.decided() || ms.chosen_round == r)) {
    request_catchup(key);
    abandon(key, ms, false);
    return;
  }

  if (prepared(ms, r) && (ms.proposed_round == r || !rec.decided())) {
    propose(key, ms, ms.proposed_round == r ? ms.proposed : CStruct{}, true);
    return;
  }
  start_phase1(key, ms, r);
}

void StorageNode::start_phase1(const Key& key, MasterState& ms, RoundIndex r) {
  auto& rec = store_.record(sim_.now(), key);
  RoundMeta range{r, r, false, {}};
  const auto meta = rec.meta_for(r);
  if (meta && !meta->fast) {
    range.end_round = meta->end_round;
  } else if (std::any_of(ms.waiting.begin(), ms.waiting.end(), [](const auto& q) { return q.conflict; })) {
    std::uint32_t successes = 0;
    if (rec.kind() == RecordKind::physical) {
      successes = r > ms.last_classic_end + 1 ? static_cast<std::uint32_t>(r - ms.last_classic_end - 1) : 0;
    } else {
      for (const auto& e : rec.vote()) successes += e.verdict == Verdict::accept ? 1 : 0;
    }
    ms.policy.gamma = params_.gamma;
    ms.policy.fast_successes = successes;
    const auto step = fast_policy_step(ms.policy, PolicyEvent::conflict);
    range.end_round = r + step.classic_span - 1;
    ms.last_classic_end = *range.end_round;
    event("policy", key + " " + std::to_string(r) + " " + std::to_string(step.classic_span) + " " +
                        std::to_string(successes));
  }
  ms.ballot = Ballot::make_classic(std::max(ms.max_number, ms.ballot.number) + 1, id_);
  ms.max_number = ms.ballot.number;
  range.ballot = ms.ballot;
  ms.range = range;
  ms.round = r;
  ms.p1.clear();
  ms.p1_needed = topo_.quorum.q_classic;
  ms.phase = MasterState::Phase::phase1;
  broadcast(key, Phase1a{key, ms.ballot, range});
  arm_master_timer(key, ms);
}

void StorageNode::on_phase1b(NodeId src, const Phase1b& m) {
  auto it = masters_.find(m.key);
  if (it == masters_.end()) return;
  auto& ms = it->second;
  if (ms.phase != MasterState::Phase::phase1 || m.ballot != ms.ballot) return;
  if (const auto* nack = std::get_if<Nack>(&m.result)) {
    ms.max_number = std::max(ms.max_number, nack->promised.number);
    abandon(m.key, ms, true);
    return;
  }
  const auto& reply = std::get<Phase1bReply>(m.result);
  if (reply.round != ms.round) return;
  if (reply.state == Phase1bReply::State::decided || reply.replica_round > ms.round) {
    // The round closed elsewhere; fetch it before deciding anything.
    sim_.send(id_, src, CatchupRequest{m.key, ms.round});
    abandon(m.key, ms, false);
    return;
  }
  ms.p1[src] = reply;
  if (ms.p1.size() >= ms.p1_needed) finish_phase1(m.key, ms);
}

void StorageNode::finish_phase1(const Key& key, MasterState& ms) {
  auto& rec = store_.record(sim_.now(), key);
  const RoundIndex r = ms.round;
  if (rec.round() != r) {
    // Round r closed locally while the promises came in; they still cover
    // the rest of the range.
    ms.free_from = r + 1;
    ms.range_end = ms.range.end_round;
    ms.phase = MasterState::Phase::idle;
    pump(key);
    return;
  }
  CStruct base;

  std::optional<CStruct> known;
  std::optional<Ballot> top;
  for (const auto& [s, p] : ms.p1) {
    if (p.decided && (!known || p.decided->size() > known->size())) known = p.decided;
    if (p.vote_ballot && !p.vote.empty() && (!top || *p.vote_ballot > *top)) top = p.vote_ballot;
  }

  bool frozen = false;
  if (known) {
    base = *known;
    frozen = true;
  } else if (top && top->classic) {
    frozen = true;
    for (const auto& [s, p] : ms.p1) {
      if (p.vote_ballot == top && p.vote.size() > base.size()) base = p.vote;
    }
  } else if (top) {
    bool collided = false;
    if (rec.kind() == RecordKind::physical) {
      std::vector<Phase1Vote> votes;
      for (const auto& [s, p] : ms.p1) {
        Phase1Vote v{s, p.vote_ballot, std::nullopt};
        if (!p.vote.empty()) v.value = label(p.vote.front());
        votes.push_back(v);
      }
      const auto res = resolve_collision(votes, topo_.quorum);
      if (res.kind == CollisionResult::Kind::must) {
        for (const auto& [s, p] : ms.p1) {
          if (!p.vote.empty() && label(p.vote.front()) == res.value) {
            base = {p.vote.front()};
            break;
          }
        }
      }
      for (const auto& v : votes) collided = collided || (v.value && v.value != votes.front().value);
    } else {
      std::map<TxnId, OptionRef> seen;
      for (const auto& [s, p] : ms.p1) {
        if (p.vote_ballot != top) continue;
        for (const auto& e : p.vote) seen.emplace(e.option->txn, e.option);
      }
      // Fast rejects are never learned, so only a possible fast accept binds:
      // accepts at the top ballot plus silent replicas reach q_fast.
      const auto silent = topo_.n() - static_cast<std::uint32_t>(ms.p1.size());
      std::vector<OptionRef> free;
      for (const auto& [txn, opt] : seen) {
        std::uint32_t accepts = 0;
        for (const auto& [s, p] : ms.p1) {
          if (p.vote_ballot != top) continue;
          if (const Entry* e = find_entry(p.vote, txn); e && e->verdict == Verdict::accept) ++accepts;
        }
        if (accepts + silent >= topo_.quorum.q_fast) {
          base.push_back(Entry{opt, Verdict::accept});
        } else {
          free.push_back(opt);
          collided = true;
        }
      }
      // Each mandated option may have reached a fast quorum on its own, but
      // the replicas' quotas can rule out all of them together. Only more
      // promises tell which; with all n the mandated set fits the bound.
      CStruct fit;
      bool overrun = false;
      for (const auto& e : base) {
        overrun = overrun || (!rec.executed(e.option->txn) && master_verdict(rec, fit, *e.option) == Verdict::reject);
        fit.push_back(e);
      }
      if (overrun && silent > 0) {
        ms.p1_needed = static_cast<std::uint32_t>(ms.p1.size()) + 1;
        event("ambiguous", key + " " + std::to_string(r) + " " + std::to_string(ms.p1_needed));
        return;
      }
      for (const auto& opt : free) base.push_back(Entry{opt, master_verdict(rec, base, *opt)});
    }
    if (collided) event("collision", key + " " + std::to_string(r));
  }

  ms.p1_round = r;
  ms.free_from = r + 1;
  ms.range_end = ms.range.end_round;
  // A classic value found for a commutative round may already be chosen and
  // must be proposed as is; physical rounds only ever gain rejects.
  propose(key, ms, std::move(base), rec.kind() == RecordKind::physical || !frozen);
}

void StorageNode::propose(const Key& key, MasterState& ms, CStruct base, bool extend) {
  auto& rec = store_.record(sim_.now(), key);
  const RoundIndex r = rec.round();
  std::erase_if(ms.waiting, [&](const MasterRequest& q) { return answer_known(key, q); });

  CStruct proposal = std::move(base);
  std::vector<MasterRequest> later;
  for (auto& q : ms.waiting) {
    const bool present = find_entry(proposal, q.txn) != nullptr;
    // A placeholder behind a primary would be a reject nobody else learns
    // of; it waits for a round it can lead.
    const bool deferred = !present && (!extend || (!q.option && rec.kind() == RecordKind::physical &&
                                                   !proposal.empty()));
    if (deferred) {
      later.push_back(std::move(q));
      continue;
    }
    ms.inflight.push_back(std::move(q));
    if (present) continue;
    const auto& qq = ms.inflight.back();
    const OptionRef opt = qq.option ? qq.option : placeholder(qq.txn, key, rec.kind(), r);
    Verdict v = Verdict::reject;
    if (rec.kind() == RecordKind::physical) {
      if (proposal.empty()) {
        if (qq.option) v = rec.validate_option(*qq.option);
      } else {
        event("duallearn", key + " " + std::to_string(r) + " " + std::to_string(qq.txn));
      }
    } else if (qq.option) {
      v = master_verdict(rec, proposal, *qq.option);
    }
    proposal.push_back(Entry{opt, v});
  }
  ms.waiting = std::move(later);
  if (proposal.empty()) {
    ms.phase = MasterState::Phase::idle;
    return;
  }

  ms.proposed = proposal;
  ms.proposed_round = r;
  ms.round = r;
  ms.acks.clear();
  ms.phase = MasterState::Phase::phase2;
  broadcast(key, Phase2a{key, ms.ballot, r, std::move(proposal)});
  arm_master_timer(key, ms);
}

void StorageNode::on_phase2b(NodeId src, const Phase2b& m) {
  auto it = masters_.find(m.key);
  if (it == masters_.end()) return;
  auto& ms = it->second;
  if (ms.phase != MasterState::Phase::phase2 || m.ballot != ms.ballot) return;
  std::visit(overloaded{[&](const Phase2bReply& ok) {
                          if (ok.round != ms.round || ok.accepted_len < ms.proposed.size()) return;
                          ms.acks.insert(src);
                          if (ms.acks.size() >= topo_.quorum.q_classic) chosen(m.key, ms);
                        },
                        [&](const Nack& n) {
                          ms.max_number = std::max(ms.max_number, n.promised.number);
                          abandon(m.key, ms, true);
                        },
                        [&](const Refusal& f) {
                          if (f.reason == Refusal::Reason::behind) {
                            sim_.send(id_, src, Snapshot{m.key, store_.record(sim_.now(), m.key).snapshot()});
                          } else if (f.reason == Refusal::Reason::stale_round) {
                            sim_.send(id_, src, CatchupRequest{m.key, ms.round});
                            abandon(m.key, ms, false);
                          }
                        }},
             m.result);
}

void StorageNode::chosen(const Key& key, MasterState& ms) {
  const RoundIndex r = ms.round;
  ms.chosen_round = r;
  ms.phase = MasterState::Phase::idle;
  ms.retries = 0;
  ++ms.epoch;
  broadcast(key, Chosen{key, r, ms.proposed});
  for (const auto& q : ms.inflight) {
    if (const Entry* e = find_entry(ms.proposed, q.txn)) {
      reply_decided(q, key, r, *e, ms.proposed.front().option->txn == q.txn);
    }
  }
  ms.inflight.clear();
  if (sim_.trace().enabled()) event("chosen", key + " " + std::to_string(r) + " " + std::to_string(ms.proposed.size()));
  pump(key);
}

void StorageNode::abandon(const Key& key, MasterState& ms, bool lost_ballot) {
  for (auto& q : ms.inflight) ms.waiting.push_back(std::move(q));
  ms.inflight.clear();
  if (lost_ballot) {
    ms.ballot = Ballot{};
    ms.p1_round = ms.free_from = ~RoundIndex{0};
    ms.range_end.reset();
    ms.proposed_round = ~RoundIndex{0};
  }
  ms.phase = MasterState::Phase::backoff;
  const auto epoch = ++ms.epoch;
  const SimTime rtt = sim_.max_rtt();
  const SimTime wait = std::uniform_int_distribution<SimTime>(rtt, 2 * rtt)(sim_.rng());
  sim_.set_timer(id_, wait, [this, key, epoch] {
    auto& m2 = masters_[key];
    if (m2.epoch != epoch || m2.phase != MasterState::Phase::backoff) return;
    m2.phase = MasterState::Phase::idle;
    pump(key);
  });
}

void StorageNode::arm_master_timer(const Key& key, MasterState& ms) {
  const auto epoch = ++ms.epoch;
  sim_.set_timer(id_, 2 * sim_.max_rtt(), [this, key, epoch] {
    auto& m2 = masters_[key];
    if (m2.epoch != epoch) return;
    if (++m2.retries > 4) {
      m2.retries = 0;
      abandon(key, m2, true);
      return;
    }
    if (m2.phase == MasterState::Phase::phase1) {
      for (NodeId s : topo_.storage) {
        if (!m2.p1.count(s)) sim_.send(id_, s, Phase1a{key, m2.ballot, m2.range});
      }
    } else if (m2.phase == MasterState::Phase::phase2) {
      for (NodeId s : topo_.storage) {
        if (!m2.acks.count(s)) sim_.send(id_, s, Phase2a{key, m2.ballot, m2.round, m2.proposed});
      }
    } else {
      return;
    }
    arm_master_timer(key, m2);
  });
}

}  // namespace mdcc
