#include "mdcc/app_server.hpp"

#include <algorithm>

namespace mdcc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

bool is_qw(Protocol p) { return p == Protocol::qw3 || p == Protocol::qw4; }

}  // namespace

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::pending: return "pending";
    case Outcome::committed: return "committed";
    case Outcome::aborted: return "aborted";
    case Outcome::unknown: return "unknown";
  }
  return "?";
}

AppServer::AppServer(NodeId id, Simulator& sim, Observer& obs, const Topology& topo, const ProtocolParams& params)
    : id_(id), sim_(sim), obs_(obs), topo_(topo), params_(params), local_(topo.local_storage(sim.dc_of(id))) {}

void AppServer::event(std::string_view kind, const std::string& args) {
  sim_.trace().event(sim_.now(), id_, kind, args);
}

const TxnHandle* AppServer::handle(TxnId txn) const {
  auto it = txns_.find(txn);
  return it == txns_.end() ? nullptr : &it->second.h;
}

TxnId AppServer::commit(std::vector<TxnUpdate> updates, SimTime slo, Stages stages) {
  const TxnId txn = (static_cast<TxnId>(id_) << 32) | next_txn_++;
  auto& t = txns_[txn];
  t.h.txn = txn;
  t.stages = std::move(stages);
  t.h.slo_deadline = slo > 0 ? sim_.now() + slo : 0;

  std::vector<Key> writeset;
  for (const auto& u : updates) writeset.push_back(u.key);
  for (auto& u : updates) {
    UpdateOption o;
    o.txn = txn;
    o.key = u.key;
    o.update = std::move(u.update);
    o.writeset = writeset;
    o.coordinator = id_;
    o.remote_callback = t.stages.finally_remote;
    auto ref = std::make_shared<const UpdateOption>(std::move(o));
    t.h.write_set.push_back(ref);
    t.h.per_key_status[ref->key] = KeyStatus::unsent;
    t.keys[ref->key].option = ref;
  }

  event("begin", std::to_string(txn) + " " + to_string(params_.protocol));
  if (t.h.slo_deadline > 0) sim_.set_timer(id_, slo, [this, txn] { at_deadline(txn); });
  if (t.keys.empty()) {
    decide(t, Decision::commit);
    txns_.erase(txn);
    return txn;
  }
  event("propose", std::to_string(txn));

  const auto p = params_.protocol;
  if (p == Protocol::twopc) {
    sim_.send(id_, local_, TpcRequest{txn, t.h.write_set});
  } else if (is_qw(p)) {
    for (const auto& o : t.h.write_set) {
      const auto& pu = o->physical();
      QwWrite w{txn, o->key, pu.write_value, pu.read_version.value_or(0) + 1, id_};
      for (NodeId s : topo_.storage) sim_.send(id_, s, w);
    }
  } else {
    for (auto& [key, ks] : t.keys) {
      t.h.per_key_status[key] = KeyStatus::proposed;
      if (p == Protocol::mdcc_classic) {
        send_classic(t, ks, topo_.master_for(key, 0));
      } else {
        propose_fast(t, ks);
      }
    }
  }
  return txn;
}

// --- MDCC -----------------------------------------------------------------------

void AppServer::propose_fast(Txn& t, KeyState& ks) {
  for (NodeId s : topo_.storage) sim_.send(id_, s, FastPropose{ks.option});
  // The fast round gives up after one round trip to the farthest replica.
  arm_key_timer(t.h.txn, ks.option->key, 2 * sim_.max_rtt());
}

void AppServer::send_classic(Txn& t, KeyState& ks, NodeId master) {
  if (ks.conflict && !ks.classic) ++t.conflicts;
  ks.classic = true;
  ks.master = master;
  sim_.send(id_, master, ClassicRequest{ks.option->key, t.h.txn, ks.option, ks.conflict});
  arm_key_timer(t.h.txn, ks.option->key, 4 * sim_.max_rtt());
}

void AppServer::arm_key_timer(TxnId txn, const Key& key, SimTime delay) {
  auto& ks = txns_.at(txn).keys.at(key);
  const auto epoch = ++ks.epoch;
  sim_.set_timer(id_, delay, [this, txn, key, epoch] {
    auto it = txns_.find(txn);
    if (it == txns_.end()) return;
    auto& t = it->second;
    auto& k = t.keys.at(key);
    if (k.learned || k.epoch != epoch) return;
    if (k.classic) ++k.attempt;
    send_classic(t, k, topo_.master_for(key, k.attempt));
  });
}

void AppServer::on_vote(NodeId src, const Vote& v) {
  auto it = txns_.find(v.txn);
  if (it == txns_.end()) return;
  auto& t = it->second;
  auto kit = t.keys.find(v.key);
  if (kit == t.keys.end() || kit->second.learned) return;
  auto& ks = kit->second;
  if (v.verdict) {
    saw_2b(t);
    if (t.finished) return;
    if (v.decided) {
      learn(t, ks, v.round, Entry{ks.option, *v.verdict}, *v.verdict == Verdict::accept, false);
      return;
    }
  }
  ks.votes[src] = v;
  if (v.refusal == Refusal::Reason::classic_round && !ks.classic) {
    send_classic(t, ks, v.master != kNilServer ? static_cast<NodeId>(v.master) : topo_.master_for(v.key, 0));
    return;
  }
  tally(t, ks);
}

void AppServer::tally(Txn& t, KeyState& ks) {
  const bool comm = params_.kind_of(ks.option->key) == RecordKind::commutative;
  std::map<std::pair<RoundIndex, Verdict>, std::uint32_t> groups;
  for (const auto& [s, v] : ks.votes) {
    if (v.verdict) ++groups[{v.round, *v.verdict}];
  }
  std::uint32_t best = 0;
  for (const auto& [g, c] : groups) {
    // A commutative reject is an exhausted local quota; only a classic
    // round can re-base it, so fast rejects are never learned.
    if (comm && g.second == Verdict::reject) continue;
    if (c >= topo_.quorum.q_fast) {
      learn(t, ks, g.first, Entry{ks.option, g.second}, true, false);
      return;
    }
    best = std::max(best, c);
  }
  const auto missing = topo_.n() - static_cast<std::uint32_t>(ks.votes.size());
  if (!ks.classic && best + missing < topo_.quorum.q_fast) {
    ks.conflict = true;
    send_classic(t, ks, topo_.master_for(ks.option->key, 0));
  }
}

void AppServer::on_decided(const Decided& d) {
  auto it = txns_.find(d.txn);
  if (it == txns_.end()) return;
  auto& t = it->second;
  auto kit = t.keys.find(d.key);
  if (kit == t.keys.end() || kit->second.learned) return;
  saw_2b(t);
  if (t.finished) return;
  learn(t, kit->second, d.round, d.entry, d.primary, true);
}

void AppServer::learn(Txn& t, KeyState& ks, RoundIndex round, const Entry& e, bool primary, bool classic) {
  ks.learned = true;
  ks.round = round;
  ks.entry = Entry{ks.option, e.verdict};
  ks.primary = primary;
  ks.via_classic = classic;
  ++ks.epoch;
  t.h.per_key_status[ks.option->key] =
      e.verdict == Verdict::accept ? KeyStatus::learned_accept : KeyStatus::learned_reject;
  obs_.on_learned_verdict(ks.option->key, round, t.h.txn, e.verdict);
  if (sim_.trace().enabled()) {
    event("learn", std::to_string(t.h.txn) + " " + ks.option->key + " " + std::to_string(round) + " " +
                       to_string(e.verdict) + (classic ? " classic" : " fast"));
  }
  maybe_decide(t);
}

void AppServer::maybe_decide(Txn& t) {
  bool commit = true;
  for (const auto& [k, ks] : t.keys) {
    if (!ks.learned) return;
    commit = commit && ks.entry.verdict == Verdict::accept;
  }
  decide(t, commit ? Decision::commit : Decision::abort);
}

void AppServer::decide(Txn& t, Decision d) {
  if (t.finished) return;
  t.finished = true;
  t.h.outcome = d == Decision::commit ? Outcome::committed : Outcome::aborted;
  const bool mdcc = is_mdcc(params_.protocol);
  bool any_fast = false, any_classic = false;
  for (const auto& [key, ks] : t.keys) {
    (ks.via_classic ? any_classic : any_fast) = true;
    if (mdcc) {
      const Learned l{key, ks.round, ks.entry, d, ks.primary};
      for (NodeId s : topo_.storage) sim_.send(id_, s, l);
    }
  }
  const char* mode = !mdcc ? to_string(params_.protocol)
                     : any_fast && any_classic ? "mixed"
                     : any_classic             ? "classic"
                                               : "fast";
  event("decide", std::to_string(t.h.txn) + " " + to_string(d) + " " + mode + " " + std::to_string(t.conflicts));
  obs_.on_outcome(t.h.txn, d);

  const bool late = t.h.slo_deadline > 0 && sim_.now() > t.h.slo_deadline;
  const bool success = d == Decision::commit;
  if (!late && !t.stage_fired && t.stages.on_commit) {
    t.stage_fired = true;
    event("stage", std::to_string(t.h.txn) + " commit");
    t.stages.on_commit(t.h.txn, success);
  }
  if (t.stages.finally) t.stages.finally(t.h.txn, success, late);
}

void AppServer::saw_2b(Txn& t) {
  if (t.any_2b) return;
  t.any_2b = true;
  for (auto& [k, s] : t.h.per_key_status) {
    if (s == KeyStatus::proposed) s = KeyStatus::phase2b_seen;
  }
  if (t.stages.on_accept && !t.stages.on_commit && !t.stage_fired) {
    t.stage_fired = true;
    event("stage", std::to_string(t.h.txn) + " accept");
    t.stages.on_accept(t.h.txn);
  }
}

void AppServer::at_deadline(TxnId txn) {
  auto it = txns_.find(txn);
  if (it == txns_.end()) return;
  auto& t = it->second;
  if (t.stage_fired) return;
  t.stage_fired = true;
  if (t.any_2b && t.stages.on_accept) {
    event("stage", std::to_string(txn) + " accept");
    t.stages.on_accept(txn);
  } else {
    event("stage", std::to_string(txn) + " failure");
    if (t.stages.on_failure) t.stages.on_failure(txn);
  }
}

// --- baselines --------------------------------------------------------------------

void AppServer::on_tpc_reply(const TpcReply& r) {
  auto it = txns_.find(r.txn);
  if (it == txns_.end()) return;
  auto& t = it->second;
  saw_2b(t);
  for (auto& [key, ks] : t.keys) {
    ks.learned = true;
    ks.entry = Entry{ks.option, r.commit ? Verdict::accept : Verdict::reject};
  }
  decide(t, r.commit ? Decision::commit : Decision::abort);
}

void AppServer::on_qw_ack(NodeId src, const QwAck& a) {
  auto it = txns_.find(a.txn);
  if (it == txns_.end()) return;
  auto& t = it->second;
  auto kit = t.keys.find(a.key);
  if (kit == t.keys.end() || kit->second.learned) return;
  auto& ks = kit->second;
  saw_2b(t);
  ks.acks.insert(src);
  const std::uint32_t q = params_.protocol == Protocol::qw3 ? 3 : 4;
  if (ks.acks.size() < std::min(q, topo_.n())) return;
  ks.learned = true;
  ks.entry = Entry{ks.option, Verdict::accept};
  const auto& rv = ks.option->physical().read_version;
  obs_.on_qw_ack(a.key, rv ? *rv + 1 : 0, a.txn);
  maybe_decide(t);
}

void AppServer::deliver(NodeId src, const Message& m) {
  std::visit(overloaded{[&](const Vote& x) { on_vote(src, x); },
                        [&](const Decided& x) { on_decided(x); },
                        [&](const TpcReply& x) { on_tpc_reply(x); },
                        [&](const QwAck& x) { on_qw_ack(src, x); },
                        [&](const ReadReply& x) { on_read_reply(src, x); },
                        [&](const auto&) {}},
             m);
  std::erase_if(txns_, [](const auto& kv) { return kv.second.finished; });
}

}  // namespace mdcc
