#include "mdcc/storage_node.hpp"

#include <algorithm>
#include <stdexcept>

namespace mdcc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::mdcc_classic: return "mdcc-classic";
    case Protocol::mdcc_fast_noncomm: return "mdcc-fast-noncomm";
    case Protocol::mdcc_fast_comm: return "mdcc-fast-comm";
    case Protocol::twopc: return "2pc";
    case Protocol::qw3: return "qw3";
    case Protocol::qw4: return "qw4";
  }
  return "?";
}

Protocol parse_protocol(const std::string& s) {
  for (auto p : {Protocol::mdcc_classic, Protocol::mdcc_fast_noncomm, Protocol::mdcc_fast_comm, Protocol::twopc,
                 Protocol::qw3, Protocol::qw4}) {
    if (s == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown protocol '" + s + "'");
}

std::uint32_t Topology::replica_index(NodeId id) const {
  auto it = std::find(storage.begin(), storage.end(), id);
  if (it == storage.end()) throw std::invalid_argument("not a storage node");
  return static_cast<std::uint32_t>(it - storage.begin());
}

NodeId Topology::local_storage(std::uint32_t dc) const {
  for (std::size_t i = 0; i < storage.size(); ++i) {
    if (storage_dc[i] == dc) return storage[i];
  }
  return storage.front();
}

StorageNode::StorageNode(NodeId id, Simulator& sim, Observer& obs, const Topology& topo, const ProtocolParams& params)
    : id_(id),
      sim_(sim),
      obs_(obs),
      topo_(topo),
      params_(params),
      index_(topo.replica_index(id)),
      recovery_timeout_(params.recovery_timeout > 0 ? params.recovery_timeout
                                                    : 4 * sim.max_rtt() + index_ * sim.max_rtt()),
      store_(topo.quorum, params.kind_of, params.demarcation) {
  store_.set_logging(params.option_log);
}

void StorageNode::event(std::string_view kind, const std::string& args) {
  sim_.trace().event(sim_.now(), id_, kind, args);
}

void StorageNode::preload(const Key& key, const Value& v) {
  store_.load(sim_.now(), key, v);
  auto& row = plain_[key];
  row.value = v;
  row.absent = v.tombstone;
}

void StorageNode::bootstrap_master(const Key& key) {
  auto& ms = masters_[key];
  ms.ballot = Ballot::make_classic(1, id_);
  ms.max_number = 1;
  ms.free_from = 0;
  ms.range_end.reset();
}

void StorageNode::accept_bootstrap(const Key& key, NodeId master) {
  store_.install_meta(sim_.now(), key, RoundMeta{0, std::nullopt, false, Ballot::make_classic(1, master)});
}

void StorageNode::start() {
  sim_.set_timer(id_, sim_.max_rtt() / 2, [this] { recovery_tick(); });
}

void StorageNode::broadcast(const Key&, const Message& m) {
  for (NodeId s : topo_.storage) sim_.send(id_, s, m);
}

void StorageNode::deliver(NodeId src, const Message& m) {
  std::visit(overloaded{
                 [&](const FastPropose& x) { on_fast(src, x); },
                 [&](const ClassicRequest& x) { on_request(src, x); },
                 [&](const Learned& x) { on_learned(x); },
                 [&](const Phase1a& x) { on_phase1a(src, x); },
                 [&](const Phase1b& x) { on_phase1b(src, x); },
                 [&](const Phase2a& x) { on_phase2a(src, x); },
                 [&](const Phase2b& x) { on_phase2b(src, x); },
                 [&](const Chosen& x) { on_chosen(x); },
                 [&](const CatchupRequest& x) { on_catchup(src, x); },
                 [&](const Snapshot& x) { on_snapshot(x); },
                 [&](const Decided& x) { on_decided(x); },
                 [&](const ReadRequest& x) { on_read(src, x); },
                 [&](const TpcRequest& x) { on_tpc_request(src, x); },
                 [&](const TpcPrepare& x) { on_tpc_prepare(src, x); },
                 [&](const TpcVote& x) { on_tpc_vote(src, x); },
                 [&](const TpcFinish& x) { on_tpc_finish(src, x); },
                 [&](const TpcAck& x) { on_tpc_ack(src, x); },
                 [&](const QwWrite& x) { on_qw_write(src, x); },
                 [&](const auto&) {},
             },
             m);
}

// --- replica side -------------------------------------------------------------

void StorageNode::on_fast(NodeId src, const FastPropose& m) {
  const auto& key = m.option->key;
  const auto res = store_.fast(sim_.now(), m.option);
  Vote v;
  v.key = key;
  v.txn = m.option->txn;
  std::visit(overloaded{[&](const Phase2bReply& ok) {
                          v.round = ok.round;
                          v.verdict = ok.verdict;
                          v.decided = ok.decided;
                        },
                        [&](const Refusal& f) {
                          v.round = f.round;
                          v.refusal = f.reason;
                          if (f.meta) v.master = f.meta->ballot.server;
                        }},
             res);
  sim_.send(id_, src, v);
  if (v.refusal == Refusal::Reason::behind) request_catchup(key);
  after_update(key, {});
}

void StorageNode::on_phase1a(NodeId src, const Phase1a& m) {
  auto res = store_.phase1a(sim_.now(), m.key, m.ballot, m.range);
  sim_.send(id_, src, Phase1b{m.key, m.ballot, std::move(res)});
  after_update(m.key, {});
}

void StorageNode::on_phase2a(NodeId src, const Phase2a& m) {
  auto res = store_.phase2a(sim_.now(), m.key, m.ballot, m.round, m.value);
  const auto* ref = std::get_if<Refusal>(&res);
  const bool behind = ref && ref->reason == Refusal::Reason::behind;
  sim_.send(id_, src, Phase2b{m.key, m.ballot, std::move(res)});
  if (behind) request_catchup(m.key);
  after_update(m.key, {});
}

void StorageNode::on_learned(const Learned& m) {
  const auto r = store_.learned(sim_.now(), m.key, m.round, m.entry, m.decision, m.primary);
  after_update(m.key, r);
}

void StorageNode::on_chosen(const Chosen& m) {
  const auto r = store_.chosen(sim_.now(), m.key, m.round, m.value);
  after_update(m.key, r);
}

void StorageNode::on_catchup(NodeId src, const CatchupRequest& m) {
  const auto* rec = store_.find(m.key);
  if (rec && rec->round() > m.have) sim_.send(id_, src, Snapshot{m.key, rec->snapshot()});
}

void StorageNode::on_snapshot(const Snapshot& m) {
  const auto* rec = store_.find(m.key);
  if (rec && m.snap.round <= rec->round()) return;
  const auto r = store_.snapshot(sim_.now(), m.key, m.snap);
  event("catchup", m.key + " " + std::to_string(m.snap.round));
  after_update(m.key, r);
}

void StorageNode::on_read(NodeId src, const ReadRequest& m) {
  ReadReply reply;
  reply.req = m.req;
  reply.key = m.key;
  if (m.store == Store::plain) {
    auto it = plain_.find(m.key);
    if (it != plain_.end() && !it->second.absent) {
      reply.found = true;
      reply.version = Version{it->second.version, it->second.value, false, 0};
    }
  } else if (const auto* rec = store_.find(m.key)) {
    reply.round = rec->round();
    if (!rec->absent()) {
      reply.found = true;
      reply.version = *rec->latest();
    }
    obs_.on_read(m.key, rec->kind(), reply);
  }
  sim_.send(id_, src, reply);
}

void StorageNode::after_update(const Key& key, const LearnResult& r) {
  const auto* rec = store_.find(key);
  if (!rec) return;
  for (std::size_t i = 0; i < r.executed.size(); ++i) {
    const auto& v = r.executed[i];
    const auto& opt = r.executed_options[i];
    obs_.on_execute(id_, key, rec->kind(), v, opt);
    if (v.committed_by != 0 && opt && opt->remote_callback) {
      store_.note(sim_.now(), key, v.committed_by, "remote_callback");
      event("remote_callback", std::to_string(v.committed_by));
    }
  }
  for (std::size_t i = 0; i < r.closed.size(); ++i) {
    const RoundIndex c = r.closed[i];
    const bool classic = r.closed_modes[i] == RoundMode::classic;
    obs_.on_round_closed(id_, key, rec->kind(), c, rec->history()[c]);
    if (sim_.trace().enabled()) event("round", key + " " + std::to_string(c) + (classic ? " classic" : " fast"));
    if (classic) {
      if (auto it = masters_.find(key); it != masters_.end()) fast_policy_step(it->second.policy, PolicyEvent::classic_done);
    }
  }
  if (r.buffered) request_catchup(key);
  if (rec->outstanding().empty()) {
    watch_.erase(key);
  } else {
    watch_.insert(key);
  }
  if (r.applied && masters_.count(key)) pump(key);
}

void StorageNode::request_catchup(const Key& key) {
  auto& until = catchup_until_[key];
  if (sim_.now() < until) return;
  until = sim_.now() + sim_.max_rtt();
  const auto* rec = store_.find(key);
  const RoundIndex have = rec ? rec->round() : 0;
  for (NodeId s : topo_.storage) {
    if (s != id_) sim_.send(id_, s, CatchupRequest{key, have});
  }
}

// --- recovery -----------------------------------------------------------------

void StorageNode::recovery_tick() {
  const SimTime now = sim_.now();
  std::vector<OptionRef> due;
  for (const auto& key : watch_) {
    for (const auto& [opt, since] : store_.find(key)->outstanding()) {
      if (now - since < recovery_timeout_ || recovering_.count(opt->txn)) continue;
      auto it = recovered_at_.find(opt->txn);
      if (it != recovered_at_.end() && now - it->second < recovery_timeout_) continue;
      due.push_back(opt);
    }
  }
  for (const auto& opt : due) {
    if (!recovering_.count(opt->txn)) start_recovery(opt);
  }
  sim_.set_timer(id_, sim_.max_rtt() / 2, [this] { recovery_tick(); });
}

void StorageNode::start_recovery(const OptionRef& option) {
  Recovery rc;
  rc.txn = option->txn;
  rc.keys = option->writeset;
  for (const auto& key : rc.keys) {
    if (key == option->key) {
      rc.known[key] = option;
      continue;
    }
    // Full replication: this node may hold the sibling option too.
    if (const auto* rec = store_.find(key)) {
      if (const Entry* e = find_entry(rec->vote(), option->txn)) rc.known[key] = e->option;
    }
  }
  ++recoveries_;
  event("recover_start", std::to_string(rc.txn) + " " + option->key);
  recovering_[rc.txn] = std::move(rc);
  send_resolves(option->txn);
}

void StorageNode::send_resolves(TxnId txn) {
  auto it = recovering_.find(txn);
  if (it == recovering_.end()) return;
  auto& rc = it->second;
  if (rc.attempt > 3 * topo_.n()) {
    recovering_.erase(it);  // the next tick starts over
    return;
  }
  for (const auto& key : rc.keys) {
    if (rc.got.count(key)) continue;
    auto k = rc.known.find(key);
    sim_.send(id_, topo_.master_for(key, rc.attempt / 2),
              ClassicRequest{key, txn, k == rc.known.end() ? nullptr : k->second, false});
  }
  sim_.set_timer(id_, 3 * sim_.max_rtt(), [this, txn, attempt = rc.attempt] {
    auto it2 = recovering_.find(txn);
    if (it2 == recovering_.end() || it2->second.attempt != attempt) return;
    ++it2->second.attempt;
    send_resolves(txn);
  });
}

void StorageNode::on_decided(const Decided& m) {
  auto it = recovering_.find(m.txn);
  if (it == recovering_.end()) return;
  auto& rc = it->second;
  rc.got.emplace(m.key, m);
  obs_.on_learned_verdict(m.key, m.round, m.txn, m.entry.verdict);
  if (rc.got.size() < rc.keys.size()) return;
  bool commit = true;
  for (const auto& [k, d] : rc.got) commit = commit && d.entry.verdict == Verdict::accept;
  const Decision decision = commit ? Decision::commit : Decision::abort;
  for (const auto& [k, d] : rc.got) broadcast(k, Learned{k, d.round, d.entry, decision, d.primary});
  obs_.on_outcome(m.txn, decision);
  event("recover", std::to_string(m.txn) + " " + to_string(decision));
  recovered_at_[m.txn] = sim_.now();
  recovering_.erase(it);
}

}  // namespace mdcc
