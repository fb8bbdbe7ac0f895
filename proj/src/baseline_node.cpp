#include "mdcc/storage_node.hpp"

namespace mdcc {

namespace {

bool plain_valid(const PlainRow& row, const UpdateOption& o) {
  if (o.is_commutative()) {
    const auto& c = o.commutative();
    for (const auto& [attr, lim] : c.constraints) {
      const auto it = c.deltas.find(attr);
      const std::int64_t after = row.value.get(attr) + (it == c.deltas.end() ? 0 : it->second);
      if ((lim.lo && after < *lim.lo) || (lim.hi && after > *lim.hi)) return false;
    }
    return !row.absent;
  }
  const auto& p = o.physical();
  if (!p.read_version) return row.absent;
  return !row.absent && *p.read_version == row.version;
}

void plain_apply(PlainRow& row, const UpdateOption& o) {
  if (o.is_commutative()) {
    for (const auto& [attr, d] : o.commutative().deltas) row.value.attrs[attr] += d;
  } else {
    row.value = o.physical().write_value;
    row.absent = row.value.tombstone;
  }
  ++row.version;
}

}  // namespace

// 2PC: the client's local storage node coordinates; every replica of every
// written key is a participant and locks the row until the outcome arrives.
void StorageNode::on_tpc_request(NodeId src, const TpcRequest& m) {
  if (tpc_.count(m.txn)) return;
  auto& c = tpc_[m.txn];
  c.client = src;
  c.options = m.options;
  for (const auto& o : c.options) {
    for (NodeId s : topo_.storage) sim_.send(id_, s, TpcPrepare{m.txn, o});
  }
  const auto txn = m.txn;
  sim_.set_timer(id_, 2 * sim_.max_rtt(), [this, txn] { tpc_resend(txn); });
}

void StorageNode::tpc_resend(TxnId txn) {
  auto it = tpc_.find(txn);
  if (it == tpc_.end()) return;
  auto& c = it->second;
  for (const auto& o : c.options) {
    for (NodeId s : topo_.storage) {
      const auto slot = std::make_pair(o->key, s);
      if (!c.deciding && !c.votes.count(slot)) sim_.send(id_, s, TpcPrepare{txn, o});
      if (c.deciding && !c.acks.count(slot)) sim_.send(id_, s, TpcFinish{txn, o->key, c.commit});
    }
  }
  sim_.set_timer(id_, 2 * sim_.max_rtt(), [this, txn] { tpc_resend(txn); });
}

void StorageNode::on_tpc_prepare(NodeId src, const TpcPrepare& m) {
  const auto slot = std::make_pair(m.txn, m.option->key);
  auto seen = tpc_votes_.find(slot);
  if (seen == tpc_votes_.end()) {
    auto& row = plain_[m.option->key];
    const bool yes = (row.lock == 0 || row.lock == m.txn) && plain_valid(row, *m.option);
    if (yes) {
      row.lock = m.txn;
      row.staged = m.option;
    }
    seen = tpc_votes_.emplace(slot, yes).first;
  }
  sim_.send(id_, src, TpcVote{m.txn, m.option->key, seen->second});
}

void StorageNode::on_tpc_vote(NodeId src, const TpcVote& m) {
  auto it = tpc_.find(m.txn);
  if (it == tpc_.end()) return;
  auto& c = it->second;
  if (c.deciding) return;
  c.votes[{m.key, src}] = m.yes;
  if (c.votes.size() < c.options.size() * topo_.n()) return;
  c.deciding = true;
  c.commit = true;
  for (const auto& [slot, yes] : c.votes) c.commit = c.commit && yes;
  for (const auto& o : c.options) {
    for (NodeId s : topo_.storage) sim_.send(id_, s, TpcFinish{m.txn, o->key, c.commit});
  }
}

void StorageNode::on_tpc_finish(NodeId src, const TpcFinish& m) {
  auto& row = plain_[m.key];
  if (row.lock == m.txn) {
    if (m.commit && row.staged) {
      plain_apply(row, *row.staged);
      obs_.on_plain_commit(m.key, row.value, row.staged);
    }
    row.lock = 0;
    row.staged.reset();
  }
  sim_.send(id_, src, TpcAck{m.txn, m.key});
}

void StorageNode::on_tpc_ack(NodeId src, const TpcAck& m) {
  auto it = tpc_.find(m.txn);
  if (it == tpc_.end() || !it->second.deciding) return;
  auto& c = it->second;
  c.acks.insert({m.key, src});
  if (c.acks.size() < c.options.size() * topo_.n()) return;
  sim_.send(id_, c.client, TpcReply{m.txn, c.commit});
  tpc_.erase(it);
}

// Quorum writes: last writer wins on (version, writer); no validation.
void StorageNode::on_qw_write(NodeId src, const QwWrite& m) {
  auto& row = plain_[m.key];
  if (std::make_pair(m.version, m.writer) > std::make_pair(row.version, row.writer)) {
    row.value = m.value;
    row.absent = m.value.tombstone;
    row.version = m.version;
    row.writer = m.writer;
  }
  sim_.send(id_, src, QwAck{m.txn, m.key});
}

}  // namespace mdcc
