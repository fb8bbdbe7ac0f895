#include "mdcc/observer.hpp"

#include <algorithm>

namespace mdcc {

namespace {

bool within(const UpdateOption& o, const Value& v) {
  if (!o.is_commutative()) return true;
  for (const auto& [attr, c] : o.commutative().constraints) {
    const auto x = v.get(attr);
    if ((c.lo && x < *c.lo) || (c.hi && x > *c.hi)) return false;
  }
  return true;
}

}  // namespace

void Observer::violation(std::uint64_t& counter, std::string what) {
  ++counter;
  if (violations_.size() < 64) violations_.push_back(std::move(what));
}

// Physical rounds are identified by their primary entry; commutative rounds
// by their accepted set (order-free).
std::string Observer::round_value(RecordKind kind, const CStruct& c) {
  if (c.empty()) return "-";
  if (kind == RecordKind::physical) {
    return std::to_string(c.front().option->txn) + ":" + to_string(c.front().verdict);
  }
  std::vector<TxnId> acc;
  for (const auto& e : c) {
    if (e.verdict == Verdict::accept) acc.push_back(e.option->txn);
  }
  std::sort(acc.begin(), acc.end());
  std::string s;
  for (auto t : acc) s += std::to_string(t) + ",";
  return s;
}

void Observer::on_load(const Key& key, const Value& v) { physical_value_[{key, 0}] = v; }

void Observer::on_round_closed(NodeId node, const Key& key, RecordKind kind, RoundIndex r, const CStruct& decided) {
  const auto v = round_value(kind, decided);
  auto [it, fresh] = decided_.emplace(std::make_pair(key, r), v);
  if (!fresh && it->second != v) {
    violation(counts_.divergent, "divergent decision " + key + " round " + std::to_string(r) + " at node " +
                                     std::to_string(node) + ": " + it->second + " vs " + v);
  }
  for (const auto& e : decided) {
    if (kind == RecordKind::physical && &e != &decided.front()) break;
    on_learned_verdict(key, r, e.option->txn, e.verdict);
  }
}

void Observer::on_execute(NodeId node, const Key& key, RecordKind kind, const Version& v, const OptionRef& option) {
  if (kind == RecordKind::physical) {
    auto [it, fresh] = physical_value_.emplace(std::make_pair(key, v.index), v.value);
    if (!fresh && !(it->second == v.value)) {
      violation(counts_.divergent,
                "divergent version " + key + "@" + std::to_string(v.index) + " at node " + std::to_string(node));
    }
  }
  if (v.committed_by == 0 || !option) return;
  ++commits_;
  if (kind == RecordKind::physical) {
    const auto& p = option->physical();
    const std::uint64_t slot = p.read_version ? *p.read_version + 1 : 0;
    auto [it, fresh] = physical_commit_.emplace(std::make_pair(key, slot), v.committed_by);
    if (!fresh && it->second != v.committed_by) {
      violation(counts_.dual_commits, "dual commit on " + key + " from read " + std::to_string(slot) + ": txn " +
                                          std::to_string(it->second) + " and " + std::to_string(v.committed_by));
    }
  } else if (!within(*option, v.value)) {
    violation(counts_.bound_breaks, "bound broken on " + key + " by txn " + std::to_string(v.committed_by) +
                                        " at node " + std::to_string(node));
  }
}

void Observer::on_learned_verdict(const Key& key, RoundIndex, TxnId txn, Verdict v) {
  auto [it, fresh] = verdict_.emplace(std::make_pair(key, txn), v);
  if (!fresh && it->second != v) {
    violation(counts_.verdict_splits, "txn " + std::to_string(txn) + " learned both ways on " + key);
  }
}

void Observer::on_outcome(TxnId txn, Decision d) {
  auto [it, fresh] = outcome_.emplace(txn, d);
  if (!fresh && it->second != d) violation(counts_.outcome_splits, "txn " + std::to_string(txn) + " outcome split");
}

void Observer::on_read(const Key& key, RecordKind kind, const ReadReply& reply) {
  if (!reply.found) return;
  const auto& v = reply.version;
  if (kind == RecordKind::physical) {
    auto it = physical_value_.find({key, v.index});
    if (it == physical_value_.end() || !(it->second == v.value)) {
      violation(counts_.dirty_reads, "read of unexecuted value " + key + "@" + std::to_string(v.index));
    }
  }
  if (v.committed_by != 0) reads_of_.emplace_back(key, v.committed_by);
}

void Observer::on_plain_commit(const Key& key, const Value& v, const OptionRef& option) {
  ++commits_;
  if (option && !within(*option, v)) {
    violation(counts_.bound_breaks, "bound broken on " + key + " by txn " + std::to_string(option->txn));
  }
}

void Observer::on_qw_ack(const Key& key, std::uint64_t read_version, TxnId txn) {
  auto& s = qw_[{key, read_version}];
  if (s.insert(txn).second && s.size() > 1) ++counts_.lost_updates;
}

void Observer::finish() {
  for (const auto& [key, txn] : reads_of_) {
    auto it = outcome_.find(txn);
    if (it != outcome_.end() && it->second != Decision::commit) {
      violation(counts_.dirty_reads, "read of " + key + " written by aborted txn " + std::to_string(txn));
    }
  }
  reads_of_.clear();
}

}  // namespace mdcc
