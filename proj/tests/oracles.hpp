#pragma once

// Brute-force models shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <bit>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "mdcc/collision.hpp"
#include "mdcc/replica.hpp"

namespace oracle {

using namespace mdcc;

// Could some fast quorum have accepted `v` at the highest ballot reported?
// Enumerates every q_fast subset of the n replicas; a non-responder is
// assumed to have voted for anything.
inline bool possibly_chosen(const std::vector<Phase1Vote>& rs, const QuorumSpec& q, const std::string& v) {
  std::optional<Ballot> top;
  for (const auto& r : rs) {
    if (r.ballot && r.value && (!top || *r.ballot > *top)) top = r.ballot;
  }
  if (!top) return false;
  std::map<ServerId, const Phase1Vote*> by_server;
  for (const auto& r : rs) by_server[r.server] = &r;
  for (std::uint32_t m = 0; m < (1u << q.n); ++m) {
    if (static_cast<std::uint32_t>(std::popcount(m)) != q.q_fast) continue;
    bool all = true;
    for (std::uint32_t s = 1; s <= q.n && all; ++s) {
      if (!(m & (1u << (s - 1)))) continue;
      auto it = by_server.find(s);
      if (it == by_server.end()) continue;
      const auto& r = *it->second;
      all = r.ballot == top && r.value == v;
    }
    if (all) return true;
  }
  return false;
}

// Every response multiset over replicas 1..n with `responders` answers,
// values drawn from `values` (or none) and ballots 0..max_ballot.
template <class Fn>
void for_each_response_set(std::uint32_t n, std::uint32_t responders, const std::vector<std::string>& values,
                           std::uint32_t max_ballot, bool classic_too, Fn&& fn) {
  const std::uint32_t per = 1 + static_cast<std::uint32_t>(values.size()) * (max_ballot + 1) * (classic_too ? 2 : 1);
  for (std::uint32_t set = 0; set < (1u << n); ++set) {
    if (static_cast<std::uint32_t>(std::popcount(set)) != responders) continue;
    std::vector<ServerId> who;
    for (std::uint32_t s = 0; s < n; ++s) {
      if (set & (1u << s)) who.push_back(s + 1);
    }
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < who.size(); ++i) total *= per;
    for (std::uint64_t code = 0; code < total; ++code) {
      std::vector<Phase1Vote> rs;
      std::uint64_t c = code;
      for (ServerId s : who) {
        std::uint32_t x = static_cast<std::uint32_t>(c % per);
        c /= per;
        Phase1Vote v{s, std::nullopt, std::nullopt};
        if (x > 0) {
          --x;
          const auto vi = x % values.size();
          x /= static_cast<std::uint32_t>(values.size());
          const std::uint32_t b = x % (max_ballot + 1);
          const bool cl = classic_too && x / (max_ballot + 1) == 1;
          v.ballot = cl ? Ballot::make_classic(b, 1) : Ballot::make_fast(b, 0);
          v.value = values[vi];
        }
        rs.push_back(v);
      }
      fn(rs);
    }
  }
}

struct CollisionVerdict {
  bool ok = true;
  std::string why;
};

// Checks a fast-top result: a value some fast quorum may have chosen must be
// mandated, and anything mandated must be a top-ballot value backed by at
// least q_fast + q_classic - n responders (the intersection rule).
inline CollisionVerdict check_collision(const std::vector<Phase1Vote>& rs, const QuorumSpec& q,
                                        const CollisionResult& got) {
  std::optional<Ballot> top;
  for (const auto& r : rs) {
    if (r.ballot && r.value && (!top || *r.ballot > *top)) top = r.ballot;
  }
  std::map<std::string, std::uint32_t> at_top;
  for (const auto& r : rs) {
    if (top && r.ballot == top && r.value) ++at_top[*r.value];
  }
  for (const auto& [v, c] : at_top) {
    if (possibly_chosen(rs, q, v) && (got.kind != CollisionResult::Kind::must || got.value != v)) {
      return {false, "possibly chosen " + v + " not mandated"};
    }
  }
  if (got.kind == CollisionResult::Kind::must) {
    auto it = at_top.find(got.value);
    if (it == at_top.end()) return {false, "mandated value not voted at the top ballot"};
    if (it->second < q.fast_classic_overlap()) return {false, "mandated value lacks intersection support"};
  }
  return {};
}

// Demarcation under adversarial delivery: k unit-decrement options on one
// commutative record with stock X, each replica seeing its own arrival
// order. A replica's accepted set depends only on that order, so per replica
// the distinct sets over all k! orders are collected by running the real
// acceptor; then every combination across replicas is checked. An option is
// learned accepted when q_fast replicas accepted it, and every learned
// option commits (the worst case for the bound).
struct DemarcationReport {
  std::uint64_t schedules = 0;  // combinations of per-replica accepted sets
  std::uint64_t violations = 0;
  std::int64_t worst = 0;       // lowest final stock seen
};

inline OptionRef unit_decrement(TxnId txn, RoundIndex round) {
  auto o = std::make_shared<UpdateOption>();
  o->txn = txn;
  o->key = "item";
  o->writeset = {"item"};
  o->update = CommutativeUpdate{{{"stock", -1}}, {{"stock", Constraint{0, std::nullopt}}}, round};
  return o;
}

inline DemarcationReport demarcation_schedules(std::uint32_t k, std::int64_t x, bool demarcation,
                                               QuorumSpec q = quorum_sizes(5)) {
  std::vector<OptionRef> opts;
  for (TxnId t = 1; t <= k; ++t) opts.push_back(unit_decrement(t, 1));

  std::set<std::uint32_t> reachable;  // accepted sets as bitmasks
  std::vector<std::uint32_t> order(k);
  std::iota(order.begin(), order.end(), 0u);
  do {
    ReplicaRecord rec("item", RecordKind::commutative, q);
    rec.load(Value{{{"stock", x}}, false});
    rec.set_demarcation(demarcation);
    std::uint32_t acc = 0;
    for (auto i : order) {
      const auto r = rec.handle_fast_propose(0, opts[i]);
      if (const auto* ok = std::get_if<Phase2bReply>(&r); ok && ok->verdict == Verdict::accept) acc |= 1u << i;
    }
    reachable.insert(acc);
  } while (std::next_permutation(order.begin(), order.end()));

  const std::vector<std::uint32_t> sets(reachable.begin(), reachable.end());
  DemarcationReport rep;
  rep.worst = x;
  std::vector<std::size_t> pick(q.n, 0);
  while (true) {
    ++rep.schedules;
    std::int64_t stock = x;
    for (std::uint32_t i = 0; i < k; ++i) {
      std::uint32_t votes = 0;
      for (auto p : pick) votes += (sets[p] >> i) & 1u;
      if (votes >= q.q_fast) --stock;
    }
    rep.worst = std::min(rep.worst, stock);
    if (stock < 0) ++rep.violations;
    std::size_t d = 0;
    while (d < pick.size() && ++pick[d] == sets.size()) pick[d++] = 0;
    if (d == pick.size()) break;
  }
  return rep;
}

}  // namespace oracle
