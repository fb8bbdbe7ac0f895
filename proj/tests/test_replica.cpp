#include <doctest.h>

#include <random>

#include "mdcc/replica_store.hpp"

using namespace mdcc;

namespace {

const QuorumSpec Q5 = quorum_sizes(5);

OptionRef phys(TxnId txn, std::optional<RoundIndex> rv, std::int64_t stock, const Key& key = "k") {
  auto o = std::make_shared<UpdateOption>();
  o->txn = txn;
  o->key = key;
  o->writeset = {key};
  o->update = PhysicalUpdate{rv, Value{{{"stock", stock}}, false}, 0};
  return o;
}

OptionRef comm(TxnId txn, std::int64_t d, RoundIndex round = 1, const Key& key = "c") {
  auto o = std::make_shared<UpdateOption>();
  o->txn = txn;
  o->key = key;
  o->writeset = {key};
  o->update = CommutativeUpdate{{{"stock", d}}, {{"stock", Constraint{0, std::nullopt}}}, round};
  return o;
}

ReplicaRecord loaded(RecordKind kind, std::int64_t stock = 10) {
  ReplicaRecord r(kind == RecordKind::physical ? "k" : "c", kind, Q5);
  r.load(Value{{{"stock", stock}}, false});
  return r;
}

Verdict verdict_of(const FastResult& r) { return std::get<Phase2bReply>(r).verdict; }

}  // namespace

TEST_CASE("phase1a on a fresh record promises with nothing accepted") {
  auto r = loaded(RecordKind::physical);
  const auto res = r.handle_phase1a(0, Ballot::make_classic(1, 1), RoundMeta{1, 10, false, {}});
  const auto& p = std::get<Phase1bReply>(res);
  CHECK(p.promised == Ballot::make_classic(1, 1));
  CHECK(p.vote.empty());
  CHECK_FALSE(p.vote_ballot.has_value());
  CHECK(r.promised() == Ballot::make_classic(1, 1));
  CHECK(r.mode_for(5) == RoundMode::classic);
  CHECK(r.mode_for(11) == RoundMode::fast);
}

TEST_CASE("a stale phase1a is nacked with the current promise") {
  auto r = loaded(RecordKind::physical);
  r.handle_phase1a(0, Ballot::make_classic(5, 2), RoundMeta{1, std::nullopt, false, {}});
  const auto res = r.handle_phase1a(0, Ballot::make_classic(3, 1), RoundMeta{1, std::nullopt, false, {}});
  REQUIRE(std::holds_alternative<Nack>(res));
  CHECK(std::get<Nack>(res).promised == Ballot::make_classic(5, 2));
}

TEST_CASE("phase1a after a fast accept reports the fast vote") {
  auto r = loaded(RecordKind::physical);
  const auto o = phys(7, 0, 9);
  CHECK(verdict_of(r.handle_fast_propose(0, o)) == Verdict::accept);
  const auto res = r.handle_phase1a(0, Ballot::make_classic(1, 1), RoundMeta{1, 1, false, {}});
  const auto& p = std::get<Phase1bReply>(res);
  REQUIRE(p.vote_ballot.has_value());
  CHECK_FALSE(p.vote_ballot->classic);
  REQUIRE(p.vote.size() == 1);
  CHECK(p.vote.front().option->txn == 7);
}

TEST_CASE("phase2a honours the promise and validates read versions") {
  auto r = loaded(RecordKind::physical);
  const Ballot b2 = Ballot::make_classic(2, 1);
  r.handle_phase1a(0, b2, RoundMeta{1, std::nullopt, false, {}});

  SUBCASE("same ballot, valid option") {
    const auto res = r.handle_phase2a(0, b2, 1, phys(1, 0, 9));
    REQUIRE(std::holds_alternative<Phase2bReply>(res));
    CHECK(std::get<Phase2bReply>(res).verdict == Verdict::accept);
  }
  SUBCASE("lower ballot") {
    const auto res = r.handle_phase2a(0, Ballot::make_classic(1, 2), 1, phys(1, 0, 9));
    CHECK(std::holds_alternative<Nack>(res));
  }
  SUBCASE("stale read version is a learned reject, not a nack") {
    const auto res = r.handle_phase2a(0, b2, 1, phys(1, 5, 9));
    REQUIRE(std::holds_alternative<Phase2bReply>(res));
    CHECK(std::get<Phase2bReply>(res).verdict == Verdict::reject);
  }
}

TEST_CASE("fast physical round accepts only the first option") {
  auto r = loaded(RecordKind::physical);
  CHECK(verdict_of(r.handle_fast_propose(0, phys(1, 0, 9))) == Verdict::accept);
  const auto second = r.handle_fast_propose(0, phys(2, 0, 8));
  REQUIRE(std::holds_alternative<Refusal>(second));
  CHECK(std::get<Refusal>(second).reason == Refusal::Reason::conflict);
  // redelivery of the first is answered consistently
  CHECK(verdict_of(r.handle_fast_propose(0, phys(1, 0, 9))) == Verdict::accept);
}

TEST_CASE("classic rounds refer fast proposers to the master") {
  auto r = loaded(RecordKind::physical);
  r.handle_phase1a(0, Ballot::make_classic(1, 3), RoundMeta{1, 4, false, {}});
  const auto res = r.handle_fast_propose(0, phys(1, 0, 9));
  REQUIRE(std::holds_alternative<Refusal>(res));
  const auto& f = std::get<Refusal>(res);
  CHECK(f.reason == Refusal::Reason::classic_round);
  REQUIRE(f.meta.has_value());
  CHECK(f.meta->ballot.server == 3);
}

TEST_CASE("commutative fast round accepts until the escrow bound") {
  SUBCASE("demarcated: the fourth unit decrement at X=4 is refused") {
    auto r = loaded(RecordKind::commutative, 4);
    for (TxnId t = 1; t <= 4; ++t) {
      CHECK(verdict_of(r.handle_fast_propose(0, comm(t, -1))) == (t <= 3 ? Verdict::accept : Verdict::reject));
    }
    CHECK(r.limit("stock") == Rational::of(4, 5));
  }
  SUBCASE("raw bound: the fifth unit decrement is refused") {
    auto r = loaded(RecordKind::commutative, 4);
    r.set_demarcation(false);
    for (TxnId t = 1; t <= 5; ++t) {
      CHECK(verdict_of(r.handle_fast_propose(0, comm(t, -1))) == (t <= 4 ? Verdict::accept : Verdict::reject));
    }
  }
  SUBCASE("no contention") {
    auto r = loaded(RecordKind::commutative, 4);
    CHECK(verdict_of(r.handle_fast_propose(0, comm(1, -2))) == Verdict::accept);
  }
  SUBCASE("options tagged for another round are refused") {
    auto r = loaded(RecordKind::commutative, 4);
    const auto res = r.handle_fast_propose(0, comm(1, -1, 2));
    CHECK(std::holds_alternative<Refusal>(res));
  }
}

TEST_CASE("validate_option checks versions and absence") {
  auto r = loaded(RecordKind::physical);
  CHECK(r.validate_option(*phys(1, 0, 1)) == Verdict::accept);
  CHECK(r.validate_option(*phys(1, 3, 1)) == Verdict::reject);
  CHECK(r.validate_option(*phys(1, std::nullopt, 1)) == Verdict::reject);

  ReplicaRecord fresh("new", RecordKind::physical, Q5);
  CHECK(fresh.absent());
  CHECK(fresh.validate_option(*phys(1, std::nullopt, 1, "new")) == Verdict::accept);
}

TEST_CASE("learning executes, aborts advance the round, duplicates are no-ops") {
  auto r = loaded(RecordKind::physical);
  const auto o = phys(1, 0, 4);
  r.handle_fast_propose(0, o);
  auto res = r.apply_learned(0, 1, o, Verdict::accept, Decision::commit, true);
  REQUIRE(res.executed.size() == 1);
  CHECK(r.latest()->value.get("stock") == 4);
  CHECK(r.latest()->committed_by == 1);
  CHECK(r.round() == 2);

  const auto o2 = phys(2, 1, 3);
  r.handle_fast_propose(0, o2);
  r.apply_learned(0, 2, o2, Verdict::accept, Decision::abort, true);
  CHECK(r.round() == 3);
  CHECK(r.latest()->value.get("stock") == 4);
  CHECK(r.latest()->index == 2);
  CHECK(r.latest()->committed_by == 0);

  const auto before = r.digest_text();
  const auto dup = r.apply_learned(0, 2, o2, Verdict::accept, Decision::abort, true);
  CHECK_FALSE(dup.applied);
  CHECK(r.digest_text() == before);
}

TEST_CASE("commutative commits apply deltas and close on the chosen value") {
  auto r = loaded(RecordKind::commutative, 10);
  const auto a = comm(1, -2), b = comm(2, -3);
  r.handle_fast_propose(0, a);
  r.handle_fast_propose(0, b);
  r.apply_learned(0, 1, a, Verdict::accept, Decision::commit, true);
  r.apply_learned(0, 1, b, Verdict::accept, Decision::abort, false);
  CHECK(r.current_value().get("stock") == 8);
  CHECK(r.round() == 1);  // open until a master fixes the round's value
  r.apply_chosen(0, 1, CStruct{{a, Verdict::accept}, {b, Verdict::accept}});
  CHECK(r.round() == 2);
  CHECK(r.base().get("stock") == 8);
  CHECK(r.limit("stock") == Rational::of(8, 5));
}

TEST_CASE("promises never decrease") {
  std::mt19937_64 rng(3);
  for (int run = 0; run < 200; ++run) {
    auto r = loaded(RecordKind::physical);
    Ballot last = r.promised_for(1);
    for (int i = 0; i < 30; ++i) {
      const Ballot b = Ballot::make_classic(static_cast<std::uint32_t>(rng() % 8), static_cast<ServerId>(1 + rng() % 3));
      r.handle_phase1a(0, b, RoundMeta{1, std::nullopt, false, {}});
      const Ballot now = r.promised_for(1);
      CHECK(now >= last);
      last = now;
    }
  }
}

TEST_CASE("replaying the option log reproduces the store") {
  std::mt19937_64 rng(11);
  auto kind_of = [](const Key& k) { return k[0] == 'c' ? RecordKind::commutative : RecordKind::physical; };
  for (int run = 0; run < 50; ++run) {
    ReplicaStore s(Q5, kind_of);
    s.load(0, "k", Value{{{"stock", 10}}, false});
    s.load(0, "c", Value{{{"stock", 10}}, false});
    TxnId txn = 1;
    for (SimTime t = 1; t < 60; ++t) {
      const auto p = rng() % 6;
      auto& k = s.record(t, "k");
      auto& c = s.record(t, "c");
      if (p == 0) {
        s.fast(t, phys(txn++, k.latest()->index, static_cast<std::int64_t>(rng() % 10)));
      } else if (p == 1) {
        s.fast(t, comm(txn++, -static_cast<std::int64_t>(1 + rng() % 3), c.round()));
      } else if (p == 2 && !k.vote().empty()) {
        const auto e = k.vote().front();
        s.learned(t, "k", k.round(), e, rng() % 2 ? Decision::commit : Decision::abort, true);
      } else if (p == 3 && !c.vote().empty()) {
        const auto e = c.vote()[rng() % c.vote().size()];
        s.learned(t, "c", c.round(), e, rng() % 2 ? Decision::commit : Decision::abort, false);
        if (rng() % 3 == 0) s.chosen(t, "c", c.round(), c.vote());
      } else if (p == 4) {
        s.phase1a(t, "k", Ballot::make_classic(static_cast<std::uint32_t>(t), 2), RoundMeta{k.round(), k.round(), false, {}});
      } else {
        s.note(t, "k", txn, "finally_remote");
      }
    }
    const auto copy = ReplicaStore::replay(s.log(), Q5, kind_of);
    CHECK(copy.digest_text() == s.digest_text());
  }
}

TEST_CASE("option log lines round-trip") {
  LogLine l{12, "item:1", 3, Ballot::make_classic(2, 4), 99, "fast", nlohmann::json{{"a", 1}}, "accept"};
  const auto back = LogLine::parse(l.format());
  CHECK(back.format() == l.format());
  CHECK(back.key == "item:1");
  CHECK(back.ballot == l.ballot);
}
