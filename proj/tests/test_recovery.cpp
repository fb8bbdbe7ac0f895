#include <doctest.h>

#include "harness.hpp"

using namespace mdcc;
using namespace harness;

namespace {

// Kills the client the first time it is about to send a message matching
// `pred`; the message is never sent.
template <class Pred>
void kill_on(Cluster& c, NodeId client, Pred pred) {
  c.sim().set_send_hook([&c, client, pred](NodeId src, NodeId, const Message& m) {
    if (src == client && c.sim().alive(client) && pred(m)) c.sim().kill(client);
  });
}

std::int64_t stock_at(Cluster& c, std::size_t i, const Key& k) {
  return c.storage(i).store().find(k)->current_value().get("stock");
}

}  // namespace

TEST_CASE("coordinator dies after every option was learned accepted: recovery commits") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.preload("b", stock(5));
  c.start();
  kill_on(c, c.client(0).id(), [](const Message& m) { return std::holds_alternative<Learned>(m); });
  submit(c, 0, {write("a", 0, 4), write("b", 0, 3)});
  c.sim().run_until(10'000'000);
  for (std::size_t i = 0; i < c.storage_count(); ++i) {
    CHECK(stock_at(c, i, "a") == 4);
    CHECK(stock_at(c, i, "b") == 3);
  }
  std::uint64_t rec = 0;
  for (std::size_t i = 0; i < c.storage_count(); ++i) rec += c.storage(i).recoveries();
  CHECK(rec > 0);
  CHECK(c.obs().clean());
}

TEST_CASE("coordinator dies with one option rejected: recovery aborts everywhere") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.preload("b", stock(5));
  c.start();
  auto first = submit(c, 0, {write("b", 0, 6)});
  c.sim().run_until(1'000'000);
  REQUIRE(first->success);
  kill_on(c, c.client(0).id(), [](const Message& m) { return std::holds_alternative<Learned>(m); });
  submit(c, 0, {write("a", 0, 4), write("b", 0, 3)});  // b was already overwritten
  c.sim().run_until(10'000'000);
  for (std::size_t i = 0; i < c.storage_count(); ++i) {
    CHECK(stock_at(c, i, "a") == 5);
    CHECK(stock_at(c, i, "b") == 6);
    CHECK(c.storage(i).store().find("a")->round() == 2);
  }
  CHECK(c.obs().clean());
}

TEST_CASE("coordinator dies before any vote arrives: options still resolve") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.preload("b", stock(5));
  c.start();
  int proposes = 0;
  c.sim().set_send_hook([&](NodeId src, NodeId, const Message& m) {
    if (src == c.client(0).id() && std::holds_alternative<FastPropose>(m) && ++proposes == 7) c.sim().kill(src);
  });
  submit(c, 0, {write("a", 0, 4), write("b", 0, 3)});
  c.sim().run_until(20'000'000);
  // Whatever was decided, both records agree on it and nothing is left open.
  for (std::size_t i = 0; i < c.storage_count(); ++i) {
    CHECK((stock_at(c, i, "a") == 4) == (stock_at(c, i, "b") == 3));
    CHECK(c.storage(i).store().find("a")->outstanding().empty());
    CHECK(c.storage(i).store().find("b")->outstanding().empty());
  }
  CHECK(c.obs().clean());
}

TEST_CASE("a clean run needs no recovery") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.start();
  auto r = submit(c, 0, {write("a", 0, 4)});
  c.sim().run_until(10'000'000);
  CHECK(r->success);
  for (std::size_t i = 0; i < c.storage_count(); ++i) CHECK(c.storage(i).recoveries() == 0);
}

TEST_CASE("two masters: the lower ballot loses phase 2 at a quorum") {
  const auto q = quorum_sizes(5);
  std::vector<ReplicaRecord> rs;
  for (int i = 0; i < 5; ++i) {
    rs.emplace_back("k", RecordKind::physical, q);
    rs.back().load(stock(5));
  }
  const Ballot b1 = Ballot::make_classic(1, 1), b2 = Ballot::make_classic(2, 2);
  for (auto& r : rs) r.handle_phase1a(0, b1, RoundMeta{1, 1, false, {}});
  for (int i = 2; i < 5; ++i) rs[i].handle_phase1a(0, b2, RoundMeta{1, 1, false, {}});
  auto o = std::make_shared<UpdateOption>();
  o->txn = 1;
  o->key = "k";
  o->writeset = {"k"};
  o->update = PhysicalUpdate{0, stock(4), 0};
  int acks = 0;
  for (auto& r : rs) acks += std::holds_alternative<Phase2bReply>(r.handle_phase2a(0, b1, 1, OptionRef(o))) ? 1 : 0;
  CHECK(acks == 2);
  CHECK(acks < static_cast<int>(q.q_classic));
}
