#include <doctest.h>

#include <sstream>

#include "harness.hpp"

using namespace mdcc;
using namespace harness;

TEST_CASE("conflict-free fast transaction decides after one round trip") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.preload("b", stock(5));
  c.start();
  auto r = submit(c, 0, {write("a", 0, 4), write("b", 0, 3)});
  c.sim().run_until(2'000'000);
  REQUIRE(r->done);
  CHECK(r->success);
  const NodeId cl = c.client(0).id();
  CHECK(r->at == kth_rtt(c, cl, c.topo().quorum.q_fast));
  CHECK(c.obs().clean());
  // every replica executed both
  for (std::size_t i = 0; i < c.storage_count(); ++i) {
    CHECK(c.storage(i).store().find("a")->latest()->value.get("stock") == 4);
    CHECK(c.storage(i).store().find("b")->latest()->value.get("stock") == 3);
  }
}

TEST_CASE("a stale read aborts the transaction everywhere") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.preload("b", stock(5));
  c.start();
  auto r = submit(c, 0, {write("a", 0, 4), write("b", 7, 3)});
  c.sim().run_until(3'000'000);
  REQUIRE(r->done);
  CHECK_FALSE(r->success);
  for (std::size_t i = 0; i < c.storage_count(); ++i) {
    const auto* a = c.storage(i).store().find("a");
    CHECK(a->latest()->value.get("stock") == 5);
    CHECK(a->round() == 2);  // the aborted option still consumed a round
  }
  CHECK(c.obs().clean());
}

TEST_CASE("single replica deployment decides on the local verdict") {
  SimConfig cfg;
  cfg.datacenters = {"only"};
  cfg.latency_ms = {{0.5}};
  cfg.jitter = 0;
  Cluster c(cfg, params(Protocol::mdcc_fast_noncomm), 1);
  CHECK(c.topo().quorum == QuorumSpec{1, 1, 1});
  c.preload("a", stock(5));
  c.start();
  auto ok = submit(c, 0, {write("a", 0, 4)});
  c.sim().run_until(100'000);
  auto bad = submit(c, 0, {write("a", 0, 3)});
  c.sim().run_until(200'000);
  CHECK(ok->success);
  REQUIRE(bad->done);
  CHECK_FALSE(bad->success);
}

TEST_CASE("classic configuration decides after two round trips through the master") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_classic), 1);
  c.preload("a", stock(5));
  c.start();
  auto r = submit(c, 0, {write("a", 0, 4)});
  c.sim().run_until(2'000'000);
  REQUIRE(r->done);
  CHECK(r->success);
  const NodeId cl = c.client(0).id(), m = c.topo().master_for("a");
  CHECK(r->at == d(c, cl, m) + kth_rtt(c, m, c.topo().quorum.q_classic) + d(c, m, cl));
}

TEST_CASE("two-phase commit costs twice the fast round trip on a uniform matrix") {
  auto run = [](Protocol p) {
    Cluster c(uniform(50), params(p), 1);
    c.preload("a", stock(5));
    c.preload("b", stock(5));
    c.start();
    auto r = submit(c, 0, {write("a", 0, 4), write("b", 0, 4)});
    c.sim().run_until(2'000'000);
    REQUIRE(r->done);
    CHECK(r->success);
    return r->at;
  };
  const SimTime fast = run(Protocol::mdcc_fast_noncomm), tpc = run(Protocol::twopc);
  CHECK(fast == 100'000);
  // Two wide-area round trips plus the hop to and from the local coordinator.
  CHECK(tpc == 2 * fast + 1'000);
}

TEST_CASE("2PC aborts on a stale read and commits only on unanimity") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::twopc), 2);
  c.preload("a", stock(5));
  c.start();
  auto bad = submit(c, 0, {write("a", 3, 1)});
  c.sim().run_until(2'000'000);
  REQUIRE(bad->done);
  CHECK_FALSE(bad->success);
  for (std::size_t i = 0; i < c.storage_count(); ++i) CHECK(c.storage(i).plain().at("a").value.get("stock") == 5);
}

TEST_CASE("2PC blocks while a participant data center is down") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::twopc), 1);
  c.preload("a", stock(5));
  c.start();
  c.sim().fail_datacenter(3, 0);
  c.sim().heal_datacenter(3, 3'000'000);
  auto r = submit(c, 0, {write("a", 0, 4)});
  c.sim().run_until(2'900'000);
  CHECK_FALSE(r->done);
  for (std::size_t i = 0; i < c.storage_count(); ++i) CHECK(c.storage(i).plain().at("a").value.get("stock") == 5);
  c.sim().run_until(6'000'000);
  REQUIRE(r->done);
  CHECK(r->success);
}

TEST_CASE("quorum writes ack after q replicas") {
  for (auto p : {Protocol::qw3, Protocol::qw4}) {
    Cluster c(still(SimConfig::five_dc()), params(p), 1);
    c.preload("a", stock(5));
    c.start();
    auto r = submit(c, 0, {write("a", 0, 4)});
    c.sim().run_until(2'000'000);
    REQUIRE(r->done);
    CHECK(r->at == kth_rtt(c, c.client(0).id(), p == Protocol::qw3 ? 3 : 4));
  }
}

TEST_CASE("quorum writes lose updates under contention where MDCC does not") {
  WorkloadSpec s;
  s.items = 3;
  s.clients = 10;
  s.duration_s = 3;
  s.protocol = Protocol::qw3;
  const auto qw = run_workload(s, SimConfig::five_dc());
  CHECK(qw.counts.lost_updates > 0);
  CHECK(qw.violations.empty());
  s.protocol = Protocol::mdcc_fast_noncomm;
  const auto m = run_workload(s, SimConfig::five_dc());
  CHECK(m.counts.lost_updates == 0);
  CHECK(m.violations.empty());
  CHECK(m.committed > 0);
}

TEST_CASE("write conflict on one record: exactly one of two transactions commits") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 2, 0);
  c.preload("a", stock(5));
  c.start();
  auto t1 = submit(c, 0, {write("a", 0, 4)});
  auto t2 = submit(c, 1, {write("a", 0, 3)});
  c.sim().run_until(5'000'000);
  REQUIRE(t1->done);
  REQUIRE(t2->done);
  CHECK(t1->success != t2->success);
  CHECK(c.obs().clean());
}

TEST_CASE("crossing transactions: some schedule aborts both, none commits both") {
  bool both_aborted = false;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    auto cfg = SimConfig::five_dc();
    cfg.seed = seed;
    cfg.jitter = 0.4;
    Cluster c(cfg, params(Protocol::mdcc_fast_noncomm), 2, 0);
    c.preload("x", stock(5));
    c.preload("y", stock(5));
    c.start();
    auto t1 = submit(c, 0, {write("x", 0, 4), write("y", 0, 4)});
    auto t2 = submit(c, 1, {write("x", 0, 3), write("y", 0, 3)});
    c.sim().run_until(10'000'000);
    REQUIRE(t1->done);
    REQUIRE(t2->done);
    CHECK_FALSE((t1->success && t2->success));
    CHECK(c.obs().clean());
    both_aborted = both_aborted || (!t1->success && !t2->success);
  }
  CHECK(both_aborted);
}

TEST_CASE("commutative decrements commit concurrently") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_comm, true), 3);
  c.preload("s", stock(100));
  c.start();
  std::vector<std::shared_ptr<Result>> rs;
  for (std::size_t i = 0; i < 3; ++i) rs.push_back(submit(c, i, {decrement("s", 2)}));
  c.sim().run_until(3'000'000);
  for (auto& r : rs) {
    REQUIRE(r->done);
    CHECK(r->success);
  }
  for (std::size_t i = 0; i < c.storage_count(); ++i) {
    CHECK(c.storage(i).store().find("s")->current_value().get("stock") == 94);
  }
}

TEST_CASE("stage callbacks") {
  SUBCASE("commit within the deadline") {
    Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
    c.preload("a", stock(5));
    c.start();
    auto r = submit(c, 0, {write("a", 0, 4)}, 1'000'000);
    c.sim().run_until(3'000'000);
    CHECK(r->stages == std::vector<std::string>{"commit", "finally"});
    CHECK_FALSE(r->timeout);
  }
  SUBCASE("deadline after a 2b but before the decision") {
    Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
    c.preload("a", stock(5));
    c.start();
    auto r = submit(c, 0, {write("a", 0, 4)}, 50'000);
    c.sim().run_until(3'000'000);
    CHECK(r->stages == std::vector<std::string>{"accept", "finally"});
    CHECK(r->success);
    CHECK(r->timeout);
  }
  SUBCASE("no 2b by the deadline") {
    Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
    c.preload("a", stock(5));
    c.start();
    c.sim().fail_datacenter(0, 0);
    c.sim().heal_datacenter(0, 500'000);
    auto r = submit(c, 0, {write("a", 0, 4)}, 100'000);
    c.sim().run_until(10'000'000);
    REQUIRE(r->stages.size() >= 1);
    CHECK(r->stages.front() == "failure");
    CHECK(std::count(r->stages.begin(), r->stages.end(), "finally") <= 1);
  }
}

TEST_CASE("reads return only executed versions") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.start();

  SUBCASE("an insert that is only pending is not found") {
    auto o = std::make_shared<UpdateOption>();
    o->txn = 77;
    o->key = "fresh";
    o->writeset = {"fresh"};
    o->coordinator = c.client(0).id();
    o->update = PhysicalUpdate{std::nullopt, stock(1), 0};
    for (NodeId s : c.topo().storage) c.sim().send(c.client(0).id(), s, FastPropose{o});
    c.sim().run_until(300'000);
    const auto r = read_now(c, 0, "fresh");
    CHECK(r.ok);
    CHECK_FALSE(r.found);
  }
  SUBCASE("learned writes become visible") {
    auto t = submit(c, 0, {write("a", 0, 4)});
    c.sim().run_until(1'000'000);
    REQUIRE(t->success);
    const auto r = read_now(c, 0, "a");
    CHECK(r.found);
    CHECK(r.value.get("stock") == 4);
    CHECK(r.version == 1);
    const auto q = read_now(c, 0, "a", Freshness::quorum_latest);
    CHECK(q.version == 1);
    CHECK(q.freshness == Freshness::quorum_latest);
  }
}

TEST_CASE("quorum read sees the newest version when the local replica lags") {
  Cluster c(still(SimConfig::five_dc()), params(Protocol::mdcc_fast_noncomm), 1);
  c.preload("a", stock(5));
  c.start();
  const NodeId local = c.client(0).local();
  bool cut = true;
  c.sim().set_filter([&](NodeId, NodeId dst, const Message& m) {
    return cut && dst == local && !std::holds_alternative<ReadRequest>(m);
  });
  auto t1 = submit(c, 0, {write("a", 0, 4)});
  c.sim().run_until(1'000'000);
  auto t2 = submit(c, 0, {write("a", 1, 3)});
  c.sim().run_until(2'000'000);
  REQUIRE(t1->success);
  REQUIRE(t2->success);

  const auto stale = read_now(c, 0, "a");
  CHECK(stale.source == local);
  CHECK(stale.version == 0);
  CHECK(stale.value.get("stock") == 5);
  const auto q = read_now(c, 0, "a", Freshness::quorum_latest);
  CHECK(q.version == 2);
  CHECK(q.value.get("stock") == 3);

  SUBCASE("a session pinned to the lagging node escalates") {
    auto session = std::make_shared<Session>();
    session->pinned = local;
    session->watermark["a"] = 2;
    std::optional<ReadResult> got;
    c.client(0).read_monotonic(session, "a", [&](const ReadResult& r) { got = r; });
    c.sim().run_until(4'000'000);
    REQUIRE(got.has_value());
    CHECK(got->version == 2);
    CHECK(got->freshness == Freshness::monotonic);
    CHECK(got->source != local);
  }
  CHECK(c.obs().clean());
}

TEST_CASE("monotonic sessions never go backwards") {
  auto cfg = SimConfig::five_dc();
  cfg.drop_rate = 0.2;
  Cluster c(cfg, params(Protocol::mdcc_fast_noncomm), 2);
  c.preload("a", stock(1000));
  c.start();
  auto session = std::make_shared<Session>();
  std::vector<RoundIndex> seen;
  RoundIndex ver = 0;
  std::function<void()> writer;
  for (int i = 0; i < 12; ++i) {
    c.sim().at(i * 400'000, [&c, &ver] {
      const auto r = read_now(c, 1, "a", Freshness::quorum_latest);
      if (r.found) ver = r.version;
      submit(c, 1, {write("a", ver, 1000 - static_cast<std::int64_t>(ver) - 1)});
    });
    c.sim().at(i * 400'000 + 200'000, [&c, session, &seen] {
      c.client(0).read_monotonic(session, "a", [&seen](const ReadResult& r) {
        if (r.ok) seen.push_back(r.version);
      });
    });
  }
  c.sim().run_until(8'000'000);
  CHECK(seen.size() >= 6);
  for (std::size_t i = 1; i < seen.size(); ++i) CHECK(seen[i] >= seen[i - 1]);
  CHECK(c.obs().clean());
}

TEST_CASE("one client over many items commits everything") {
  WorkloadSpec s;
  s.clients = 1;
  s.items = 10000;
  s.duration_s = 5;
  for (auto p : {Protocol::mdcc_fast_comm, Protocol::mdcc_fast_noncomm, Protocol::mdcc_classic, Protocol::twopc}) {
    s.protocol = p;
    const auto r = run_workload(s, SimConfig::five_dc());
    CAPTURE(to_string(p));
    CHECK(r.committed > 10);
    CHECK(r.aborted == 0);
    CHECK(r.violations.empty());
  }
}

TEST_CASE("metrics recomputed from a saved trace are identical") {
  WorkloadSpec s;
  s.clients = 5;
  s.items = 50;
  s.duration_s = 2;
  s.keep_trace = true;
  const auto r = run_workload(s, SimConfig::five_dc());
  TraceMetrics again;
  for (const auto& l : r.trace) again.consume(l);
  std::ostringstream a, b;
  write_csv(a, r.records);
  write_csv(b, again.records());
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("txn_id,protocol,start_us,decide_us,outcome,mode,msgs,conflicts\n", 0) == 0);
}

TEST_CASE("identical seeds give identical runs") {
  WorkloadSpec s;
  s.clients = 8;
  s.items = 20;
  s.duration_s = 2;
  s.keep_trace = true;
  auto cfg = SimConfig::five_dc();
  cfg.drop_rate = 0.02;
  CHECK(run_workload(s, cfg).trace == run_workload(s, cfg).trace);
}

TEST_CASE("failure scripts and workload parsing") {
  const auto cfg = SimConfig::five_dc();
  const auto f = parse_failure("us-east:3:6", cfg);
  CHECK(f.dc == 1);
  CHECK(f.fail_at_s == 3);
  CHECK(f.heal_at_s == 6);
  CHECK(parse_failure("2:1:0", cfg).dc == 2);
  CHECK_THROWS(parse_failure("mars:1:2", cfg));
  CHECK_THROWS(parse_failure("1:2", cfg));
  CHECK(parse_workload("tpcw-lite-ordering") == WorkloadKind::tpcw_lite);
  CHECK_THROWS(parse_workload("nope"));
  CHECK(parse_protocol("qw4") == Protocol::qw4);
  WorkloadSpec bad;
  bad.items = 0;
  CHECK_THROWS(run_workload(bad, cfg));
  CHECK(percentile({5, 1, 3}, 0.5) == 3);
}

TEST_CASE("failure outside the run window leaves pre and post alike") {
  std::vector<TxnRecord> rec;
  for (int i = 0; i < 10; ++i) rec.push_back({static_cast<TxnId>(i + 1), "x", i * 100'000, i * 100'000 + 150'000, "commit", "fast", 0, 0});
  const auto s = failure_series(rec, FailureScript{1, 50, 60}, 2);
  CHECK(s.post_mean_ms == 0);
  CHECK(s.pre_mean_ms == doctest::Approx(150));
}

TEST_CASE("ambiguous commutative fast votes make the master wait for more promises") {
  std::uint64_t ambiguous = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    WorkloadSpec s;
    s.clients = 10;
    s.items = 4;
    s.initial_stock = 8;
    s.duration_s = 2;
    s.seed = seed;
    s.keep_trace = true;
    auto cfg = SimConfig::five_dc();
    cfg.jitter = 0.4;
    cfg.seed = seed;
    const auto r = run_workload(s, cfg);
    CHECK(r.violations.empty());
    for (const auto& l : r.trace) ambiguous += l.find(" ambiguous ") != std::string::npos ? 1 : 0;
  }
  CHECK(ambiguous > 0);
}
