#include <algorithm>

#include "mdcc/app_server.hpp"

namespace mdcc {

const char* to_string(Freshness f) {
  switch (f) {
    case Freshness::local: return "local";
    case Freshness::quorum_latest: return "quorum-latest";
    case Freshness::monotonic: return "monotonic";
  }
  return "?";
}

namespace {

constexpr int kQuorumReadTries = 3;

}  // namespace

std::uint64_t AppServer::start_read(PendingRead pr) {
  const auto req = next_req_++;
  auto& p = reads_[req] = std::move(pr);
  if (p.need == 1) {
    send_read(req, p.targets[p.next++]);
  } else {
    for (NodeId s : p.targets) send_read(req, s);
  }
  arm_read_timer(req);
  return req;
}

void AppServer::send_read(std::uint64_t req, NodeId to) {
  const auto& p = reads_.at(req);
  sim_.send(id_, to, ReadRequest{req, p.key, p.store});
}

void AppServer::arm_read_timer(std::uint64_t req) {
  sim_.set_timer(id_, 2 * sim_.max_rtt(), [this, req] {
    auto it = reads_.find(req);
    if (it == reads_.end()) return;
    auto& p = it->second;
    if (p.need == 1 && p.next < p.targets.size()) {
      send_read(req, p.targets[p.next++]);
      arm_read_timer(req);
      return;
    }
    if (p.need > 1 && p.next + 1 < kQuorumReadTries) {
      ++p.next;
      for (NodeId s : p.targets) {
        if (!p.replies.count(s)) send_read(req, s);
      }
      arm_read_timer(req);
      return;
    }
    auto pr = std::move(p);
    reads_.erase(it);
    if (pr.session && pr.need == 1) {
      // Pinned node unreachable: move the pin along the ring and ask a quorum.
      const auto idx = topo_.replica_index(pr.targets.front());
      pr.session->pinned = topo_.storage[(idx + 1) % topo_.n()];
      PendingRead q;
      q.key = pr.key;
      q.cb = std::move(pr.cb);
      q.freshness = Freshness::monotonic;
      q.targets = topo_.storage;
      q.need = topo_.quorum.q_classic;
      q.session = pr.session;
      start_read(std::move(q));
      return;
    }
    ReadResult r;
    r.key = pr.key;
    r.freshness = pr.freshness;
    pr.cb(r);
  });
}

void AppServer::on_read_reply(NodeId src, const ReadReply& r) {
  auto it = reads_.find(r.req);
  if (it == reads_.end()) return;
  auto& p = it->second;
  if (std::find(p.targets.begin(), p.targets.end(), src) == p.targets.end()) return;
  p.replies[src] = r;
  if (p.replies.size() >= p.need) finish_read(r.req, p);
}

void AppServer::finish_read(std::uint64_t req, PendingRead& p) {
  const ReadReply* best = nullptr;
  NodeId source = 0;
  for (const auto& [s, r] : p.replies) {
    if (!best || (r.found && (!best->found || r.version.index > best->version.index))) {
      best = &r;
      source = s;
    }
  }
  ReadResult out;
  out.key = p.key;
  out.ok = true;
  out.found = best->found;
  out.value = best->version.value;
  out.version = best->version.index;
  out.round = best->round;
  out.source = source;
  out.freshness = p.freshness;

  auto pr = std::move(p);
  reads_.erase(req);
  if (pr.session) {
    auto& mark = pr.session->watermark;
    auto w = mark.find(pr.key);
    const bool behind = w != mark.end() && (!out.found || out.version < w->second);
    if (behind) {
      // The pinned node missed a write this session has already seen.
      PendingRead q;
      q.key = pr.key;
      q.cb = std::move(pr.cb);
      q.freshness = Freshness::monotonic;
      q.targets = topo_.storage;
      q.need = topo_.quorum.q_classic;
      q.session = pr.session;
      if (pr.need == 1) {
        start_read(std::move(q));
      } else {
        // A quorum lagging behind the watermark: the Learned messages are
        // still in flight. Ask again shortly.
        sim_.set_timer(id_, sim_.max_rtt(), [this, q = std::move(q)]() mutable { start_read(std::move(q)); });
      }
      return;
    }
    if (out.found) mark[pr.key] = out.version;
  }
  pr.cb(out);
}

void AppServer::read_local(const Key& key, ReadCallback cb) {
  PendingRead p;
  p.key = key;
  p.cb = std::move(cb);
  p.freshness = Freshness::local;
  const auto dc = sim_.dc_of(id_);
  for (std::size_t i = 0; i < topo_.storage.size(); ++i) {
    if (topo_.storage_dc[i] == dc) p.targets.push_back(topo_.storage[i]);
  }
  if (p.targets.empty()) p.targets.push_back(local_);
  start_read(std::move(p));
}

void AppServer::read_plain(const Key& key, ReadCallback cb) {
  PendingRead p;
  p.key = key;
  p.cb = std::move(cb);
  p.store = Store::plain;
  p.targets = {local_};
  start_read(std::move(p));
}

void AppServer::read_quorum(const Key& key, ReadCallback cb) {
  PendingRead p;
  p.key = key;
  p.cb = std::move(cb);
  p.freshness = Freshness::quorum_latest;
  p.targets = topo_.storage;
  p.need = topo_.quorum.q_classic;
  start_read(std::move(p));
}

void AppServer::read_monotonic(const std::shared_ptr<Session>& s, const Key& key, ReadCallback cb) {
  if (s->pinned == 0) s->pinned = topo_.master_for(key, 0);
  PendingRead p;
  p.key = key;
  p.cb = std::move(cb);
  p.freshness = Freshness::monotonic;
  p.targets = {s->pinned};
  p.session = s;
  start_read(std::move(p));
}

}  // namespace mdcc
