#include "mdcc/cluster.hpp"

namespace mdcc {

Cluster::Cluster(const SimConfig& cfg, ProtocolParams params, std::uint32_t clients, std::uint32_t client_dc)
    : sim_(cfg), params_(std::move(params)) {
  if (!params_.kind_of) params_.kind_of = [](const Key&) { return RecordKind::physical; };
  NodeId next = 1;
  for (std::uint32_t dc = 0; dc < cfg.dc_count(); ++dc) {
    for (std::uint32_t r = 0; r < cfg.replicas_per_dc; ++r) {
      topo_.storage.push_back(next++);
      topo_.storage_dc.push_back(dc);
    }
  }
  topo_.quorum = quorum_sizes(topo_.n());
  for (std::size_t i = 0; i < topo_.storage.size(); ++i) {
    sim_.add_node(topo_.storage[i], topo_.storage_dc[i], nullptr);
  }
  // Nodes are registered before construction so the storage node can look
  // up its own data center; endpoints are attached right after.
  for (std::size_t i = 0; i < topo_.storage.size(); ++i) {
    storage_.push_back(std::make_unique<StorageNode>(topo_.storage[i], sim_, obs_, topo_, params_));
    sim_.add_node(topo_.storage[i], topo_.storage_dc[i], storage_.back().get());
  }
  for (std::uint32_t c = 0; c < clients; ++c) {
    const NodeId id = next++;
    sim_.add_node(id, client_dc, nullptr);
    clients_.push_back(std::make_unique<AppServer>(id, sim_, obs_, topo_, params_));
    sim_.add_node(id, client_dc, clients_.back().get());
  }
}

void Cluster::preload(const Key& key, const Value& v) {
  obs_.on_load(key, v);
  for (auto& s : storage_) s->preload(key, v);
  if (params_.protocol != Protocol::mdcc_classic) return;
  const NodeId master = topo_.master_for(key, 0);
  for (auto& s : storage_) {
    s->accept_bootstrap(key, master);
    if (s->id() == master) s->bootstrap_master(key);
  }
}

void Cluster::start() {
  for (auto& s : storage_) s->start();
}

}  // namespace mdcc
