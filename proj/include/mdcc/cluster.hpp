#pragma once

#include <memory>
#include <vector>

#include "mdcc/app_server.hpp"
#include "mdcc/storage_node.hpp"

namespace mdcc {

// A full deployment on one simulator: storage nodes 1..n (replicas_per_dc in
// each data center, every record on every node) followed by the app servers.
class Cluster {
 public:
  Cluster(const SimConfig& cfg, ProtocolParams params, std::uint32_t clients, std::uint32_t client_dc = 0);
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  Simulator& sim() { return sim_; }
  Observer& obs() { return obs_; }
  const Topology& topo() const { return topo_; }
  const ProtocolParams& params() const { return params_; }

  std::size_t storage_count() const { return storage_.size(); }
  StorageNode& storage(std::size_t i) { return *storage_.at(i); }
  std::size_t client_count() const { return clients_.size(); }
  AppServer& client(std::size_t i) { return *clients_.at(i); }

  // Loads `key` on every replica; the classic configuration also hands the
  // home master its ballot for all rounds.
  void preload(const Key& key, const Value& v);
  void start();

 private:
  Simulator sim_;
  Observer obs_;
  Topology topo_;
  ProtocolParams params_;
  std::vector<std::unique_ptr<StorageNode>> storage_;
  std::vector<std::unique_ptr<AppServer>> clients_;
};

}  // namespace mdcc
