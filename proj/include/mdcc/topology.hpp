#pragma once

#include <string>
#include <vector>

#include "mdcc/replica_store.hpp"
#include "mdcc/sim.hpp"

namespace mdcc {

enum class Protocol : std::uint8_t { mdcc_classic, mdcc_fast_noncomm, mdcc_fast_comm, twopc, qw3, qw4 };

const char* to_string(Protocol p);
Protocol parse_protocol(const std::string& s);
inline bool is_mdcc(Protocol p) {
  return p == Protocol::mdcc_classic || p == Protocol::mdcc_fast_noncomm || p == Protocol::mdcc_fast_comm;
}

// Every record is replicated on every storage node.
struct Topology {
  std::vector<NodeId> storage;  // by replica index
  std::vector<std::uint32_t> storage_dc;
  QuorumSpec quorum;

  std::uint32_t n() const { return static_cast<std::uint32_t>(storage.size()); }
  std::uint32_t home_index(const Key& key) const { return static_cast<std::uint32_t>(fnv1a(key) % n()); }
  // Home master first; later attempts walk the replica ring.
  NodeId master_for(const Key& key, std::uint32_t attempt = 0) const {
    return storage[(home_index(key) + attempt) % n()];
  }
  std::uint32_t replica_index(NodeId id) const;
  NodeId local_storage(std::uint32_t dc) const;
};

struct ProtocolParams {
  Protocol protocol = Protocol::mdcc_fast_comm;
  std::uint32_t gamma = 10;
  bool demarcation = true;
  bool option_log = false;
  // Zero selects the default derived from the latency matrix.
  SimTime recovery_timeout = 0;
  KindResolver kind_of;
};

}  // namespace mdcc
