#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdcc/types.hpp"

namespace mdcc {

// One Phase1b response as seen by collision recovery. `value` identifies
// what the acceptor voted for at `ballot` (for a physical round the primary
// option and its verdict; for one option of a commutative round its verdict).
struct Phase1Vote {
  ServerId server = kNilServer;
  std::optional<Ballot> ballot;
  std::optional<std::string> value;
};

struct CollisionResult {
  enum class Kind { free, must } kind = Kind::free;
  std::string value;

  static CollisionResult free_choice() { return {}; }
  static CollisionResult must(std::string v) { return {Kind::must, std::move(v)}; }
  bool operator==(const CollisionResult&) const = default;
};

// Decides what a new classic master has to propose after taking over a
// round. Among the responders that voted at the highest ballot, every subset
// of size q_fast + q_classic - n that could be the intersection with a fast
// quorum is examined; a value on which one such subset agrees may have been
// chosen and must be re-proposed. When several values qualify (possible only
// with more than q_classic responses) the exact count against the full
// response set breaks the tie.
CollisionResult resolve_collision(std::span<const Phase1Vote> responses, const QuorumSpec& q);

// Values that pass the intersection test, in first-seen order.
std::vector<std::string> collision_candidates(std::span<const Phase1Vote> responses, const QuorumSpec& q);

}  // namespace mdcc
