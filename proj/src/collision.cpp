#include "mdcc/collision.hpp"

#include <algorithm>
#include <map>

namespace mdcc {

namespace {

std::optional<Ballot> highest_ballot(std::span<const Phase1Vote> responses) {
  std::optional<Ballot> best;
  for (const auto& r : responses) {
    if (r.ballot && r.value && (!best || *r.ballot > *best)) best = r.ballot;
  }
  return best;
}

// (value, count) for the votes cast at `ballot`, in first-seen order.
std::vector<std::pair<std::string, std::uint32_t>> tally(std::span<const Phase1Vote> responses,
                                                         const Ballot& ballot) {
  std::vector<std::pair<std::string, std::uint32_t>> out;
  for (const auto& r : responses) {
    if (!r.ballot || !r.value || *r.ballot != ballot) continue;
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == *r.value; });
    if (it == out.end()) {
      out.emplace_back(*r.value, 1);
    } else {
      ++it->second;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> collision_candidates(std::span<const Phase1Vote> responses, const QuorumSpec& q) {
  std::vector<std::string> out;
  const auto top = highest_ballot(responses);
  if (!top) return out;
  const std::uint32_t overlap = q.fast_classic_overlap();
  for (const auto& [value, count] : tally(responses, *top)) {
    // some `overlap`-sized subset of the top-ballot responders agrees on value
    if (count >= overlap) out.push_back(value);
  }
  return out;
}

CollisionResult resolve_collision(std::span<const Phase1Vote> responses, const QuorumSpec& q) {
  const auto top = highest_ballot(responses);
  if (!top) return CollisionResult::free_choice();

  const auto votes = tally(responses, *top);
  if (top->classic) {
    // a classic ballot carries a single proposal
    return CollisionResult::must(votes.front().first);
  }

  const auto candidates = collision_candidates(responses, q);
  if (candidates.empty()) return CollisionResult::free_choice();
  if (candidates.size() == 1) return CollisionResult::must(candidates.front());

  // More than q_classic responders: a value is still possibly chosen only if
  // every responder of some fast quorum voted for it.
  const auto responders = static_cast<std::uint32_t>(responses.size());
  const std::uint32_t missing = q.n - std::min(q.n, responders);
  const std::uint32_t need = q.q_fast > missing ? q.q_fast - missing : 0;
  std::vector<std::string> exact;
  for (const auto& [value, count] : votes) {
    if (count >= need) exact.push_back(value);
  }
  if (exact.size() == 1) return CollisionResult::must(exact.front());
  return CollisionResult::free_choice();
}

}  // namespace mdcc
