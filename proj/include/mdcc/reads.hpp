#pragma once

#include <functional>
#include <map>

#include "mdcc/types.hpp"

namespace mdcc {

enum class Freshness : std::uint8_t { local, quorum_latest, monotonic };

const char* to_string(Freshness f);

struct ReadResult {
  Key key;
  bool ok = false;     // false: no replica answered in time
  bool found = false;  // false: no executed version exists
  Value value;
  RoundIndex version = 0;  // index of the executed version
  RoundIndex round = 0;    // source replica's open round
  NodeId source = 0;
  Freshness freshness = Freshness::local;
};

using ReadCallback = std::function<void(const ReadResult&)>;

// Per-client state for monotonic reads. The watermark is the highest version
// index the session has returned per key.
struct Session {
  NodeId pinned = 0;  // 0: pin to the home master of the first key read
  std::map<Key, RoundIndex> watermark;
};

}  // namespace mdcc
