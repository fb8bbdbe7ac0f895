#pragma once

#include <string>
#include <variant>
#include <vector>

#include "mdcc/replica.hpp"
#include "mdcc/types.hpp"

namespace mdcc {

// --- MDCC: coordinator <-> replicas -----------------------------------------

struct FastPropose {
  OptionRef option;
};

// A replica's answer to a fast proposal.
struct Vote {
  Key key;
  TxnId txn = 0;
  RoundIndex round = 0;
  std::optional<Verdict> verdict;  // unset: refused
  bool decided = false;
  std::optional<Refusal::Reason> refusal;
  ServerId master = kNilServer;  // classic_round: current master
};

// Asks a storage node to decide `txn` on `key` through a classic round.
// Recovery may not know the option of a foreign key; `option` is then null.
struct ClassicRequest {
  Key key;
  TxnId txn = 0;
  OptionRef option;
  bool conflict = false;  // raised by a failed fast round
};

struct Decided {
  Key key;
  TxnId txn = 0;
  RoundIndex round = 0;
  Entry entry;
  bool primary = false;
};

struct Learned {
  Key key;
  RoundIndex round = 0;
  Entry entry;
  Decision decision = Decision::abort;
  bool primary = false;
};

// --- MDCC: master <-> replicas ----------------------------------------------

struct Phase1a {
  Key key;
  Ballot ballot;
  RoundMeta range;
};

struct Phase1b {
  Key key;
  Ballot ballot;
  Phase1Result result;
};

struct Phase2a {
  Key key;
  Ballot ballot;
  RoundIndex round = 0;
  CStruct value;
};

struct Phase2b {
  Key key;
  Ballot ballot;
  Phase2Result result;
};

struct Chosen {
  Key key;
  RoundIndex round = 0;
  CStruct value;
};

struct CatchupRequest {
  Key key;
  RoundIndex have = 0;
};

struct Snapshot {
  Key key;
  RecordSnapshot snap;
};

// --- reads --------------------------------------------------------------------

enum class Store : std::uint8_t { paxos, plain };

struct ReadRequest {
  std::uint64_t req = 0;
  Key key;
  Store store = Store::paxos;
};

struct ReadReply {
  std::uint64_t req = 0;
  Key key;
  bool found = false;
  Version version;
  RoundIndex round = 0;  // open round; commutative options target it
};

// --- 2PC ----------------------------------------------------------------------

struct TpcRequest {
  TxnId txn = 0;
  std::vector<OptionRef> options;
};

struct TpcPrepare {
  TxnId txn = 0;
  OptionRef option;
};

struct TpcVote {
  TxnId txn = 0;
  Key key;
  bool yes = false;
};

struct TpcFinish {
  TxnId txn = 0;
  Key key;
  bool commit = false;
};

struct TpcAck {
  TxnId txn = 0;
  Key key;
};

struct TpcReply {
  TxnId txn = 0;
  bool commit = false;
};

// --- quorum writes --------------------------------------------------------------

struct QwWrite {
  TxnId txn = 0;
  Key key;
  Value value;
  std::uint64_t version = 0;  // read version + 1
  NodeId writer = 0;
};

struct QwAck {
  TxnId txn = 0;
  Key key;
};

using Message = std::variant<FastPropose, Vote, ClassicRequest, Decided, Learned, Phase1a, Phase1b, Phase2a,
                             Phase2b, Chosen, CatchupRequest, Snapshot, ReadRequest, ReadReply, TpcRequest,
                             TpcPrepare, TpcVote, TpcFinish, TpcAck, TpcReply, QwWrite, QwAck>;

const char* message_type(const Message& m);
// Transaction a message belongs to; 0 for record-level traffic.
TxnId message_txn(const Message& m);
// Compact canonical text of all fields; the trace digest hashes it.
std::string encode(const Message& m);
std::uint64_t digest(const Message& m);

}  // namespace mdcc
