#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace mdcc {

using Key = std::string;
using TxnId = std::uint64_t;
using NodeId = std::uint32_t;
using RoundIndex = std::uint64_t;
using SimTime = std::int64_t;  // microseconds

// Server ids are config-assigned ordinals starting at 1; 0 is the nil server
// used by the implicit fast ballot.
using ServerId = std::uint32_t;
inline constexpr ServerId kNilServer = 0;

// Ordered lexicographically with the classic bit most significant, so every
// classic ballot outranks every fast ballot.
struct Ballot {
  bool classic = false;
  std::uint32_t number = 0;
  ServerId server = kNilServer;

  static constexpr Ballot implicit_fast() { return Ballot{}; }
  static constexpr Ballot make_classic(std::uint32_t n, ServerId s) { return {true, n, s}; }
  static constexpr Ballot make_fast(std::uint32_t n, ServerId s) { return {false, n, s}; }

  auto operator<=>(const Ballot&) const = default;
  bool operator==(const Ballot&) const = default;

  std::string str() const;
};

std::strong_ordering ballot_compare(const Ballot& a, const Ballot& b);

// Mastership range for the Paxos rounds [start_round, end_round].
struct RoundMeta {
  RoundIndex start_round = 0;
  std::optional<RoundIndex> end_round;  // nullopt: unbounded
  bool fast = true;
  Ballot ballot;

  static RoundMeta system_default() { return RoundMeta{}; }
  bool covers(RoundIndex r) const { return r >= start_round && (!end_round || r <= *end_round); }
  bool valid() const { return !end_round || start_round <= *end_round; }
  bool operator==(const RoundMeta&) const = default;
};

struct QuorumSpec {
  std::uint32_t n = 1;
  std::uint32_t q_classic = 1;
  std::uint32_t q_fast = 1;

  bool valid() const;
  // Minimum overlap between one fast and one classic quorum.
  std::uint32_t fast_classic_overlap() const { return q_fast + q_classic - n; }
  bool operator==(const QuorumSpec&) const = default;
};

QuorumSpec quorum_sizes(std::uint32_t n);

// Exact non-negative-denominator fraction; used for the demarcation limit.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational of(std::int64_t n, std::int64_t d = 1);
  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::strong_ordering operator<=>(const Rational& o) const;
  bool operator==(const Rational& o) const { return (*this <=> o) == 0; }
  std::strong_ordering operator<=>(std::int64_t v) const { return *this <=> Rational{v, 1}; }
  bool operator==(std::int64_t v) const { return (*this <=> v) == 0; }
  std::string str() const;
};

// Record value: integer attributes plus a deletion marker.
struct Value {
  std::map<std::string, std::int64_t> attrs;
  bool tombstone = false;

  std::int64_t get(const std::string& attr, std::int64_t dflt = 0) const;
  bool operator==(const Value&) const = default;
};

enum class Verdict : std::uint8_t { accept, reject };
enum class Decision : std::uint8_t { commit, abort };

const char* to_string(Verdict v);
const char* to_string(Decision d);

struct Constraint {
  std::optional<std::int64_t> lo;
  std::optional<std::int64_t> hi;
  bool operator==(const Constraint&) const = default;
};

// v_read -> v_write. An empty read_version denotes an insert.
struct PhysicalUpdate {
  std::optional<RoundIndex> read_version;
  Value write_value;
  // Inserts only: open round at which the record was read as absent. Like
  // read_version for updates, it pins the one round the insert can win.
  RoundIndex insert_round = 0;
  bool operator==(const PhysicalUpdate&) const = default;
};

struct CommutativeUpdate {
  std::map<std::string, std::int64_t> deltas;
  std::map<std::string, Constraint> constraints;
  // Commutative round the transaction observed; replicas only accept the
  // option in that round.
  RoundIndex round = 0;
  bool operator==(const CommutativeUpdate&) const = default;
};

struct UpdateOption {
  TxnId txn = 0;
  Key key;
  std::variant<PhysicalUpdate, CommutativeUpdate> update;
  std::vector<Key> writeset;  // all keys of the transaction, including `key`
  NodeId coordinator = 0;     // where verdicts are reported
  bool remote_callback = false;

  bool is_commutative() const { return std::holds_alternative<CommutativeUpdate>(update); }
  const PhysicalUpdate& physical() const { return std::get<PhysicalUpdate>(update); }
  const CommutativeUpdate& commutative() const { return std::get<CommutativeUpdate>(update); }
  bool well_formed() const;
  bool operator==(const UpdateOption&) const = default;
};

using OptionRef = std::shared_ptr<const UpdateOption>;

struct Entry {
  OptionRef option;
  Verdict verdict = Verdict::reject;
  bool operator==(const Entry& o) const {
    return verdict == o.verdict && option->txn == o.option->txn;
  }
};

// Value of one Paxos round: the first entry is the round's primary option;
// physical rounds carry at most one accept and any further entries are
// dual-learned rejects. Commutative rounds may accept many entries.
using CStruct = std::vector<Entry>;

const Entry* find_entry(const CStruct& c, TxnId txn);
bool is_prefix(const CStruct& prefix, const CStruct& of);

struct Version {
  RoundIndex index = 0;
  Value value;
  bool absent = false;  // no live row (never inserted, insert aborted, deleted)
  TxnId committed_by = 0;
  bool operator==(const Version&) const = default;
};

// Stable textual forms used by logs, traces and digests.
nlohmann::json to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);
nlohmann::json to_json(const UpdateOption& o);
UpdateOption option_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Ballot& b);
Ballot ballot_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CStruct& c);
CStruct cstruct_from_json(const nlohmann::json& j);

std::uint64_t fnv1a(std::string_view s);

}  // namespace mdcc
