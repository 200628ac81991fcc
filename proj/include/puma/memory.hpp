#pragma once

// Two-level semantic memory. Short-term entries are private to a session,
// long-term entries are shared across sessions. Retrieval is a linear scan
// by L2 distance between unit embeddings.

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "puma/backend.hpp"

namespace puma {

enum class Tier { STM, LTM };

std::string_view to_string(Tier t);
Tier tier_from_string(std::string_view s);

struct MemoryEntry {
  std::string id;
  Tier tier = Tier::STM;
  std::string text;
  std::vector<double> embedding;
  int turn_created = 0;
  std::string session_id;
  bool promoted = false;  // STM entry made visible to other sessions
  std::size_t seq = 0;    // insertion order

  nlohmann::ordered_json to_json() const;
  static MemoryEntry from_json(const nlohmann::json& j);
};

struct ScoredEntry {
  MemoryEntry entry;
  double distance = 0.0;
};

struct Retrieval {
  std::vector<ScoredEntry> relevant;  // ascending distance, older first on ties
  std::vector<MemoryEntry> context;   // most recent first
};

struct RetrieveParams {
  std::size_t k = 1;
  double dist_thres = 1.5;
  std::size_t context_n = 30;
};

class MemoryStore {
 public:
  MemoryStore() = default;
  MemoryStore(const MemoryStore& other);
  MemoryStore& operator=(const MemoryStore& other);

  /// Throws EmptyText.
  std::string add(TextBackend& backend, Tier tier, const std::string& text, int turn,
                  const std::string& session);

  /// Entries visible to `session`: its own STM, promoted STM, and all LTM.
  Retrieval retrieve(TextBackend& backend, const std::string& session,
                     const std::string& query_text, const RetrieveParams& params = {}) const;

  /// Stores a summary of the session's STM as an LTM entry when `turn` is a
  /// positive multiple of every_n_turns and no summary exists for that turn.
  std::optional<std::string> consolidate(TextBackend& backend, const std::string& session,
                                         int turn, int every_n_turns);

  void promote(const std::string& id);

  std::vector<MemoryEntry> entries() const;
  std::size_t size() const;

  void save_jsonl(const std::filesystem::path& path) const;
  static MemoryStore load_jsonl(const std::filesystem::path& path);

 private:
  std::string insert(MemoryEntry e);

  mutable std::shared_mutex mu_;
  std::vector<MemoryEntry> entries_;
  std::map<std::string, int> last_consolidated_;  // session -> turn
};

}  // namespace puma
