#include "puma/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

namespace puma {

std::string_view to_string(Tier t) { return t == Tier::STM ? "STM" : "LTM"; }

Tier tier_from_string(std::string_view s) {
  if (s == "STM") return Tier::STM;
  if (s == "LTM") return Tier::LTM;
  throw Error(ErrorCode::ParseError, "unknown memory tier '" + std::string(s) + "'");
}

nlohmann::ordered_json MemoryEntry::to_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["tier"] = std::string(to_string(tier));
  j["text"] = text;
  j["embedding"] = embedding;
  j["turn_created"] = turn_created;
  j["session_id"] = session_id;
  j["promoted"] = promoted;
  return j;
}

MemoryEntry MemoryEntry::from_json(const nlohmann::json& j) {
  MemoryEntry e;
  e.id = j.at("id").get<std::string>();
  e.tier = tier_from_string(j.at("tier").get<std::string>());
  e.text = j.at("text").get<std::string>();
  e.embedding = j.at("embedding").get<std::vector<double>>();
  e.turn_created = j.at("turn_created").get<int>();
  e.session_id = j.at("session_id").get<std::string>();
  e.promoted = j.value("promoted", false);
  double norm = 0.0;
  for (double x : e.embedding) norm += x * x;
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
    throw Error(ErrorCode::ParseError, "memory entry '" + e.id + "' embedding is not unit norm");
  return e;
}

MemoryStore::MemoryStore(const MemoryStore& other) {
  std::shared_lock lock(other.mu_);
  entries_ = other.entries_;
  last_consolidated_ = other.last_consolidated_;
}

MemoryStore& MemoryStore::operator=(const MemoryStore& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_);
  std::shared_lock other_lock(other.mu_);
  entries_ = other.entries_;
  last_consolidated_ = other.last_consolidated_;
  return *this;
}

std::string MemoryStore::insert(MemoryEntry e) {
  std::scoped_lock lock(mu_);
  e.seq = entries_.size();
  e.id = std::string(to_string(e.tier)) + ":" + e.session_id + ":" +
         std::to_string(e.turn_created) + ":" + std::to_string(e.seq);
  entries_.push_back(e);
  return e.id;
}

std::string MemoryStore::add(TextBackend& backend, Tier tier, const std::string& text, int turn,
                             const std::string& session) {
  if (text.empty()) throw Error(ErrorCode::EmptyText, "memory text is empty");
  MemoryEntry e;
  e.tier = tier;
  e.text = text;
  e.embedding = backend.embed(text);
  e.turn_created = turn;
  e.session_id = session;
  return insert(std::move(e));
}

Retrieval MemoryStore::retrieve(TextBackend& backend, const std::string& session,
                                const std::string& query_text, const RetrieveParams& params) const {
  Retrieval out;
  std::vector<MemoryEntry> visible;
  {
    std::shared_lock lock(mu_);
    for (const auto& e : entries_)
      if (e.tier == Tier::LTM || e.session_id == session || e.promoted) visible.push_back(e);
  }
  if (visible.empty()) return out;

  if (params.k > 0 && !query_text.empty()) {
    const std::vector<double> q = backend.embed(query_text);
    for (const auto& e : visible) {
      if (e.embedding.size() != q.size()) continue;
      double d2 = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) d2 += (q[i] - e.embedding[i]) * (q[i] - e.embedding[i]);
      const double d = std::sqrt(d2);
      if (d <= params.dist_thres) out.relevant.push_back({e, d});
    }
    std::stable_sort(out.relevant.begin(), out.relevant.end(),
                     [](const ScoredEntry& a, const ScoredEntry& b) {
                       if (a.distance != b.distance) return a.distance < b.distance;
                       if (a.entry.turn_created != b.entry.turn_created)
                         return a.entry.turn_created < b.entry.turn_created;
                       return a.entry.seq < b.entry.seq;
                     });
    if (out.relevant.size() > params.k) out.relevant.resize(params.k);
  }

  // The querying session's entries rank as most recent, then by turn, then insertion.
  std::stable_sort(visible.begin(), visible.end(), [&](const MemoryEntry& a, const MemoryEntry& b) {
    const bool own_a = a.session_id == session, own_b = b.session_id == session;
    if (own_a != own_b) return own_a;
    if (a.turn_created != b.turn_created) return a.turn_created > b.turn_created;
    return a.seq > b.seq;
  });
  if (visible.size() > params.context_n) visible.resize(params.context_n);
  out.context = std::move(visible);
  return out;
}

std::optional<std::string> MemoryStore::consolidate(TextBackend& backend,
                                                    const std::string& session, int turn,
                                                    int every_n_turns) {
  if (every_n_turns <= 0)
    throw Error(ErrorCode::InvalidConfig, "every_n_turns must be positive");
  if (turn <= 0 || turn % every_n_turns != 0) return std::nullopt;
  std::vector<std::string> texts;
  {
    std::shared_lock lock(mu_);
    auto it = last_consolidated_.find(session);
    const int since = it == last_consolidated_.end() ? 0 : it->second;
    if (since >= turn) return std::nullopt;
    for (const auto& e : entries_)
      if (e.tier == Tier::STM && e.session_id == session && e.turn_created > since &&
          e.turn_created <= turn)
        texts.push_back(e.text);
  }
  std::string summary = backend.summarize(texts);
  if (summary.empty()) summary = "(no short-term content up to turn " + std::to_string(turn) + ")";
  std::string id = add(backend, Tier::LTM, summary, turn, session);
  std::scoped_lock lock(mu_);
  last_consolidated_[session] = turn;
  return id;
}

void MemoryStore::promote(const std::string& id) {
  std::scoped_lock lock(mu_);
  for (auto& e : entries_)
    if (e.id == id) {
      e.promoted = true;
      return;
    }
  throw Error(ErrorCode::UnknownLabel, "no memory entry '" + id + "'");
}

std::vector<MemoryEntry> MemoryStore::entries() const {
  std::shared_lock lock(mu_);
  return entries_;
}

std::size_t MemoryStore::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

void MemoryStore::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  std::shared_lock lock(mu_);
  for (const auto& e : entries_) out << e.to_json().dump() << '\n';
}

MemoryStore MemoryStore::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  MemoryStore store;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      MemoryEntry e = MemoryEntry::from_json(nlohmann::json::parse(line));
      e.seq = store.entries_.size();
      if (e.tier == Tier::LTM) {
        int& last = store.last_consolidated_[e.session_id];
        last = std::max(last, e.turn_created);
      }
      store.entries_.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + ex.what());
    }
  }
  return store;
}

}  // namespace puma
