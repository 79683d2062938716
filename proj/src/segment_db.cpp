#include "vical/segment_db.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vical {

const char* to_string(SelectionMode mode) {
  return mode == SelectionMode::kInformative ? "informative" : "least-informative";
}

SelectionMode selection_mode_from_string(const std::string& s) {
  if (s == "informative") return SelectionMode::kInformative;
  if (s == "least-informative") return SelectionMode::kLeastInformative;
  throw std::invalid_argument("unknown selection mode '" + s + "'");
}

SegmentDatabase::SegmentDatabase(std::vector<std::string> group_names, std::size_t capacity,
                                 SelectionMode mode)
    : names_(std::move(group_names)), capacity_(capacity), mode_(mode), tables_(names_.size()) {
  if (names_.empty()) throw std::invalid_argument("segment database needs at least one group");
}

std::vector<int> SegmentDatabase::update(SegmentRecord record) {
  const std::int64_t id = record.segment.id;
  if (record.score.segment_id != id) {
    throw std::invalid_argument("score belongs to segment " + std::to_string(record.score.segment_id) +
                                ", not " + std::to_string(id));
  }
  if (record.score.entropies.size() != tables_.size()) {
    throw std::invalid_argument("segment " + std::to_string(id) + " has " +
                                std::to_string(record.score.entropies.size()) + " entropies for " +
                                std::to_string(tables_.size()) + " tables");
  }
  if (!offered_.insert(id).second) {
    throw std::invalid_argument("segment " + std::to_string(id) + " was already offered");
  }

  std::vector<int> accepted;
  std::vector<std::int64_t> evicted;
  for (std::size_t q = 0; q < tables_.size(); ++q) {
    const double h = record.score.entropies[q];
    if (!std::isfinite(h) || capacity_ == 0) continue;
    auto& table = tables_[q];
    const Entry candidate{key(h), id};
    if (table.size() >= capacity_) {
      const auto worst = std::prev(table.end());
      if (!(candidate < *worst)) continue;
      evicted.push_back(worst->second);
      table.erase(worst);
    }
    table.insert(candidate);
    accepted.push_back(static_cast<int>(q));
  }
  if (!accepted.empty()) {
    auto shared = std::make_shared<const SegmentRecord>(std::move(record));
    store_[id] = Stored{std::move(shared), static_cast<int>(accepted.size())};
  }
  for (std::int64_t e : evicted) release(e);
  return accepted;
}

void SegmentDatabase::release(std::int64_t id) {
  const auto it = store_.find(id);
  if (it != store_.end() && --it->second.tables == 0) store_.erase(it);
}

bool SegmentDatabase::is_ready(std::size_t quota) const {
  return is_ready(std::vector<std::size_t>(tables_.size(), quota));
}

bool SegmentDatabase::is_ready(const std::vector<std::size_t>& quotas) const {
  if (quotas.size() != tables_.size()) throw std::invalid_argument("one quota per table expected");
  for (std::size_t q = 0; q < tables_.size(); ++q) {
    if (tables_[q].size() < quotas[q]) return false;
  }
  return true;
}

std::vector<std::shared_ptr<const SegmentRecord>> SegmentDatabase::drain() const {
  std::vector<std::shared_ptr<const SegmentRecord>> out;
  out.reserve(store_.size());
  for (const auto& [id, s] : store_) out.push_back(s.record);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    const double ta = a->segment.start_time(), tb = b->segment.start_time();
    return ta != tb ? ta < tb : a->segment.id < b->segment.id;
  });
  return out;
}

double SegmentDatabase::worst_entropy(std::size_t q) const {
  const auto& table = tables_.at(q);
  if (table.empty()) return -std::numeric_limits<double>::infinity();
  return mode_ == SelectionMode::kInformative ? table.rbegin()->first : -table.begin()->first;
}

nlohmann::ordered_json SegmentDatabase::snapshot() const {
  nlohmann::ordered_json j;
  j["mode"] = to_string(mode_);
  j["capacity"] = capacity_;
  j["stored_segments"] = store_.size();
  nlohmann::ordered_json tables = nlohmann::ordered_json::array();
  for (std::size_t q = 0; q < tables_.size(); ++q) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const Entry& e : tables_[q]) {
      const double h = mode_ == SelectionMode::kInformative ? e.first : -e.first;
      entries.push_back({{"segment_id", e.second}, {"entropy", h}});
    }
    tables.push_back({{"group", names_[q]}, {"entries", entries}});
  }
  j["tables"] = tables;
  return j;
}

std::vector<std::vector<std::int64_t>> offline_selection(const std::vector<SegmentScore>& scores,
                                                         std::size_t groups, std::size_t capacity,
                                                         SelectionMode mode) {
  std::vector<std::vector<std::int64_t>> out(groups);
  for (std::size_t q = 0; q < groups; ++q) {
    std::vector<SegmentDatabase::Entry> all;
    for (const SegmentScore& s : scores) {
      const double h = s.entropies.at(q);
      if (!std::isfinite(h)) continue;
      all.emplace_back(mode == SelectionMode::kInformative ? h : -h, s.segment_id);
    }
    std::sort(all.begin(), all.end());
    all.resize(std::min(all.size(), capacity));
    for (const auto& e : all) out[q].push_back(e.second);
    std::sort(out[q].begin(), out[q].end());
  }
  return out;
}

}  // namespace vical
