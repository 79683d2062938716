#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vical/information.hpp"
#include "vical/types.hpp"

namespace vical {

struct SegmentRecord {
  Segment segment;
  SegmentScore score;
};

enum class SelectionMode {
  kInformative,       // keep the lowest entropies
  kLeastInformative,  // keep the highest finite entropies (baseline)
};

const char* to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(const std::string& s);  // throws std::invalid_argument

// Q bounded tables of segment ids over one shared, refcounted payload store.
// Updates must be serialized by the caller.
class SegmentDatabase {
 public:
  // (ranking key, segment id); the key is the entropy, negated in
  // least-informative mode, so every table keeps its smallest keys.
  using Entry = std::pair<double, std::int64_t>;

  SegmentDatabase(std::vector<std::string> group_names, std::size_t capacity,
                  SelectionMode mode = SelectionMode::kInformative);

  // Offers the record to every table; returns the indices of the tables that
  // took it. A table takes it when not full or when its key is strictly below
  // the table's worst entry (ties ordered by segment id). Non-finite entropies
  // are never stored. Throws std::invalid_argument for a segment id offered
  // before or a score with the wrong number of groups.
  std::vector<int> update(SegmentRecord record);

  bool is_ready(std::size_t quota) const;
  bool is_ready(const std::vector<std::size_t>& quotas) const;

  // Every stored segment once, by start time then id. The database is unchanged.
  std::vector<std::shared_ptr<const SegmentRecord>> drain() const;

  std::size_t groups() const { return tables_.size(); }
  std::size_t capacity() const { return capacity_; }
  SelectionMode mode() const { return mode_; }
  const std::set<Entry>& table(std::size_t q) const { return tables_.at(q); }
  // Entropy of the worst entry of table q; -inf when empty.
  double worst_entropy(std::size_t q) const;
  std::size_t stored() const { return store_.size(); }
  bool contains(std::int64_t id) const { return store_.count(id) > 0; }

  nlohmann::ordered_json snapshot() const;

 private:
  struct Stored {
    std::shared_ptr<const SegmentRecord> record;
    int tables = 0;
  };

  double key(double entropy) const { return mode_ == SelectionMode::kInformative ? entropy : -entropy; }
  void release(std::int64_t id);

  std::vector<std::string> names_;
  std::size_t capacity_;
  SelectionMode mode_;
  std::vector<std::set<Entry>> tables_;
  std::map<std::int64_t, Stored> store_;
  std::set<std::int64_t> offered_;
};

// Reference selection: per group the `capacity` smallest (key, id) over all
// finite scores, as sorted id lists.
std::vector<std::vector<std::int64_t>> offline_selection(const std::vector<SegmentScore>& scores,
                                                         std::size_t groups, std::size_t capacity,
                                                         SelectionMode mode);

}  // namespace vical
