#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace apa {

// Item id -> fixed-length embedding. Items keep file order; embeddings are
// stored row-major in one buffer.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  explicit ItemCatalog(std::size_t dim) : dim_(dim) {}

  // Throws apa::Error on duplicate id, wrong length or non-finite entries.
  void add(std::string item_id, std::span<const double> embedding,
           std::optional<std::string> text = std::nullopt);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t index) const { return ids_.at(index); }
  const std::optional<std::string>& text(std::size_t index) const { return texts_.at(index); }

  bool contains(const std::string& item_id) const { return index_.count(item_id) != 0; }
  std::optional<std::size_t> find(const std::string& item_id) const;
  // Throws apa::Error("unknown_item") when absent.
  std::size_t index_of(const std::string& item_id) const;

  std::span<const double> embedding(std::size_t index) const {
    return {data_.data() + index * dim_, dim_};
  }
  std::span<const double> embedding(const std::string& item_id) const {
    return embedding(index_of(item_id));
  }

  bool operator==(const ItemCatalog& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_ &&
           texts_ == other.texts_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<std::optional<std::string>> texts_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct PreferenceRecord {
  std::string annotator_id;
  std::string cohort_id;
  std::string chosen;
  std::string rejected;

  bool operator==(const PreferenceRecord&) const = default;
};

struct PreferenceDataset {
  std::vector<PreferenceRecord> records;
  // Free-form origin tag, e.g. "t=0" for the base population.
  std::string provenance;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  // Record counts keyed by annotator, sorted by id.
  std::map<std::string, std::size_t> annotator_counts() const;
  std::vector<std::string> annotators() const;

  bool operator==(const PreferenceDataset&) const = default;
};

ItemCatalog load_item_catalog(const std::filesystem::path& path);
ItemCatalog parse_item_catalog(std::istream& in);
void write_item_catalog(std::ostream& out, const ItemCatalog& catalog);
void save_item_catalog(const std::filesystem::path& path, const ItemCatalog& catalog);

PreferenceDataset load_preferences(const std::filesystem::path& path,
                                   const ItemCatalog& catalog);
PreferenceDataset parse_preferences(std::istream& in, const ItemCatalog& catalog);
void write_preferences(std::ostream& out, const PreferenceDataset& data);
void save_preferences(const std::filesystem::path& path, const PreferenceDataset& data);

// Checks chosen != rejected and catalog membership for every record.
void validate_preferences(const PreferenceDataset& data, const ItemCatalog& catalog);

// Keeps the records of annotators with at least `min_count` records.
PreferenceDataset filter_min_count(const PreferenceDataset& data, std::size_t min_count);

struct HoldoutSplit {
  PreferenceDataset train;
  PreferenceDataset holdout;
};

// Per annotator, ceil(fraction * count) records go to the holdout set, drawn
// uniformly without replacement. Both halves keep the input record order.
HoldoutSplit split_holdout(const PreferenceDataset& data, double fraction, std::uint64_t seed);

}  // namespace apa
