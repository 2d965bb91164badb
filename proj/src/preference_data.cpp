#include "apa/preference_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "apa/error.hpp"
#include "json.hpp"

namespace apa {

using nlohmann::json;

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw Error("parse", at_line(line) + "expected a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw Error("parse", at_line(line) + e.what());
  }
}

std::string require_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw Error("parse", at_line(line) + "missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  return in;
}

}  // namespace

void ItemCatalog::add(std::string item_id, std::span<const double> embedding,
                      std::optional<std::string> text) {
  if (dim_ == 0) {
    if (embedding.empty()) throw Error("dimension", "embedding must have at least one entry");
    dim_ = embedding.size();
  }
  if (embedding.size() != dim_) {
    throw Error("dimension", "embedding for '" + item_id + "' has length " +
                                 std::to_string(embedding.size()) + ", expected " +
                                 std::to_string(dim_));
  }
  for (double v : embedding) {
    if (!std::isfinite(v)) throw Error("non_finite", "embedding for '" + item_id + "' is not finite");
  }
  if (index_.count(item_id)) throw Error("duplicate_item", "duplicate item_id '" + item_id + "'");
  index_.emplace(item_id, ids_.size());
  ids_.push_back(std::move(item_id));
  texts_.push_back(std::move(text));
  data_.insert(data_.end(), embedding.begin(), embedding.end());
}

std::optional<std::size_t> ItemCatalog::find(const std::string& item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ItemCatalog::index_of(const std::string& item_id) const {
  auto it = index_.find(item_id);
  if (it == index_.end()) throw Error("unknown_item", "unknown item_id '" + item_id + "'");
  return it->second;
}

ItemCatalog parse_item_catalog(std::istream& in) {
  ItemCatalog catalog;
  std::string text;
  std::size_t line = 0;
  std::vector<double> embedding;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json j = parse_line(text, line);
    std::string id = require_string(j, "item_id", line);
    auto emb = j.find("embedding");
    if (emb == j.end() || !emb->is_array()) {
      throw Error("parse", at_line(line) + "missing array field 'embedding'");
    }
    embedding.clear();
    for (const auto& v : *emb) {
      if (!v.is_number()) throw Error("parse", at_line(line) + "embedding entries must be numbers");
      embedding.push_back(v.get<double>());
    }
    std::optional<std::string> item_text;
    if (auto t = j.find("text"); t != j.end() && !t->is_null()) {
      if (!t->is_string()) throw Error("parse", at_line(line) + "'text' must be a string");
      item_text = t->get<std::string>();
    }
    try {
      catalog.add(std::move(id), embedding, std::move(item_text));
    } catch (const Error& e) {
      throw Error(e.code(), at_line(line) + e.what());
    }
  }
  if (catalog.empty()) throw Error("empty_catalog", "catalog contains no items");
  return catalog;
}

ItemCatalog load_item_catalog(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  try {
    return parse_item_catalog(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_item_catalog(std::ostream& out, const ItemCatalog& catalog) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    auto emb = catalog.embedding(i);
    json j = {{"item_id", catalog.id(i)},
              {"embedding", std::vector<double>(emb.begin(), emb.end())}};
    if (catalog.text(i)) j["text"] = *catalog.text(i);
    out << j.dump() << '\n';
  }
}

void save_item_catalog(const std::filesystem::path& path, const ItemCatalog& catalog) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  write_item_catalog(out, catalog);
}

std::map<std::string, std::size_t> PreferenceDataset::annotator_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[r.annotator_id];
  return counts;
}

std::vector<std::string> PreferenceDataset::annotators() const {
  std::vector<std::string> out;
  for (const auto& [id, n] : annotator_counts()) out.push_back(id);
  return out;
}

namespace {

void validate_record(const PreferenceRecord& r, const ItemCatalog& catalog, const std::string& where) {
  if (r.chosen == r.rejected) {
    throw Error("self_comparison", where + "chosen and rejected are both '" + r.chosen + "'");
  }
  for (const auto* id : {&r.chosen, &r.rejected}) {
    if (!catalog.contains(*id)) throw Error("unknown_item", where + "unknown item_id '" + *id + "'");
  }
}

}  // namespace

void validate_preferences(const PreferenceDataset& data, const ItemCatalog& catalog) {
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    validate_record(data.records[i], catalog, "record " + std::to_string(i) + ": ");
  }
}

PreferenceDataset parse_preferences(std::istream& in, const ItemCatalog& catalog) {
  PreferenceDataset data;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json j = parse_line(text, line);
    PreferenceRecord r{require_string(j, "annotator_id", line), require_string(j, "cohort_id", line),
                       require_string(j, "chosen", line), require_string(j, "rejected", line)};
    validate_record(r, catalog, at_line(line));
    data.records.push_back(std::move(r));
  }
  return data;
}

PreferenceDataset load_preferences(const std::filesystem::path& path, const ItemCatalog& catalog) {
  auto in = open_or_throw(path);
  try {
    PreferenceDataset data = parse_preferences(in, catalog);
    data.provenance = path.filename().string();
    return data;
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_preferences(std::ostream& out, const PreferenceDataset& data) {
  for (const auto& r : data.records) {
    json j = {{"annotator_id", r.annotator_id},
              {"cohort_id", r.cohort_id},
              {"chosen", r.chosen},
              {"rejected", r.rejected}};
    out << j.dump() << '\n';
  }
}

void save_preferences(const std::filesystem::path& path, const PreferenceDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  write_preferences(out, data);
}

PreferenceDataset filter_min_count(const PreferenceDataset& data, std::size_t min_count) {
  const auto counts = data.annotator_counts();
  PreferenceDataset out;
  out.provenance = data.provenance;
  for (const auto& r : data.records) {
    if (counts.at(r.annotator_id) >= min_count) out.records.push_back(r);
  }
  return out;
}

HoldoutSplit split_holdout(const PreferenceDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error("invalid_argument", "holdout fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_annotator;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    by_annotator[data.records[i].annotator_id].push_back(i);
  }
  std::vector<char> in_holdout(data.records.size(), 0);
  std::mt19937_64 rng(seed);
  for (const auto& [id, rows] : by_annotator) {
    if (rows.size() < 2) {
      throw Error("too_few_records", "annotator '" + id + "' has a single record; cannot split");
    }
    // The slack keeps products like 0.1 * 30 from rounding up to 4.
    const auto take = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(rows.size()) - 1e-9));
    std::vector<std::size_t> picked;
    std::sample(rows.begin(), rows.end(), std::back_inserter(picked), take, rng);
    for (std::size_t i : picked) in_holdout[i] = 1;
  }
  HoldoutSplit split;
  split.train.provenance = data.provenance;
  split.holdout.provenance = data.provenance;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    (in_holdout[i] ? split.holdout : split.train).records.push_back(data.records[i]);
  }
  return split;
}

}  // namespace apa
