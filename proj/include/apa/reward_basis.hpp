#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "apa/preference_data.hpp"
#include "json.hpp"

namespace apa {

// K linear reward heads over d-dimensional item embeddings:
//   v_k(x) = theta[k] . x + bias[k]
// The bias is kept for pointwise use but cancels in every pairwise quantity,
// so its gradient is identically zero.
struct BasisModel {
  std::size_t K = 0;
  std::size_t d = 0;
  double beta = 1.0;
  std::vector<double> theta;  // K x d, row-major
  std::vector<double> bias;   // K

  static BasisModel zeros(std::size_t K, std::size_t d, double beta = 1.0);

  std::span<const double> head(std::size_t k) const { return {theta.data() + k * d, d}; }
  std::span<double> head(std::size_t k) { return {theta.data() + k * d, d}; }

  // Throws apa::Error("invalid_model") on shape, finiteness or beta violations.
  void validate() const;

  bool operator==(const BasisModel&) const = default;
};

struct WeightEntry {
  std::string cohort_id;
  std::vector<double> w;

  bool operator==(const WeightEntry&) const = default;
};

// Per-annotator simplex weights, ordered by annotator id.
struct WeightTable {
  std::map<std::string, WeightEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  bool contains(const std::string& id) const { return entries.count(id) != 0; }
  // Throws apa::Error("missing_annotator").
  const WeightEntry& at(const std::string& id) const;

  // Every w has length K, is finite, non-negative and sums to 1 within 1e-9.
  void validate(std::size_t K) const;

  bool operator==(const WeightTable&) const = default;
};

constexpr double kSimplexTolerance = 1e-9;
bool on_simplex(std::span<const double> w, double tol = kSimplexTolerance);

// Logistic sigma(z) arranged so that logistic(z) + logistic(-z) == 1 exactly.
double logistic(double z);
// log(1 + exp(x)) without overflow.
double softplus(double x);

std::vector<double> basis_rewards(const BasisModel& model, std::span<const double> item);
void basis_rewards_into(const BasisModel& model, std::span<const double> item, std::span<double> out);

double personal_reward(std::span<const double> w, std::span<const double> basis_values);

// Boltzmann-rational choice probability of i over j.
double bt_prob(double r_i, double r_j, double beta);
// -log bt_prob(r_i, r_j, beta), evaluated as softplus(-beta (r_i - r_j)).
double bt_nll(double r_i, double r_j, double beta);

double dataset_nll(const BasisModel& model, const WeightTable& weights,
                   const PreferenceDataset& data, const ItemCatalog& catalog);

struct NllGradients {
  std::vector<double> theta;  // K x d
  std::vector<double> bias;   // K, always zero
  std::map<std::string, std::vector<double>> w;
};

NllGradients nll_gradients(const BasisModel& model, const WeightTable& weights,
                           const PreferenceDataset& data, const ItemCatalog& catalog);

// Integer-indexed view of a dataset used by the optimizers. Annotators are
// sorted by id; rows keep dataset order.
struct IndexedPreferences {
  struct Row {
    std::uint32_t annotator;
    std::uint32_t chosen;
    std::uint32_t rejected;
  };
  std::vector<std::string> annotators;
  std::vector<std::string> cohorts;  // cohort tag of each annotator's first record
  std::vector<std::size_t> counts;
  std::vector<Row> rows;
};

IndexedPreferences index_preferences(const PreferenceDataset& data, const ItemCatalog& catalog);

// Basis values for every catalog item, n_items x K row-major.
std::vector<double> item_basis_values(const BasisModel& model, const ItemCatalog& catalog);

// Flattened N x K weights in `index.annotators` order.
std::vector<double> gather_weights(const WeightTable& weights, const IndexedPreferences& index,
                                   std::size_t K);

double indexed_nll(const IndexedPreferences& index, std::span<const double> item_values,
                   std::span<const double> weights, std::size_t K, double beta);

// Accumulates the NLL gradient with respect to theta (K x d) and the flattened
// weights (N x K). Outputs are overwritten.
void indexed_gradients(const IndexedPreferences& index, const ItemCatalog& catalog,
                       std::span<const double> item_values, std::span<const double> weights,
                       std::size_t K, double beta, std::span<double> grad_theta,
                       std::span<double> grad_w);

// Artifact serialization.
nlohmann::json to_json(const BasisModel& model);
BasisModel basis_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WeightTable& weights);
WeightTable weights_from_json(const nlohmann::json& j);

void save_basis(const std::filesystem::path& path, const BasisModel& model);
BasisModel load_basis(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const WeightTable& weights);
WeightTable load_weights(const std::filesystem::path& path);

}  // namespace apa
