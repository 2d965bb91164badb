#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apa/preference_data.hpp"
#include "apa/reward_basis.hpp"
#include "json.hpp"

namespace apa {

struct TrainConfig {
  std::size_t K = 8;
  std::size_t max_epochs = 500;
  double lr_theta = 0.05;
  double lr_w = 0.1;
  // Stop once the relative NLL improvement over an epoch drops below this.
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  double init_scale = 0.01;
  double l2_theta = 0.0;
  std::size_t max_halvings = 20;
  std::optional<double> holdout_fraction;
  double beta = 1.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

enum class StopReason { kMaxEpochs, kTolerance, kHalvingsExhausted };
const char* to_string(StopReason reason);

struct HalvingEvent {
  std::size_t epoch = 0;
  double lr_theta = 0.0;
  double lr_w = 0.0;
  std::string annotator;  // set for per-annotator weight fits

  bool operator==(const HalvingEvent&) const = default;
};

struct AnnotatorFit {
  std::size_t epochs = 0;
  StopReason stop_reason = StopReason::kMaxEpochs;
  double initial_nll = 0.0;
  double final_nll = 0.0;

  bool operator==(const AnnotatorFit&) const = default;
};

struct TrainReport {
  // epoch_nll[0] is the objective at initialization; entry e is the accepted
  // objective after epoch e.
  std::vector<double> epoch_nll;
  std::vector<HalvingEvent> halvings;
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::size_t epochs = 0;
  double final_nll = 0.0;
  // Filled by fit_weights only; one independent solve per annotator.
  std::map<std::string, AnnotatorFit> per_annotator;

  bool operator==(const TrainReport&) const = default;
};

nlohmann::json to_json(const TrainReport& report);

// Euclidean projection onto the probability simplex (sort-and-threshold).
std::vector<double> project_to_simplex(std::span<const double> v);
void project_to_simplex_inplace(std::span<double> v);

struct JointFit {
  BasisModel basis;
  WeightTable weights;
  TrainReport report;
};

// Joint projected gradient descent over theta and all annotator
// weights, with step halving on any epoch that would raise the objective.
JointFit train_joint(const PreferenceDataset& data, const ItemCatalog& catalog, const TrainConfig& cfg);

struct WeightFit {
  WeightTable weights;
  TrainReport report;
};

// Fits simplex weights for each annotator in `data` against a
// frozen basis. Each annotator is solved independently from the uniform
// vector; annotators without records do not appear in the output.
WeightFit fit_weights(const BasisModel& basis, const PreferenceDataset& data, const ItemCatalog& catalog,
                      const TrainConfig& cfg);

}  // namespace apa
