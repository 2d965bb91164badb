#pragma once

// Test-only reference computations, written independently of the library's
// indexed/vectorised paths.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "apa/preference_data.hpp"
#include "apa/reward_basis.hpp"

namespace apa::test {

// Direct evaluation of sum over records of -log(e^{b r_i} / (e^{b r_i} + e^{b r_j})).
inline double naive_nll(const BasisModel& m, const WeightTable& w, const PreferenceDataset& data,
                        const ItemCatalog& catalog) {
  auto reward = [&](const std::string& annotator, const std::string& item) {
    const auto x = catalog.embedding(item);
    const auto& wn = w.entries.at(annotator).w;
    long double r = 0.0;
    for (std::size_t k = 0; k < m.K; ++k) {
      long double v = m.bias[k];
      for (std::size_t c = 0; c < m.d; ++c) v += static_cast<long double>(m.theta[k * m.d + c]) * x[c];
      r += wn[k] * v;
    }
    return r;
  };
  long double total = 0.0;
  for (const auto& rec : data.records) {
    const long double ri = m.beta * reward(rec.annotator_id, rec.chosen);
    const long double rj = m.beta * reward(rec.annotator_id, rec.rejected);
    const long double mx = std::max(ri, rj);
    total += -(ri - (mx + std::log(std::exp(ri - mx) + std::exp(rj - mx))));
  }
  return static_cast<double>(total);
}

struct RandomInstance {
  BasisModel model;
  WeightTable weights;
  PreferenceDataset data;
  ItemCatalog catalog;
};

// Random model, simplex weights and a small dataset over a random catalog.
inline RandomInstance random_instance(std::uint64_t seed, std::size_t K, std::size_t d, std::size_t records,
                                      std::size_t annotators = 3, std::size_t items = 12) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RandomInstance inst;
  inst.catalog = ItemCatalog(d);
  std::vector<double> emb(d);
  for (std::size_t i = 0; i < items; ++i) {
    for (double& x : emb) x = normal(rng);
    inst.catalog.add("i" + std::to_string(i), emb);
  }
  inst.model = BasisModel::zeros(K, d, 0.5 + unit(rng));
  for (double& t : inst.model.theta) t = 0.7 * normal(rng);
  for (double& b : inst.model.bias) b = normal(rng);
  for (std::size_t a = 0; a < annotators; ++a) {
    std::vector<double> w(K);
    double s = 0.0;
    for (double& x : w) s += (x = unit(rng) + 0.05);
    for (double& x : w) x /= s;
    inst.weights.entries.emplace("a" + std::to_string(a), WeightEntry{"c", w});
  }
  for (std::size_t r = 0; r < records; ++r) {
    const std::size_t i = rng() % items;
    std::size_t j = rng() % (items - 1);
    if (j >= i) ++j;
    inst.data.records.push_back({"a" + std::to_string(rng() % annotators), "c", "i" + std::to_string(i),
                                 "i" + std::to_string(j)});
  }
  return inst;
}

}  // namespace apa::test
