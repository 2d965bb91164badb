#include "apa/reward_basis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "apa/error.hpp"
#include "apa/kernels.hpp"

namespace apa {

using nlohmann::json;

BasisModel BasisModel::zeros(std::size_t K, std::size_t d, double beta) {
  BasisModel m;
  m.K = K;
  m.d = d;
  m.beta = beta;
  m.theta.assign(K * d, 0.0);
  m.bias.assign(K, 0.0);
  return m;
}

void BasisModel::validate() const {
  if (K < 1 || d < 1) throw Error("invalid_model", "basis model needs K >= 1 and d >= 1");
  if (theta.size() != K * d || bias.size() != K) {
    throw Error("invalid_model", "basis model arrays do not match K x d");
  }
  if (!std::isfinite(beta) || beta < 0.0) throw Error("invalid_model", "beta must be finite and >= 0");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(theta.begin(), theta.end(), finite) || !std::all_of(bias.begin(), bias.end(), finite)) {
    throw Error("invalid_model", "basis model contains non-finite entries");
  }
}

const WeightEntry& WeightTable::at(const std::string& id) const {
  auto it = entries.find(id);
  if (it == entries.end()) throw Error("missing_annotator", "no weights for annotator '" + id + "'");
  return it->second;
}

bool on_simplex(std::span<const double> w, double tol) {
  double sum = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) return false;
    sum += v;
  }
  return !w.empty() && std::abs(sum - 1.0) <= tol;
}

void WeightTable::validate(std::size_t K) const {
  for (const auto& [id, e] : entries) {
    if (e.w.size() != K) {
      throw Error("dimension", "weights for '" + id + "' have length " + std::to_string(e.w.size()) +
                                   ", expected K=" + std::to_string(K));
    }
    if (!on_simplex(e.w)) throw Error("not_simplex", "weights for '" + id + "' are not on the simplex");
  }
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  // 1 - logistic(-z) is exact here because logistic(-z) lies in [0.5, 1].
  return 1.0 - 1.0 / (1.0 + std::exp(z));
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

void basis_rewards_into(const BasisModel& model, std::span<const double> item, std::span<double> out) {
  if (item.size() != model.d) {
    throw Error("dimension", "item has length " + std::to_string(item.size()) + ", model expects d=" +
                                 std::to_string(model.d));
  }
  if (out.size() != model.K) throw Error("dimension", "output buffer must have length K");
  kernels::active().gemv(model.theta.data(), item.data(), model.bias.data(), out.data(), model.K, model.d);
}

std::vector<double> basis_rewards(const BasisModel& model, std::span<const double> item) {
  std::vector<double> out(model.K);
  basis_rewards_into(model, item, out);
  return out;
}

double personal_reward(std::span<const double> w, std::span<const double> basis_values) {
  if (w.size() != basis_values.size()) {
    throw Error("dimension", "weight vector and basis values differ in length");
  }
  return kernels::dot(w, basis_values);
}

double bt_prob(double r_i, double r_j, double beta) { return logistic(beta * (r_i - r_j)); }

double bt_nll(double r_i, double r_j, double beta) { return softplus(-beta * (r_i - r_j)); }

IndexedPreferences index_preferences(const PreferenceDataset& data, const ItemCatalog& catalog) {
  IndexedPreferences index;
  std::map<std::string, std::uint32_t> slot;
  std::map<std::string, std::string> cohort_of;
  for (const auto& r : data.records) cohort_of.try_emplace(r.annotator_id, r.cohort_id);
  for (const auto& [id, cohort] : cohort_of) {
    slot.emplace(id, static_cast<std::uint32_t>(index.annotators.size()));
    index.annotators.push_back(id);
    index.cohorts.push_back(cohort);
  }
  index.counts.assign(index.annotators.size(), 0);
  index.rows.reserve(data.records.size());
  for (const auto& r : data.records) {
    if (r.chosen == r.rejected) throw Error("self_comparison", "chosen == rejected for '" + r.chosen + "'");
    const std::uint32_t a = slot.at(r.annotator_id);
    index.rows.push_back({a, static_cast<std::uint32_t>(catalog.index_of(r.chosen)),
                          static_cast<std::uint32_t>(catalog.index_of(r.rejected))});
    ++index.counts[a];
  }
  return index;
}

std::vector<double> item_basis_values(const BasisModel& model, const ItemCatalog& catalog) {
  if (catalog.dim() != model.d) {
    throw Error("dimension", "catalog dimension " + std::to_string(catalog.dim()) +
                                 " does not match model d=" + std::to_string(model.d));
  }
  std::vector<double> values(catalog.size() * model.K);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    k.gemv(model.theta.data(), catalog.embedding(i).data(), model.bias.data(), values.data() + i * model.K,
           model.K, model.d);
  }
  return values;
}

std::vector<double> gather_weights(const WeightTable& weights, const IndexedPreferences& index,
                                   std::size_t K) {
  std::vector<double> flat;
  flat.reserve(index.annotators.size() * K);
  for (const auto& id : index.annotators) {
    const auto& e = weights.at(id);
    if (e.w.size() != K) throw Error("dimension", "weights for '" + id + "' do not have length K");
    flat.insert(flat.end(), e.w.begin(), e.w.end());
  }
  return flat;
}

double indexed_nll(const IndexedPreferences& index, std::span<const double> item_values,
                   std::span<const double> weights, std::size_t K, double beta) {
  const auto& k = kernels::active();
  double total = 0.0;
  for (const auto& row : index.rows) {
    const double* w = weights.data() + row.annotator * K;
    const double r_i = k.dot(w, item_values.data() + row.chosen * K, K);
    const double r_j = k.dot(w, item_values.data() + row.rejected * K, K);
    total += bt_nll(r_i, r_j, beta);
  }
  return total;
}

void indexed_gradients(const IndexedPreferences& index, const ItemCatalog& catalog,
                       std::span<const double> item_values, std::span<const double> weights,
                       std::size_t K, double beta, std::span<double> grad_theta,
                       std::span<double> grad_w) {
  const auto& k = kernels::active();
  const std::size_t d = catalog.dim();
  std::fill(grad_theta.begin(), grad_theta.end(), 0.0);
  std::fill(grad_w.begin(), grad_w.end(), 0.0);

  // dNLL/dR(chosen) = -beta * s and dNLL/dR(rejected) = +beta * s with
  // s = sigma(-z). Per-item coefficients are collected first so the theta
  // gradient costs one axpy per (item, head) instead of one per record.
  std::vector<double> coeff(catalog.size() * K, 0.0);
  std::vector<double> diff(K);
  for (const auto& row : index.rows) {
    const double* w = weights.data() + row.annotator * K;
    const double* v_i = item_values.data() + row.chosen * K;
    const double* v_j = item_values.data() + row.rejected * K;
    const double z = beta * (k.dot(w, v_i, K) - k.dot(w, v_j, K));
    const double g = -beta * logistic(-z);
    for (std::size_t c = 0; c < K; ++c) diff[c] = v_i[c] - v_j[c];
    k.axpy(g, diff.data(), grad_w.data() + row.annotator * K, K);
    k.axpy(g, w, coeff.data() + row.chosen * K, K);
    k.axpy(-g, w, coeff.data() + row.rejected * K, K);
  }
  for (std::size_t item = 0; item < catalog.size(); ++item) {
    const double* x = catalog.embedding(item).data();
    for (std::size_t c = 0; c < K; ++c) {
      const double a = coeff[item * K + c];
      if (a != 0.0) k.axpy(a, x, grad_theta.data() + c * d, d);
    }
  }
}

namespace {

void check_compatible(const BasisModel& model, const ItemCatalog& catalog) {
  model.validate();
  if (!catalog.empty() && catalog.dim() != model.d) {
    throw Error("dimension", "catalog dimension does not match model d");
  }
}

}  // namespace

double dataset_nll(const BasisModel& model, const WeightTable& weights, const PreferenceDataset& data,
                   const ItemCatalog& catalog) {
  check_compatible(model, catalog);
  if (data.empty()) return 0.0;
  const auto index = index_preferences(data, catalog);
  const auto values = item_basis_values(model, catalog);
  const auto flat = gather_weights(weights, index, model.K);
  return indexed_nll(index, values, flat, model.K, model.beta);
}

NllGradients nll_gradients(const BasisModel& model, const WeightTable& weights,
                           const PreferenceDataset& data, const ItemCatalog& catalog) {
  check_compatible(model, catalog);
  NllGradients out;
  out.theta.assign(model.K * model.d, 0.0);
  out.bias.assign(model.K, 0.0);
  if (data.empty()) return out;
  const auto index = index_preferences(data, catalog);
  const auto values = item_basis_values(model, catalog);
  const auto flat = gather_weights(weights, index, model.K);
  std::vector<double> grad_w(flat.size());
  indexed_gradients(index, catalog, values, flat, model.K, model.beta, out.theta, grad_w);
  for (std::size_t n = 0; n < index.annotators.size(); ++n) {
    out.w.emplace(index.annotators[n],
                  std::vector<double>(grad_w.begin() + n * model.K, grad_w.begin() + (n + 1) * model.K));
  }
  return out;
}

json to_json(const BasisModel& model) {
  json theta = json::array();
  for (std::size_t k = 0; k < model.K; ++k) {
    auto row = model.head(k);
    theta.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return json{{"K", model.K}, {"d", model.d}, {"beta", model.beta}, {"theta", theta}, {"bias", model.bias}};
}

BasisModel basis_from_json(const json& j) {
  try {
    BasisModel m;
    m.K = j.at("K").get<std::size_t>();
    m.d = j.at("d").get<std::size_t>();
    m.beta = j.value("beta", 1.0);
    const auto& theta = j.at("theta");
    if (!theta.is_array() || theta.size() != m.K) throw Error("schema", "theta must have K rows");
    for (const auto& row : theta) {
      if (!row.is_array() || row.size() != m.d) throw Error("schema", "theta rows must have d entries");
      for (const auto& v : row) m.theta.push_back(v.get<double>());
    }
    m.bias = j.at("bias").get<std::vector<double>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("model artifact: ") + e.what());
  }
}

json to_json(const WeightTable& weights) {
  json annotators = json::object();
  for (const auto& [id, e] : weights.entries) {
    annotators[id] = json{{"cohort_id", e.cohort_id}, {"w", e.w}};
  }
  return json{{"annotators", annotators}};
}

WeightTable weights_from_json(const json& j) {
  try {
    WeightTable t;
    for (const auto& [id, e] : j.at("annotators").items()) {
      t.entries.emplace(id, WeightEntry{e.value("cohort_id", std::string{}), e.at("w").get<std::vector<double>>()});
    }
    if (!t.empty()) t.validate(t.entries.begin()->second.w.size());
    return t;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("weight table: ") + e.what());
  }
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("parse", path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

void save_basis(const std::filesystem::path& path, const BasisModel& model) { write_json_file(path, to_json(model)); }
BasisModel load_basis(const std::filesystem::path& path) { return basis_from_json(read_json_file(path)); }
void save_weights(const std::filesystem::path& path, const WeightTable& weights) {
  write_json_file(path, to_json(weights));
}
WeightTable load_weights(const std::filesystem::path& path) { return weights_from_json(read_json_file(path)); }

}  // namespace apa
