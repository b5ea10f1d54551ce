#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cosy::testing {

double pair_count_auc(std::span<const double> control, std::span<const double> synthetic,
                      TiePolicy policy) {
  double total = 0.0;
  for (double a : control) {
    for (double b : synthetic) {
      if (a < b) total += 1.0;
      else if (a == b && policy == TiePolicy::Midrank) total += 0.5;
    }
  }
  return total / (static_cast<double>(control.size()) * static_cast<double>(synthetic.size()));
}

std::vector<double> mixed_sample(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> cont(-3.0, 3.0);
  std::uniform_int_distribution<int> grid(0, 6);
  std::bernoulli_distribution tied(0.5);
  std::vector<double> v(n);
  for (auto& x : v) x = tied(rng) ? grid(rng) * 0.5 : cont(rng);
  return v;
}

double pair_count_auc(std::span<const double> values, std::span<const std::uint8_t> membership,
                      TiePolicy policy) {
  double total = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (membership[i]) continue;
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (!membership[j]) continue;
      pairs += 1.0;
      if (values[i] < values[j]) total += 1.0;
      else if (values[i] == values[j] && policy == TiePolicy::Midrank) total += 0.5;
    }
  }
  return total / pairs;
}

ConceptDataset random_dataset(std::mt19937_64& rng, std::size_t images, std::size_t concepts) {
  while (true) {
    std::vector<std::uint8_t> labels(images * concepts);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 2);
    bool ok = true;
    for (std::size_t c = 0; c < concepts && ok; ++c) {
      std::size_t pos = 0;
      for (std::size_t r = 0; r < images; ++r) pos += labels[r * concepts + c];
      ok = pos > 0 && pos < images;
    }
    if (!ok) continue;
    std::vector<std::string> names, refs;
    for (std::size_t c = 0; c < concepts; ++c) names.push_back("c" + std::to_string(c));
    for (std::size_t r = 0; r < images; ++r) refs.push_back("img" + std::to_string(r));
    return ConceptDataset(names, refs, labels);
  }
}

std::vector<Formula> all_short_formulas(std::size_t concepts) {
  std::vector<Formula> atoms, out;
  for (std::size_t c = 0; c < concepts; ++c) {
    atoms.push_back(Formula::leaf(c));
    atoms.push_back(Formula::negate(Formula::leaf(c)));
  }
  out = atoms;
  for (const auto& a : atoms) {
    for (const auto& b : atoms) {
      if (a.leaves()[0] == b.leaves()[0]) continue;
      out.push_back(Formula::both(a, b));
      out.push_back(Formula::either(a, b));
    }
  }
  return out;
}

bool eval_tree(const Formula& f, const ConceptDataset& d, std::size_t row) {
  switch (f.op()) {
    case Formula::Op::Leaf: return d.label(row, f.concept_index()) == 1;
    case Formula::Op::Not: return !eval_tree(f.lhs(), d, row);
    case Formula::Op::And: return eval_tree(f.lhs(), d, row) && eval_tree(f.rhs(), d, row);
    case Formula::Op::Or: return eval_tree(f.lhs(), d, row) || eval_tree(f.rhs(), d, row);
  }
  return false;
}

std::vector<std::uint8_t> tree_membership(const Formula& f, const ConceptDataset& d) {
  std::vector<std::uint8_t> m(d.num_images());
  for (std::size_t r = 0; r < m.size(); ++r) m[r] = eval_tree(f, d, r) ? 1 : 0;
  return m;
}

bool degenerate(const std::vector<std::uint8_t>& m) {
  const auto pos = std::count(m.begin(), m.end(), 1);
  return pos == 0 || static_cast<std::size_t>(pos) == m.size();
}

Optimum brute_force(std::span<const double> values, const ConceptDataset& d, std::size_t max_len) {
  Optimum best;
  for (const auto& f : all_short_formulas(d.num_concepts())) {
    if (f.length() > max_len) continue;
    const auto m = tree_membership(f, d);
    if (degenerate(m)) continue;
    const double s = pair_count_auc(values, m);
    if (s > best.score || (s == best.score && f.length() < best.min_length)) {
      best.score = s;
      best.min_length = f.length();
      best.optima.clear();
    }
    if (s == best.score && f.length() == best.min_length) best.optima.push_back(f);
  }
  return best;
}

SimilarityMatrix random_matrix(std::mt19937_64& rng, std::size_t images, std::size_t concepts) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SimilarityMatrix sim;
  for (std::size_t c = 0; c < concepts; ++c) sim.concept_names.push_back("s" + std::to_string(c));
  for (std::size_t x = 0; x < images; ++x) sim.image_refs.push_back("x" + std::to_string(x));
  for (std::size_t i = 0; i < images * concepts; ++i) sim.values.push_back(u(rng));
  return sim;
}

std::vector<double> wpmi_oracle(const std::vector<double>& act, const SimilarityMatrix& sim,
                                std::size_t top_k, double lambda, double tau) {
  const std::size_t n = sim.image_refs.size(), k = sim.concept_names.size();
  std::vector<std::vector<double>> p(n, std::vector<double>(k));
  for (std::size_t x = 0; x < n; ++x) {
    double z = 0.0;
    for (std::size_t s = 0; s < k; ++s) z += std::exp(sim.values[x * k + s] / tau);
    for (std::size_t s = 0; s < k; ++s) p[x][s] = std::exp(sim.values[x * k + s] / tau) / z;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool swap = act[idx[j]] > act[idx[i]] || (act[idx[j]] == act[idx[i]] && idx[j] < idx[i]);
      if (swap) std::swap(idx[i], idx[j]);
    }
  }
  std::vector<double> out(k);
  for (std::size_t s = 0; s < k; ++s) {
    double in_set = 0.0, all = 0.0;
    for (std::size_t i = 0; i < top_k; ++i) in_set += p[idx[i]][s];
    for (std::size_t x = 0; x < n; ++x) all += p[x][s];
    out[s] = std::log(in_set / top_k) - lambda * std::log(all / n);
  }
  return out;
}


}  // namespace cosy::testing
