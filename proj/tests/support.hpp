// Shared fixtures and brute-force oracles for the test suites.
//
// The oracles deliberately avoid the library's own arithmetic: they evaluate
// the defining formulas directly so that agreement is meaningful.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "coop/cbm.hpp"
#include "coop/concept_data.hpp"
#include "coop/errors.hpp"
#include "coop/policies.hpp"
#include "coop/rollout.hpp"
#include "coop/util.hpp"

namespace testing {

using namespace coop;

inline std::vector<double> random_distribution(Rng& rng, int n, double point_mass_chance = 0.1) {
  std::vector<double> p(static_cast<std::size_t>(n));
  if (uniform_real(rng, 0.0, 1.0) < point_mass_chance) {
    p[static_cast<std::size_t>(uniform_int(rng, 0, n - 1))] = 1.0;
    return p;
  }
  double total = 0.0;
  for (auto& v : p) total += v = uniform_real(rng, 0.0, 1.0);
  for (auto& v : p) v /= total;
  return p;
}

inline ConceptSpace random_space(Rng& rng, std::size_t max_m = 6, int max_arity = 4, std::size_t max_k = 5) {
  const auto m = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(max_m)));
  std::vector<int> arities(m);
  for (auto& a : arities) a = static_cast<int>(uniform_int(rng, 2, max_arity));
  const auto k = static_cast<std::size_t>(uniform_int(rng, 2, static_cast<std::int64_t>(max_k)));
  return ConceptSpace::make(arities, k);
}

inline Instance random_instance(Rng& rng, const ConceptSpace& space, std::size_t n = 0) {
  Instance inst;
  inst.id = "i" + std::to_string(n);
  for (std::size_t i = 0; i < space.concept_count(); ++i) {
    inst.concept_probs.push_back(random_distribution(rng, space.arities[i]));
    inst.concept_true.push_back(static_cast<int>(uniform_int(rng, 0, space.arities[i] - 1)));
  }
  inst.label = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(space.label_count()) - 1));
  return inst;
}

inline Dataset random_dataset(Rng& rng, const ConceptSpace& space, std::size_t n) {
  Dataset d{space, {}, Split::Val};
  for (std::size_t i = 0; i < n; ++i) d.instances.push_back(random_instance(rng, space, i));
  return d;
}

inline ConceptToLabelModel random_model(Rng& rng, const ConceptSpace& space, bool mlp = false, double scale = 2.0) {
  auto model = ConceptToLabelModel::zeros(mlp ? Architecture::Mlp : Architecture::Linear, space.feature_dim(),
                                          space.label_count(), mlp ? 5 : 0);
  model.for_each_parameter([&](const char*, std::vector<double>& v) {
    for (auto& x : v) x = scale * standard_normal(rng);
  });
  return model;
}

inline CostModel random_cost_model(Rng& rng, const ConceptSpace& space) {
  CostModel c{std::vector<double>(space.concept_count()), CostKind::Random};
  for (auto& q : c.costs) q = uniform_real(rng, 0.5, 5.0);
  return c;
}

// ---------------------------------------------------------------------------
// Oracles

/// Straight-line forward pass, written independently of the library.
inline std::vector<double> oracle_predict(const ConceptToLabelModel& m, const std::vector<double>& x) {
  auto affine = [](const std::vector<double>& w, const std::vector<double>& b, const std::vector<double>& in) {
    std::vector<double> out(b.size());
    for (std::size_t r = 0; r < b.size(); ++r) {
      double z = b[r];
      for (std::size_t c = 0; c < in.size(); ++c) z += w[r * in.size() + c] * in[c];
      out[r] = z;
    }
    return out;
  };
  std::vector<double> z = affine(m.w1, m.b1, x);
  if (m.architecture == Architecture::Mlp) {
    for (auto& h : z) h = h > 0.0 ? h : 0.0;
    z = affine(m.w2, m.b2, z);
  }
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (auto& v : z) total += v = std::exp(v - top);
  for (auto& v : z) v /= total;
  return z;
}

inline double oracle_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

/// Feature vector with the given concepts overridden by one-hot blocks.
inline std::vector<double> oracle_features(const std::vector<std::vector<double>>& dists,
                                           const std::vector<std::optional<int>>& revealed) {
  std::vector<double> x;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    for (std::size_t v = 0; v < dists[i].size(); ++v) {
      if (revealed[i]) {
        x.push_back(static_cast<int>(v) == *revealed[i] ? 1.0 : 0.0);
      } else {
        x.push_back(dists[i][v]);
      }
    }
  }
  return x;
}

inline std::size_t oracle_argmax(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > p[best]) best = k;
  }
  return best;
}

/// CIS by enumerating every value of concept i.
inline double oracle_cis(const ConceptToLabelModel& m, const std::vector<std::vector<double>>& dists,
                         const std::vector<std::optional<int>>& revealed, std::size_t i) {
  const auto current = oracle_predict(m, oracle_features(dists, revealed));
  const std::size_t k = oracle_argmax(current);
  double expected = 0.0;
  for (std::size_t v = 0; v < dists[i].size(); ++v) {
    auto r = revealed;
    r[i] = static_cast<int>(v);
    expected += dists[i][v] * oracle_predict(m, oracle_features(dists, r))[k];
  }
  return std::abs(expected - current[k]);
}

/// Isotonic regression by the max-min formula over distinct inputs:
/// fit(i) = max_{j<=i} min_{k>=i} mean(y_j..y_k), with tied inputs pooled.
inline std::vector<double> oracle_isotonic(std::vector<CalibrationPair> pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const CalibrationPair& a, const CalibrationPair& b) { return a.probability < b.probability; });
  std::vector<double> sums, weights;
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    if (n == 0 || pairs[n].probability != pairs[n - 1].probability) {
      sums.push_back(0.0);
      weights.push_back(0.0);
    }
    sums.back() += pairs[n].outcome;
    weights.back() += 1.0;
  }
  const std::size_t g = sums.size();
  std::vector<double> fit(g);
  for (std::size_t i = 0; i < g; ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j <= i; ++j) {
      double lowest = 2.0;
      for (std::size_t k = i; k < g; ++k) {
        double s = 0.0, w = 0.0;
        for (std::size_t t = j; t <= k; ++t) {
          s += sums[t];
          w += weights[t];
        }
        lowest = std::min(lowest, s / w);
      }
      best = std::max(best, lowest);
    }
    fit[i] = best;
  }
  return fit;
}

/// Fraction of (positive, negative) pairs ranked correctly, ties as one half.
inline double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double good = 0.0, total = 0.0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    for (std::size_t b = 0; b < scores.size(); ++b) {
      if (labels[a] != 1 || labels[b] != 0) continue;
      total += 1.0;
      if (scores[a] > scores[b]) good += 1.0;
      if (scores[a] == scores[b]) good += 0.5;
    }
  }
  return good / total;
}

/// The budget loop transcribed line by line around a selection callback.
struct OracleRollout {
  std::vector<std::size_t> acquired;
  double spent = 0.0;
  Termination termination = Termination::AllRevealed;
};

template <typename Select>
OracleRollout oracle_budget_loop(const std::vector<double>& q, double budget, Select&& select) {
  OracleRollout out;
  std::vector<bool> revealed(q.size(), false);
  double b = 0.0;
  while (b <= budget) {
    if (std::count(revealed.begin(), revealed.end(), false) == 0) {
      out.termination = Termination::AllRevealed;
      break;
    }
    if (budget - b <= kBudgetTolerance) {
      out.termination = Termination::BudgetExhausted;
      break;
    }
    const std::size_t i = select(revealed);
    if (b <= budget - q[i] + kBudgetTolerance) {
      revealed[i] = true;
      out.acquired.push_back(i);
      b += q[i];
    } else {
      out.termination = Termination::UnaffordableSelection;
      break;
    }
  }
  out.spent = b;
  return out;
}

}  // namespace testing

/// Evaluates the expression and checks that it throws coop::Error with `expected_code`.
#define CHECK_ERROR_CODE(expected_code, ...)                        \
  do {                                                              \
    bool threw_ = false;                                            \
    try {                                                           \
      (void)(__VA_ARGS__);                                          \
    } catch (const coop::Error& e_) {                               \
      threw_ = true;                                                \
      CHECK_MESSAGE(e_.code() == (expected_code), std::string(e_.what()));     \
    }                                                               \
    CHECK_MESSAGE(threw_, "expected an error from " #__VA_ARGS__);  \
  } while (false)
