#include <cmath>

#include "doctest.h"
#include "support.hpp"

using namespace coop;
using namespace testing;

namespace {

std::vector<TrainingExample> random_batch(Rng& rng, const ConceptSpace& space, std::size_t n) {
  std::vector<TrainingExample> batch;
  for (std::size_t b = 0; b < n; ++b) {
    const auto inst = random_instance(rng, space);
    batch.push_back({assemble_input(space, inst, Revealed(space.concept_count())), inst.label});
  }
  return batch;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

std::vector<CalibrationPair> pairs_from(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<CalibrationPair> out;
  for (std::size_t i = 0; i < x.size(); ++i) out.push_back({x[i], y[i]});
  return out;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  Rng rng = make_rng(11, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const bool mlp = trial % 2 == 1;
    const auto space = random_space(rng, 4, 3, 4);
    auto model = random_model(rng, space, mlp, 0.5);
    const auto batch = random_batch(rng, space, 6);
    const double decay = trial % 3 == 0 ? 0.0 : 0.01;
    ConceptToLabelModel grad;
    training_objective(model, batch, decay, &grad);

    std::vector<std::pair<std::string, std::size_t>> coords;
    model.for_each_parameter([&](const char* name, std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) coords.emplace_back(name, i);
    });
    for (int probe = 0; probe < 5; ++probe) {
      const auto& [name, idx] = coords[static_cast<std::size_t>(uniform_int(rng, 0, std::ssize(coords) - 1))];
      double analytic = 0.0;
      grad.for_each_parameter([&](const char* n, std::vector<double>& v) {
        if (name == n) analytic = v[idx];
      });
      auto shifted = [&](double h) {
        auto m = model;
        m.for_each_parameter([&](const char* n, std::vector<double>& v) {
          if (name == n) v[idx] += h;
        });
        return training_objective(m, batch, decay);
      };
      const double numeric = (shifted(1e-5) - shifted(-1e-5)) / 2e-5;
      // A ReLU kink inside the stencil invalidates the difference quotient.
      if (mlp && std::abs(shifted(1e-5) + shifted(-1e-5) - 2 * training_objective(model, batch, decay)) > 1e-8) {
        continue;
      }
      CHECK_MESSAGE(relative_error(analytic, numeric) <= 1e-4, name, "[", idx, "] ", analytic, " vs ", numeric);
    }
  }
}

TEST_CASE("training") {
  SUBCASE("noiseless task is learned") {
    SyntheticTaskConfig c;
    c.concept_count = 8;
    c.label_count = 4;
    c.flip_rate = 0.0;
    c.probe_noise = 0.0;
    c.train_size = 400;
    c.val_size = 10;
    c.test_size = 200;
    const auto task = generate_synthetic(c);
    const auto result = train_concept_to_label(task.train, TrainConfig{});
    CHECK_FALSE(result.degenerate);
    auto full = [](const Instance& inst) {
      Revealed r;
      for (int v : inst.concept_true) r.push_back(v);
      return r;
    };
    CHECK(accuracy(result.model, task.train, full) >= 0.99);
    CHECK(accuracy(result.model, task.test, full) >= 0.99);
  }

  SUBCASE("single-class data is flagged and fitted") {
    Rng rng = make_rng(3, 0);
    const auto space = ConceptSpace::make({2, 3, 2}, 3);
    auto d = random_dataset(rng, space, 400);
    for (auto& inst : d.instances) inst.label = 2;
    d.split = Split::Train;
    const auto result = train_concept_to_label(d, TrainConfig{});
    CHECK(result.degenerate);
    for (int trial = 0; trial < 50; ++trial) {
      const auto inst = random_instance(rng, space);
      CHECK(result.model.predict(assemble_input(space, inst, Revealed(3)))[2] >= 0.99);
    }
  }

  SUBCASE("same seed, same weights") {
    Rng rng = make_rng(4, 0);
    const auto space = ConceptSpace::make({2, 3}, 2);
    auto d = random_dataset(rng, space, 40);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.architecture = Architecture::Mlp;
    cfg.hidden_dim = 8;
    CHECK(to_json(train_concept_to_label(d, cfg).model) == to_json(train_concept_to_label(d, cfg).model));
  }

  SUBCASE("empty data and bad hyperparameters") {
    const auto space = ConceptSpace::make({2}, 2);
    CHECK_ERROR_CODE(ErrorCode::EmptyInput, train_concept_to_label(Dataset{space, {}, Split::Train}, TrainConfig{}));
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_ERROR_CODE(ErrorCode::Config, cfg.validate());
  }
}

TEST_CASE("predict") {
  SUBCASE("zero model is uniform") {
    const auto m = ConceptToLabelModel::zeros(Architecture::Linear, 5, 4);
    for (double p : m.predict(std::vector<double>(5, 0.3))) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  }

  SUBCASE("binary logit margin gives the logistic") {
    auto m = ConceptToLabelModel::zeros(Architecture::Linear, 2, 2);
    for (double t : {-3.0, -0.5, 0.0, 1.25, 4.0}) {
      m.b1 = {0.0, t};
      const double sigma = 1.0 / (1.0 + std::exp(-t));
      CHECK(std::abs(m.predict(std::vector<double>{0.5, 0.5})[1] - sigma) <= 1e-12);
    }
  }

  SUBCASE("matches the oracle and normalizes under fuzzing") {
    Rng rng = make_rng(5, 0);
    for (int trial = 0; trial < 2000; ++trial) {
      const auto space = random_space(rng);
      const auto m = random_model(rng, space, trial % 2 == 0, 5.0);
      const auto x = assemble_input(space, random_instance(rng, space), Revealed(space.concept_count()));
      const auto p = m.predict(x);
      const auto q = oracle_predict(m, x);
      double total = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        total += p[k];
        CHECK(std::abs(p[k] - q[k]) <= 1e-12);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }

  SUBCASE("dimension mismatch") {
    const auto m = ConceptToLabelModel::zeros(Architecture::Mlp, 5, 3, 4);
    CHECK_ERROR_CODE(ErrorCode::Dimension, m.predict(std::vector<double>(4, 0.0)));
  }

  SUBCASE("json round trip") {
    Rng rng = make_rng(6, 0);
    const auto space = ConceptSpace::make({2, 4}, 3);
    const auto m = random_model(rng, space, true);
    const auto back = model_from_json(to_json(m));
    const std::vector<double> x{0.2, 0.8, 0.1, 0.2, 0.3, 0.4};
    CHECK(back.predict(x) == m.predict(x));
  }
}

TEST_CASE("assemble_input") {
  const auto space = ConceptSpace::make({2, 3}, 2);
  const Instance inst{"a", {{0.3, 0.7}, {0.2, 0.5, 0.3}}, {1, 2}, 0};

  CHECK(assemble_input(space, inst, Revealed(2)) == std::vector<double>{0.3, 0.7, 0.2, 0.5, 0.3});
  CHECK(assemble_input(space, inst, Revealed{0, std::nullopt}) == std::vector<double>{1, 0, 0.2, 0.5, 0.3});
  CHECK(assemble_input(space, inst, Revealed{1, 2}) == one_hot_features(space, inst.concept_true));
  CHECK_ERROR_CODE(ErrorCode::Arity, assemble_input(space, inst, Revealed{2, std::nullopt}));
  CHECK_ERROR_CODE(ErrorCode::Arity, assemble_input(space, inst, Revealed{std::nullopt, -1}));
  CHECK_ERROR_CODE(ErrorCode::Arity, assemble_input(space, inst, Revealed(1)));

  SUBCASE("full intervention equals prediction on the true concepts") {
    Rng rng = make_rng(7, 0);
    for (int trial = 0; trial < 500; ++trial) {
      const auto s = random_space(rng);
      const auto m = random_model(rng, s, trial % 2 == 0);
      const auto i = random_instance(rng, s);
      Revealed all;
      for (int v : i.concept_true) all.push_back(v);
      CalibrationMap calib{{0.0, 1.0}, {0.1, 0.9}};
      CHECK(m.predict(assemble_input(s, i, all, &calib)) == m.predict(one_hot_features(s, i.concept_true)));
    }
  }

  SUBCASE("every block sums to one") {
    Rng rng = make_rng(8, 0);
    const CalibrationMap calib{{0.0, 0.5, 1.0}, {0.0, 0.3, 1.0}};
    for (int trial = 0; trial < 500; ++trial) {
      const auto s = random_space(rng);
      const auto i = random_instance(rng, s);
      Revealed r(s.concept_count());
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (uniform_int(rng, 0, 1)) r[c] = static_cast<int>(uniform_int(rng, 0, s.arities[c] - 1));
      }
      const auto x = assemble_input(s, i, r, trial % 2 ? &calib : nullptr);
      std::size_t offset = 0;
      for (int n : s.arities) {
        double total = 0.0;
        for (int v = 0; v < n; ++v) total += x[offset + static_cast<std::size_t>(v)];
        CHECK(std::abs(total - 1.0) <= 1e-9);
        offset += static_cast<std::size_t>(n);
      }
    }
  }
}

TEST_CASE("isotonic regression") {
  SUBCASE("worked examples") {
    CHECK(isotonic_regression(pairs_from({0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1})).fitted ==
          std::vector<double>{0, 0.5, 0.5, 1});
    CHECK(isotonic_regression(pairs_from({0.1, 0.2, 0.3, 0.4}, {0, 0, 1, 1})).fitted ==
          std::vector<double>{0, 0, 1, 1});
    const auto ones = fit_isotonic(pairs_from({0.1, 0.5, 0.9}, {1, 1, 1}));
    for (double p : {0.0, 0.3, 0.7, 1.0}) CHECK(apply_calibration(ones, p) == 1.0);
  }

  SUBCASE("ties are pooled before fitting") {
    const auto fit = isotonic_regression(pairs_from({0.5, 0.5, 0.2, 0.5}, {1, 0, 0, 0}));
    CHECK(fit.inputs == std::vector<double>{0.2, 0.5});
    CHECK(fit.fitted[0] == 0.0);
    CHECK(fit.fitted[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  SUBCASE("matches the max-min oracle exactly") {
    Rng rng = make_rng(9, 0);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 50));
      std::vector<CalibrationPair> pairs;
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse grid so ties occur often.
        const double p = static_cast<double>(uniform_int(rng, 0, 20)) / 20.0;
        pairs.push_back({p, static_cast<double>(uniform_int(rng, 0, 1))});
      }
      const auto fit = isotonic_regression(pairs);
      const auto expected = oracle_isotonic(pairs);
      REQUIRE(fit.fitted.size() == expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i) CHECK(fit.fitted[i] == expected[i]);
      for (std::size_t i = 1; i < fit.fitted.size(); ++i) CHECK(fit.fitted[i - 1] <= fit.fitted[i]);
    }
  }

  SUBCASE("too few pairs") {
    CHECK_ERROR_CODE(ErrorCode::EmptyInput, isotonic_regression(std::vector<CalibrationPair>{}));
    CHECK_ERROR_CODE(ErrorCode::EmptyInput, isotonic_regression(pairs_from({0.3}, {1})));
  }
}

TEST_CASE("apply_calibration") {
  const auto map = fit_isotonic(pairs_from({0.1, 0.2, 0.3, 0.4}, {0, 1, 0, 1}));
  CHECK(apply_calibration(map, 0.0) == 0.0);
  CHECK(apply_calibration(map, 0.05) == 0.0);
  CHECK(apply_calibration(map, 0.2) == 0.5);
  CHECK(apply_calibration(map, 0.25) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(apply_calibration(map, 0.35) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(apply_calibration(map, 0.9) == 1.0);

  SUBCASE("monotone in p") {
    Rng rng = make_rng(10, 0);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<CalibrationPair> pairs;
      for (int i = 0; i < 30; ++i) {
        pairs.push_back({uniform_real(rng, 0.0, 1.0), static_cast<double>(uniform_int(rng, 0, 1))});
      }
      const auto m = fit_isotonic(pairs);
      double prev = -1.0;
      for (int step = 0; step <= 1000; ++step) {
        const double out = apply_calibration(m, step / 1000.0);
        CHECK(out >= prev);
        CHECK(out >= 0.0);
        CHECK(out <= 1.0);
        prev = out;
      }
    }
  }

  SUBCASE("json round trip") {
    const auto back = calibration_from_json(to_json(map));
    CHECK(back.inputs == map.inputs);
    CHECK(back.outputs == map.outputs);
  }
}

TEST_CASE("auc") {
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  CHECK(auc(std::vector<double>{0.1, 0.2, 0.3, 0.9}, std::vector<int>{0, 0, 1, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0}) == 0.5);
  CHECK_ERROR_CODE(ErrorCode::AucUndefined, auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}));

  Rng rng = make_rng(12, 0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 40));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(uniform_int(rng, 0, 10)) / 10.0;
      labels[i] = static_cast<int>(uniform_int(rng, 0, 1));
    }
    labels[0] = 0;
    labels[1] = 1;
    CHECK(auc(scores, labels) == doctest::Approx(oracle_auc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("accuracy breaks ties toward the lowest class") {
  const std::vector<std::vector<double>> dists{{0.5, 0.5}, {0.2, 0.8}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  CHECK(accuracy(dists, std::vector<int>{0, 1, 0}) == 1.0);
  CHECK(accuracy(dists, std::vector<int>{1, 1, 2}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("calibration lowers ECE on distorted probes") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticTaskConfig c;
    c.seed = seed;
    c.train_size = 1500;
    c.val_size = 10;
    c.test_size = 1500;
    const auto task = generate_synthetic(c);
    const auto map = fit_concept_calibration(task.train);
    const double before = expected_calibration_error(concept_calibration_pairs(task.test));
    const double after = expected_calibration_error(concept_calibration_pairs(task.test, &map));
    CHECK_MESSAGE(after <= before, "seed ", seed, ": ", before, " -> ", after);
  }
}
