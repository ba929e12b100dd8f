#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <functional>
#include <random>

#include "lsam/model.hpp"
#include "lsam/predictive.hpp"
#include "support/fixtures.hpp"

using namespace lsam;

namespace {

ModelState flat_state(double lambda, double theta_neg = 0.0, double theta_pos = 0.0) {
  ModelState s(1, 1, 1, 1);
  for (double& v : s.baselines.values()) v = lambda;
  s.traits(0, Outcome::negative) = theta_neg;
  s.traits(0, Outcome::positive) = theta_pos;
  return s;
}

// Hand-built predictive sample over one dataset.
PredictiveSample fill(const ResponseDataset& data, std::size_t L,
                      const std::function<SimulatedCell(std::size_t, std::size_t)>& cell) {
  PredictiveSample ps(L, data.size());
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t r = 0; r < data.size(); ++r) ps(l, r) = cell(l, r);
  return ps;
}

}  // namespace

TEST_CASE("survival inversion") {
  const TimeGrid g({0.0, 10.0});
  const auto s = flat_state(0.5);  // overall segment hazard 1
  const auto inv = invert_survival(s, g, 0, 0, std::exp(-2.0));
  CHECK_FALSE(inv.censored);
  CHECK(inv.time == doctest::Approx(2.0).epsilon(1e-12));

  const auto cens = invert_survival(s, g, 0, 0, std::exp(-11.0));
  CHECK(cens.censored);
  CHECK(cens.time == 10.0);

  CHECK_THROWS_AS(invert_survival(s, g, 0, 0, 0.0), std::domain_error);
  CHECK_THROWS_AS(invert_survival(s, g, 0, 0, 1.0), std::domain_error);

  Rng rng(41);
  for (int m = 0; m < 200; ++m) {
    const auto grid = fixture::random_grid(rng, 4, 20.0);
    const auto st = fixture::random_state(rng, 2, 2, 4, 2);
    const double floor = survival(st, grid, 1, 0, grid.upper());
    const double u = floor + (1.0 - floor) * fixture::uniform(rng, 0.001, 0.999);
    const auto r = invert_survival(st, grid, 1, 0, u);
    REQUIRE_FALSE(r.censored);
    CHECK(std::abs(survival(st, grid, 1, 0, r.time) - u) < 1e-9);
  }
}

TEST_CASE("outcome probabilities") {
  const TimeGrid g({0.0, 10.0});
  CHECK(outcome_probability(flat_state(0.5), g, 0, 0, Outcome::positive, 3.0) == doctest::Approx(0.5));
  const auto s = flat_state(0.5, 0.0, std::log(3.0));
  CHECK(outcome_probability(s, g, 0, 0, Outcome::positive, 3.0) == doctest::Approx(0.75));
  CHECK(outcome_probability(s, g, 0, 0, Outcome::negative, 3.0) == doctest::Approx(0.25));
}

TEST_CASE("outcome probabilities sum to one and rise with distance") {
  Rng rng(46);
  const auto grid = fixture::random_grid(rng, 4, 9.0);
  auto s = fixture::random_state(rng, 2, 2, 4, 2);
  for (int m = 0; m < 200; ++m) {
    const double t = fixture::uniform(rng, 0, 1) * grid.upper();
    const std::size_t k = m % 2, i = (m / 2) % 2;
    CHECK(outcome_probability(s, grid, k, i, Outcome::positive, t) + outcome_probability(s, grid, k, i, Outcome::negative, t) ==
          doctest::Approx(1.0).epsilon(1e-15));
  }
  double prev = 0.0;
  for (int m = 0; m <= 30; ++m) {
    s.positions.Z.row(0) = s.positions.W.row(0);
    s.positions.Z(0, 0) += 0.1 * m;
    const double pp = outcome_probability(s, grid, 0, 0, Outcome::positive, 2.0);
    CHECK(pp > prev);
    prev = pp;
  }
}

TEST_CASE("simulated cells reproduce the analytic CIF") {
  Rng rng(42);
  const auto grid = fixture::random_grid(rng, 4, 8.0);
  const auto s = fixture::random_state(rng, 1, 1, 4, 2);
  const int N = 100000;
  std::vector<SimulatedCell> cells(N);
  for (auto& c : cells) c = simulate_cell(s, grid, 0, 0, rng);
  double worst = 0.0;
  for (int q = 1; q <= 20; ++q) {
    const double t = grid.upper() * q / 20.0;
    for (Outcome c : kOutcomes) {
      int hits = 0;
      for (const auto& cell : cells) hits += cell.outcome == c && cell.time <= t;
      worst = std::max(worst, std::abs(hits / double(N) - cif(s, grid, 0, 0, c, t)));
    }
  }
  CHECK(worst < 0.01);

  // interval x outcome histogram plus the censoring atom
  std::vector<double> observed(2 * grid.intervals() + 1, 0.0), expected(observed.size(), 0.0);
  for (const auto& cell : cells) {
    if (!cell.outcome) {
      observed.back() += 1;
      continue;
    }
    observed[2 * grid.interval_of(cell.time) + (*cell.outcome == Outcome::positive)] += 1;
  }
  for (std::size_t j = 0; j < grid.intervals(); ++j)
    for (Outcome c : kOutcomes)
      expected[2 * j + (c == Outcome::positive)] =
          N * (cif(s, grid, 0, 0, c, grid.cuts()[j + 1]) - cif(s, grid, 0, 0, c, grid.cuts()[j]));
  expected.back() = N * survival(s, grid, 0, 0, grid.upper());
  double chi2 = 0.0;
  std::size_t df = 0;
  for (std::size_t b = 0; b < observed.size(); ++b)
    if (expected[b] >= 5.0) {
      chi2 += (observed[b] - expected[b]) * (observed[b] - expected[b]) / expected[b];
      ++df;
    }
  REQUIRE(df >= 3);
  CHECK(boost::math::cdf(boost::math::complement(boost::math::chi_squared(double(df - 1)), chi2)) > 0.01);
  for (const auto& cell : cells) {
    CHECK(cell.time > 0.0);
    CHECK(cell.time <= grid.upper());
    if (!cell.outcome) CHECK(cell.time == grid.upper());
  }
}

TEST_CASE("bayesian p-values") {
  const ResponseDataset data({{0, 0, Outcome::positive, 5.0}, {0, 1, Outcome::negative, 2.0}}, 1, 2);
  SUBCASE("all simulated times at or above the observed") {
    const auto ps = fill(data, 50, [](std::size_t l, std::size_t) { return SimulatedCell{5.0 + l, Outcome::positive, 0.5}; });
    const auto P = bayesian_pvalue(ps, data);
    CHECK(P(0, 0) == 1.0);
    CHECK(P(0, 1) == 1.0);
  }
  SUBCASE("observed at the simulated median") {
    Rng rng(43);
    const std::size_t L = 4000;
    std::exponential_distribution<double> ex(std::log(2.0) / 5.0);  // median 5
    const auto ps = fill(data, L, [&](std::size_t, std::size_t) { return SimulatedCell{ex(rng), Outcome::positive, 0.5}; });
    const double se = std::sqrt(0.25 / L);
    CHECK(std::abs(bayesian_pvalue(ps, data)(0, 0) - 0.5) < 3 * se);
  }
  SUBCASE("unobserved cells are NaN") {
    const ResponseDataset one({{0, 1, Outcome::positive, 1.0}}, 1, 2);
    const auto ps = fill(one, 3, [](std::size_t, std::size_t) { return SimulatedCell{1.0, Outcome::positive, 0.5}; });
    CHECK(std::isnan(bayesian_pvalue(ps, one)(0, 0)));
  }
  CHECK(pvalue_misfit(0.01));
  CHECK(pvalue_misfit(0.99));
  CHECK_FALSE(pvalue_misfit(0.5));
}

TEST_CASE("log-loss") {
  const ResponseDataset data({{0, 0, Outcome::positive, 1.0}, {1, 0, Outcome::negative, 2.0}, {2, 0, std::nullopt, 30.0}}, 3, 1);
  const auto perfect = fill(data, 4, [&](std::size_t, std::size_t r) {
    return SimulatedCell{1.0, Outcome::positive, data[r].outcome == Outcome::positive ? 1.0 : 0.0};
  });
  for (double v : log_loss(perfect, data, 0).per_draw) CHECK(v == 0.0);

  const auto coin = fill(data, 4, [](std::size_t, std::size_t) { return SimulatedCell{1.0, Outcome::positive, 0.5}; });
  for (double v : log_loss(coin, data, 0).per_draw) CHECK(v == doctest::Approx(0.693147).epsilon(1e-6));

  const auto wrong = fill(data, 1, [&](std::size_t, std::size_t r) {
    return SimulatedCell{1.0, Outcome::positive, data[r].outcome == Outcome::positive ? 0.0 : 1.0};
  });
  const auto ll = log_loss(wrong, data, 0);
  CHECK(ll.clamped == 2);
  CHECK(ll.per_draw[0] == doctest::Approx(-std::log(1e-12)));

  const auto censored = fill(data, 2, [](std::size_t, std::size_t) { return SimulatedCell{30.0, std::nullopt, 0.0}; });
  for (double v : log_loss(censored, data, 0).per_draw) CHECK(std::isnan(v));
}

TEST_CASE("AUC") {
  CHECK(*mann_whitney_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(*mann_whitney_auc({0.5, 0.5}, {1, 0}) == 0.5);
  CHECK_FALSE(mann_whitney_auc({0.3, 0.4}, {1, 1}).has_value());

  std::vector<ResponseRecord> recs;
  for (std::size_t k = 0; k < 40; ++k) recs.push_back({k, 0, k % 2 ? Outcome::positive : Outcome::negative, 1.0});
  const ResponseDataset data(recs, 40, 1);
  Rng rng(44);
  const std::size_t L = 400;
  const auto noise = fill(data, L, [&](std::size_t, std::size_t) { return SimulatedCell{1.0, Outcome::positive, fixture::uniform(rng, 0, 1)}; });
  const auto aucs = *roc_auc(noise, data, 0);
  double mean = 0.0;
  for (double a : aucs) mean += a / L;
  // per-draw AUC sd under the null is sqrt((n1 + n0 + 1) / (12 n1 n0))
  const double se = std::sqrt(41.0 / (12.0 * 400.0)) / std::sqrt(double(L));
  CHECK(std::abs(mean - 0.5) < 3 * se);

  const ResponseDataset single({{0, 0, Outcome::positive, 1.0}, {1, 0, Outcome::positive, 2.0}}, 2, 1);
  const auto ps = fill(single, 2, [](std::size_t, std::size_t) { return SimulatedCell{1.0, Outcome::positive, 0.7}; });
  CHECK_FALSE(roc_auc(ps, single, 0).has_value());
  const auto table = item_fit_table(ps, single);
  CHECK_FALSE(table[0].auc.has_value());
  CHECK_FALSE(table[0].warnings.empty());
}

TEST_CASE("predictive simulation is independent of thread count") {
  Rng rng(45);
  const auto grid = fixture::random_grid(rng, 3, 10.0);
  const auto data = fixture::random_dataset(rng, 5, 4, grid);
  PosteriorDraws draws;
  draws.chains.emplace_back();
  for (int m = 0; m < 12; ++m) draws.chains[0].draws.push_back({std::size_t(m), 0.0, fixture::random_state(rng, 5, 4, 3, 2)});
  const auto a = simulate_predictive(draws, data, grid, 8, 7, 1);
  const auto b = simulate_predictive(draws, data, grid, 8, 7, 3);
  REQUIRE(a.draws() == 8);
  CHECK(a.source_draws == b.source_draws);
  for (std::size_t l = 0; l < a.draws(); ++l)
    for (std::size_t r = 0; r < a.records(); ++r) {
      CHECK(a(l, r).time == b(l, r).time);
      CHECK(a(l, r).outcome == b(l, r).outcome);
    }
}
