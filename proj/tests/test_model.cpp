#include <doctest.h>

#include <cmath>

#include "lsam/model.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace lsam;

namespace {

// one respondent, one item, d = 1, positions chosen to give distance `dist`
ModelState single(double lambda, double theta_neg, double theta_pos, double dist, std::size_t J = 1) {
  ModelState s(1, 1, J, 1);
  for (double& v : s.baselines.values()) v = lambda;
  s.traits(0, Outcome::negative) = theta_neg;
  s.traits(0, Outcome::positive) = theta_pos;
  s.positions.W(0, 0) = dist;
  return s;
}

}  // namespace

TEST_CASE("grid intervals are right-open and the last holds s_J") {
  const TimeGrid g({0.0, 1.0, 2.0, 3.0});
  CHECK(g.interval_of(0.0) == 0);
  CHECK(g.interval_of(0.999) == 0);
  CHECK(g.interval_of(1.0) == 1);
  CHECK(g.interval_of(3.0) == 2);
  CHECK_THROWS_AS(g.interval_of(3.5), std::domain_error);
  CHECK_THROWS_AS(g.interval_of(-0.1), std::domain_error);
  CHECK_THROWS(TimeGrid({0.0, 1.0, 1.0}));
  CHECK_THROWS(TimeGrid({0.5, 1.0}));
}

TEST_CASE("hazard_at hand-evaluated values") {
  const TimeGrid g({0.0, 10.0});
  CHECK(hazard_at(single(0.5, 0.2, 0.2, 1.3), g, 0, 0, Outcome::positive, 4.0) == doctest::Approx(2.240845).epsilon(1e-6));
  CHECK(hazard_at(single(0.5, 0.2, 0.2, 1.3), g, 0, 0, Outcome::negative, 4.0) == doctest::Approx(0.166436).epsilon(1e-6));
  const auto id = single(1.0, 0.0, 0.0, 0.0);
  CHECK(hazard_at(id, g, 0, 0, Outcome::positive, 1.0) == 1.0);
  CHECK(hazard_at(id, g, 0, 0, Outcome::negative, 1.0) == 1.0);
}

TEST_CASE("cumulative baseline sums the piecewise rates") {
  const TimeGrid g({0.0, 1.0, 2.0, 3.0});
  BaselineHazards b(1, 3);
  b(0, Outcome::positive, 0) = 1.0;
  b(0, Outcome::positive, 1) = 2.0;
  b(0, Outcome::positive, 2) = 0.5;
  CHECK(cumulative_baseline(b, g, 0, Outcome::positive, 2.5) == doctest::Approx(3.25).epsilon(1e-14));
  CHECK(cumulative_baseline(b, g, 0, Outcome::positive, 0.0) == 0.0);
  BaselineHazards flat(1, 3, 0.7);
  for (double t : {0.3, 1.0, 2.2, 3.0}) CHECK(cumulative_baseline(flat, g, 0, Outcome::negative, t) == doctest::Approx(0.7 * t));
}

TEST_CASE("overall hazard segment") {
  const TimeGrid g({0.0, 10.0});
  CHECK(overall_hazard_segment(single(0.5, 0.0, 0.0, 0.0), g, 0, 0, 0) == doctest::Approx(1.0));
  CHECK(overall_hazard_segment(single(0.5, 0.2, 0.2, 1.3), g, 0, 0, 0) == doctest::Approx(2.407280).epsilon(1e-6));
  auto s = single(0.5, 0.2, -0.4, 0.7);
  const double g1 = overall_hazard_segment(s, g, 0, 0, 0);
  for (double& v : s.baselines.values()) v *= 2.0;
  CHECK(overall_hazard_segment(s, g, 0, 0, 0) == doctest::Approx(2.0 * g1));
}

TEST_CASE("survival closed forms") {
  const TimeGrid g({0.0, 10.0});
  const auto sym = single(0.5, 0.0, 0.0, 0.0);
  CHECK(survival(sym, g, 0, 0, 2.0) == doctest::Approx(0.135335).epsilon(1e-6));
  CHECK(survival(sym, g, 0, 0, 0.0) == 1.0);

  Rng rng(11);
  for (int m = 0; m < 50; ++m) {
    const auto grid = fixture::random_grid(rng, 5, 8.0);
    const auto s = fixture::random_state(rng, 2, 3, 5, 2);
    const double t = fixture::uniform(rng, 0, 1) * grid.upper();
    double H = 0.0;
    for (std::size_t j = 0; j < 5; ++j) H += overall_hazard_segment(s, grid, 1, 2, j) * grid.exposure(j, t);
    CHECK(std::abs(survival(s, grid, 1, 2, t) - std::exp(-H)) < 1e-12);
  }
}

TEST_CASE("log joint density") {
  const TimeGrid g({0.0, 10.0});
  const auto sym = single(0.5, 0.0, 0.0, 0.0);
  CHECK(log_joint_density(sym, g, 0, 0, Outcome::positive, 2.0) == doctest::Approx(-2.693147).epsilon(1e-6));

  SUBCASE("density integrates to 1 - S(s_J)") {
    Rng rng(12);
    for (int m = 0; m < 10; ++m) {
      const auto grid = fixture::random_grid(rng, 4, 6.0);
      const auto s = fixture::random_state(rng, 1, 1, 4, 2);
      double mass = 0.0;
      for (Outcome c : kOutcomes)
        mass += oracle::piecewise_integral(grid.cuts(), [&](double t) { return std::exp(log_joint_density(s, grid, 0, 0, c, t)); }, grid.upper());
      CHECK(std::abs(mass - (1.0 - survival(s, grid, 0, 0, grid.upper()))) < 1e-6);
    }
  }

  SUBCASE("scaling lambda by kappa") {
    auto s = single(0.3, 0.1, -0.2, 0.9, 2);
    const TimeGrid g2({0.0, 1.0, 4.0});
    const double t = 2.5, kappa = 1.7;
    const double before = log_joint_density(s, g2, 0, 0, Outcome::negative, t);
    const double logS = std::log(survival(s, g2, 0, 0, t));
    for (double& v : s.baselines.values()) v *= kappa;
    CHECK(log_joint_density(s, g2, 0, 0, Outcome::negative, t) == doctest::Approx(before + std::log(kappa) + (kappa - 1.0) * logS));
  }
}

TEST_CASE("log likelihood") {
  const TimeGrid g({0.0, 10.0});
  const auto sym = single(0.5, 0.0, 0.0, 0.0);
  const ResponseDataset one({{0, 0, Outcome::positive, 2.0}}, 1, 1);
  CHECK(log_likelihood(sym, one, g, IndicatorTables(one, g)) == doctest::Approx(-2.693147).epsilon(1e-6));
  const ResponseDataset none({}, 1, 1);
  CHECK(log_likelihood(sym, none, g, IndicatorTables(none, g)) == 0.0);

  SUBCASE("censored cells contribute log S only") {
    const ResponseDataset cens({{0, 0, std::nullopt, 10.0}}, 1, 1);
    CHECK(log_likelihood(sym, cens, g, IndicatorTables(cens, g)) == doctest::Approx(-10.0));
  }

  SUBCASE("indicator route agrees with per-cell density") {
    Rng rng(13);
    const auto grid = fixture::random_grid(rng, 4, 9.0);
    const auto s = fixture::random_state(rng, 5, 4, 4, 2);
    const auto data = fixture::random_dataset(rng, 5, 4, grid);
    double direct = 0.0;
    for (const auto& r : data.records()) direct += log_cell_likelihood(s, grid, r);
    CHECK(log_likelihood(s, data, grid, IndicatorTables(data, grid)) == doctest::Approx(direct).epsilon(1e-12));
  }

  SUBCASE("rigid motions leave it unchanged") {
    Rng rng(14);
    const auto grid = fixture::random_grid(rng, 3, 5.0);
    auto s = fixture::random_state(rng, 4, 3, 3, 2);
    const auto data = fixture::random_dataset(rng, 4, 3, grid);
    const IndicatorTables ind(data, grid);
    const double before = log_likelihood(s, data, grid, ind);
    Eigen::Matrix2d reflect;
    reflect << 1, 0, 0, -1;
    const Eigen::MatrixXd Q = fixture::random_orthogonal(rng, 2) * reflect;
    Eigen::RowVector2d shift(-2.0, 7.5);
    s.positions.Z = (s.positions.Z * Q).rowwise() + shift;
    s.positions.W = (s.positions.W * Q).rowwise() + shift;
    CHECK(std::abs(log_likelihood(s, data, grid, ind) - before) < 1e-10);
  }
}

TEST_CASE("indicator tables") {
  Rng rng(15);
  const auto grid = fixture::random_grid(rng, 5, 10.0);
  const auto data = fixture::random_dataset(rng, 6, 4, grid);
  const IndicatorTables ind(data, grid);
  for (std::size_t r = 0; r < data.size(); ++r) {
    int deltas = 0;
    double exposure = 0.0;
    for (std::size_t j = 0; j < grid.intervals(); ++j) {
      deltas += ind.delta(r, j);
      CHECK(ind.exposure(r, j) >= 0.0);
      exposure += ind.exposure(r, j);
    }
    CHECK(std::abs(exposure - data[r].time) < 1e-12);
    const bool censored = !data[r].outcome;
    CHECK(deltas == (censored ? 0 : 1));
    CHECK(ind.nu(r, Outcome::positive) + ind.nu(r, Outcome::negative) == (censored ? 0 : 1));
  }
}

TEST_CASE("cumulative incidence") {
  const TimeGrid g({0.0, 1000.0});
  const auto sym = single(0.5, 0.0, 0.0, 0.0);
  CHECK(cif(sym, g, 0, 0, Outcome::positive, 2.0) == doctest::Approx(0.432332).epsilon(1e-6));
  CHECK(cif(sym, g, 0, 0, Outcome::negative, 0.0) == 0.0);
  CHECK(cif(sym, g, 0, 0, Outcome::negative, 1000.0) == doctest::Approx(0.5).epsilon(1e-12));

  SUBCASE("matches nested quadrature and partitions with survival") {
    Rng rng(16);
    for (int m = 0; m < 10; ++m) {
      const auto grid = fixture::random_grid(rng, 4, 7.0);
      const auto s = fixture::random_state(rng, 2, 2, 4, 2);
      const double t = fixture::uniform(rng, 0, 1) * grid.upper();
      double total = survival(s, grid, 0, 1, t);
      for (Outcome c : kOutcomes) {
        const double v = cif(s, grid, 0, 1, c, t);
        CHECK(std::abs(v - oracle::cif(s, grid.cuts(), 0, 1, c, t)) < 1e-6);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-8);
    }
  }

  SUBCASE("monotone in t") {
    Rng rng(17);
    const auto grid = fixture::random_grid(rng, 4, 7.0);
    const auto s = fixture::random_state(rng, 1, 1, 4, 2);
    double prev = 0.0;
    for (int m = 0; m <= 70; ++m) {
      const double v = cif(s, grid, 0, 0, Outcome::positive, 0.1 * m);
      CHECK(v >= prev - 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("hazard is monotone in distance") {
  const TimeGrid g({0.0, 10.0});
  double prev_pos = 0.0, prev_neg = 1e300;
  for (int m = 0; m <= 40; ++m) {
    const auto s = single(0.4, 0.3, -0.2, 0.1 * m);
    const double hp = hazard_at(s, g, 0, 0, Outcome::positive, 1.0);
    const double hn = hazard_at(s, g, 0, 0, Outcome::negative, 1.0);
    CHECK(hp > prev_pos);
    CHECK(hn < prev_neg);
    prev_pos = hp;
    prev_neg = hn;
  }
}

TEST_CASE("partition and monotonicity on a 100-point grid") {
  Rng rng(18);
  for (int m = 0; m < 20; ++m) {
    const auto grid = fixture::random_grid(rng, 4, 12.0);
    const auto s = fixture::random_state(rng, 2, 2, 4, 2);
    double S_prev = 1.0, pos_prev = 0.0, neg_prev = 0.0, L_prev = 0.0;
    for (int q = 0; q < 100; ++q) {
      const double t = grid.upper() * q / 99.0;
      const double S = survival(s, grid, 1, 1, t);
      const double cp = cif(s, grid, 1, 1, Outcome::positive, t);
      const double cn = cif(s, grid, 1, 1, Outcome::negative, t);
      const double L = cumulative_baseline(s.baselines, grid, 1, Outcome::negative, t);
      CHECK(std::abs(S + cp + cn - 1.0) < 1e-8);
      CHECK(S <= S_prev + 1e-15);
      CHECK(cp >= pos_prev - 1e-15);
      CHECK(cn >= neg_prev - 1e-15);
      CHECK(L >= L_prev);
      S_prev = S, pos_prev = cp, neg_prev = cn, L_prev = L;
    }
  }
}
