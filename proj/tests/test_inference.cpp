#include <doctest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

#include "lsam/diagnostics.hpp"
#include "lsam/inference.hpp"
#include "lsam/model.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace lsam;

namespace {

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// log prior assembled from library-independent densities
double reference_log_prior(const ModelState& s, const PriorConfig& prior) {
  double lp = 0.0;
  for (std::size_t i = 0; i < s.items(); ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < s.intervals(); ++j) {
        boost::math::gamma_distribution<double> g(prior.lambda_rate * prior.lambda_shape_tilde[j], 1.0 / prior.lambda_rate);
        lp += std::log(boost::math::pdf(g, s.baselines(i, c, j)));
      }
  boost::math::inverse_gamma_distribution<double> ig(prior.a_sigma, prior.b_sigma);
  lp += std::log(boost::math::pdf(ig, s.sigma2));
  boost::math::normal_distribution<double> th(0.0, std::sqrt(s.sigma2));
  for (double v : s.traits.values()) lp += std::log(boost::math::pdf(th, v));
  boost::math::normal_distribution<double> pos(0.0, s.gamma);
  for (Eigen::Index r = 0; r < s.positions.Z.size(); ++r) lp += std::log(boost::math::pdf(pos, s.positions.Z.data()[r]));
  for (Eigen::Index r = 0; r < s.positions.W.size(); ++r) lp += std::log(boost::math::pdf(pos, s.positions.W.data()[r]));
  boost::math::normal_distribution<double> lg(prior.mu_gamma, prior.tau_gamma);
  lp += std::log(boost::math::pdf(lg, std::log(s.gamma))) - std::log(s.gamma);
  return lp;
}

}  // namespace

TEST_CASE("prior settings") {
  const TimeGrid g({0.0, 4.0, 8.0, 13.0, 20.0, 30.0});
  const auto prior = PriorConfig::defaults_for(g);
  REQUIRE(prior.lambda_shape_tilde.size() == 5);
  CHECK(prior.lambda_shape_tilde[0] == doctest::Approx(0.037037).epsilon(1e-5));
  CHECK(prior.lambda_shape_tilde[4] == doctest::Approx(5.0 / (30.0 * 0.5)));
  PriorConfig bad = prior;
  bad.tau_gamma = 0.0;
  CHECK_THROWS_AS(bad.validate(5), std::invalid_argument);
  CHECK_THROWS_AS(prior.validate(4), std::invalid_argument);
}

TEST_CASE("log prior") {
  Rng rng(21);
  const auto grid = fixture::random_grid(rng, 3, 6.0);
  const auto prior = PriorConfig::defaults_for(grid);
  for (int m = 0; m < 5; ++m) {
    const auto s = fixture::random_state(rng, 4, 3, 3, 2);
    CHECK(log_prior(s, prior) == doctest::Approx(reference_log_prior(s, prior)).epsilon(1e-10));
  }

  SUBCASE("trait block at the mode") {
    ModelState s(5, 2, 3, 2);
    s.sigma2 = 1.0;
    ModelState shifted = s;
    shifted.traits(2, Outcome::positive) = 1.0;
    const double block = reference_log_prior(s, prior) - reference_log_prior(shifted, prior);
    CHECK(block == doctest::Approx(0.5));
    const double traits_only = 5 * 2 * (-0.5 * std::log(2.0 * std::numbers::pi));
    ModelState no_traits = s;
    no_traits.traits = LatentTraits(0);
    CHECK(log_prior(s, prior) - log_prior(no_traits, prior) == doctest::Approx(traits_only));
  }

  SUBCASE("doubling gamma at Z = W = 0") {
    ModelState s(4, 3, 3, 2);
    s.gamma = 0.7;
    ModelState twice = s;
    twice.gamma = 1.4;
    boost::math::normal_distribution<double> lg(prior.mu_gamma, prior.tau_gamma);
    auto gamma_block = [&](double g) { return std::log(boost::math::pdf(lg, std::log(g))) - std::log(g); };
    const double position_change = (log_prior(twice, prior) - gamma_block(1.4)) - (log_prior(s, prior) - gamma_block(0.7));
    CHECK(position_change == doctest::Approx(-(4.0 + 3.0) * 2.0 * std::log(2.0)));
  }
}

TEST_CASE("lambda full conditional") {
  const TimeGrid g({0.0, 10.0});
  auto prior = PriorConfig::defaults_for(g);
  ModelState s(1, 1, 1, 1);
  s.baselines = BaselineHazards(1, 1, 0.3);
  s.traits(0, Outcome::positive) = 0.4;
  s.positions.W(0, 0) = 0.5;

  const ResponseDataset none({}, 1, 1);
  auto empty = lambda_full_conditional(s, none, g, IndicatorTables(none, g), prior);
  CHECK(empty.shape(0, Outcome::positive, 0) == doctest::Approx(0.5 * prior.lambda_shape_tilde[0]));
  CHECK(empty.rate(0, Outcome::negative, 0) == doctest::Approx(0.5));

  const double t = 2.5;
  const ResponseDataset one({{0, 0, Outcome::positive, t}}, 1, 1);
  const auto cond = lambda_full_conditional(s, one, g, IndicatorTables(one, g), prior);
  const double E = t * std::exp(0.4 + 0.5);
  CHECK(cond.shape(0, Outcome::positive, 0) == doctest::Approx(0.5 * prior.lambda_shape_tilde[0] + 1.0));
  CHECK(cond.rate(0, Outcome::positive, 0) == doctest::Approx(0.5 + E));
  CHECK(cond.shape(0, Outcome::negative, 0) == doctest::Approx(0.5 * prior.lambda_shape_tilde[0]));
  CHECK(cond.rate(0, Outcome::negative, 0) == doctest::Approx(0.5 + t * std::exp(-0.5)));

  SUBCASE("grid-normalized likelihood times prior on 200 points") {
    Rng rng(22);
    for (int m = 0; m < 10; ++m) {
      const auto grid = fixture::random_grid(rng, 3, 5.0);
      auto state = fixture::random_state(rng, 5, 1, 3, 2);
      const auto data = fixture::random_dataset(rng, 5, 1, grid);
      const IndicatorTables ind(data, grid);
      const auto pr = PriorConfig::defaults_for(grid);
      const auto c2 = lambda_full_conditional(state, data, grid, ind, pr);
      const std::size_t j = m % 3;
      const Outcome c = m % 2 ? Outcome::positive : Outcome::negative;
      boost::math::gamma_distribution<double> analytic(c2.shape(0, c, j), 1.0 / c2.rate(0, c, j));
      std::vector<double> pts;
      const double lo = boost::math::quantile(analytic, 1e-5), hi = boost::math::quantile(analytic, 1 - 1e-5);
      for (int q = 0; q < 200; ++q) pts.push_back(lo + (hi - lo) * q / 199.0);
      const auto numeric = oracle::grid_normalized(pts, [&](double lam) {
        ModelState x = state;
        x.baselines(0, c, j) = lam;
        const double a = pr.lambda_rate * pr.lambda_shape_tilde[j];
        return log_likelihood(x, data, grid, ind) + (a - 1.0) * std::log(lam) - pr.lambda_rate * lam;
      });
      const auto exact = oracle::grid_normalized(pts, [&](double lam) { return std::log(boost::math::pdf(analytic, lam)); });
      const double peak = *std::max_element(exact.begin(), exact.end());
      for (std::size_t q = 0; q < pts.size(); ++q) CHECK(std::abs(numeric[q] - exact[q]) / peak < 1e-6);
    }
  }
}

TEST_CASE("sigma2 full conditional") {
  PriorConfig prior;
  LatentTraits zero(4);
  auto c0 = sigma2_full_conditional(zero, prior);
  CHECK(c0.shape == doctest::Approx(prior.a_sigma + 4));
  CHECK(c0.scale == doctest::Approx(prior.b_sigma));
  LatentTraits one(1);
  one(0, Outcome::negative) = 1.0;
  one(0, Outcome::positive) = -1.0;
  auto c1 = sigma2_full_conditional(one, prior);
  CHECK(c1.shape == doctest::Approx(prior.a_sigma + 1));
  CHECK(c1.scale == doctest::Approx(prior.b_sigma + 1));

  SUBCASE("sampler mean within 3 Monte-Carlo standard errors") {
    LatentTraits t(3);
    const double vals[] = {0.4, -1.2, 0.8, 0.1, -0.5, 1.5};
    for (int m = 0; m < 6; ++m) t.values()[m] = vals[m];
    const auto c = sigma2_full_conditional(t, prior);
    boost::math::inverse_gamma_distribution<double> ig(c.shape, c.scale);
    Rng rng(23);
    std::vector<double> x;
    for (int m = 0; m < 100000; ++m) x.push_back(gibbs_update_sigma2(t, prior, rng));
    const double se = boost::math::standard_deviation(ig) / std::sqrt(1e5);
    CHECK(std::abs(mean_of(x) - boost::math::mean(ig)) < 3 * se);
  }
}

TEST_CASE("cached MH ratios equal full log-likelihood differences") {
  Rng rng(24);
  for (int m = 0; m < 10; ++m) {
    const auto grid = fixture::random_grid(rng, 4, 8.0);
    const auto s = fixture::random_state(rng, 5, 4, 4, 2);
    const auto data = fixture::random_dataset(rng, 5, 4, grid);
    const IndicatorTables ind(data, grid);
    const LikelihoodCache cache(s.baselines, data, ind);
    const double base = log_likelihood(s, data, grid, ind);

    const std::size_t k = m % 5, i = m % 4;
    const Outcome c = m % 2 ? Outcome::positive : Outcome::negative;
    ModelState t = s;
    t.traits(k, c) += 0.37;
    CHECK(std::abs(theta_log_likelihood_delta(s, data, cache, k, c, t.traits(k, c)) -
                   (log_likelihood(t, data, grid, ind) - base)) < 1e-10);

    Eigen::RowVectorXd z = s.positions.Z.row(k);
    z(0) += 0.5;
    z(1) -= 0.2;
    ModelState pz = s;
    pz.positions.Z.row(k) = z;
    CHECK(std::abs(respondent_position_log_likelihood_delta(s, data, cache, k, z) -
                   (log_likelihood(pz, data, grid, ind) - base)) < 1e-10);

    Eigen::RowVectorXd w = s.positions.W.row(i);
    w(1) += 0.8;
    ModelState pw = s;
    pw.positions.W.row(i) = w;
    CHECK(std::abs(item_position_log_likelihood_delta(s, data, cache, i, w) -
                   (log_likelihood(pw, data, grid, ind) - base)) < 1e-10);
  }
}

TEST_CASE("vanishing steps are always accepted") {
  Rng rng(25);
  const auto grid = fixture::random_grid(rng, 3, 6.0);
  const auto s = fixture::random_state(rng, 6, 4, 3, 2);
  const auto data = fixture::random_dataset(rng, 6, 4, grid);
  const IndicatorTables ind(data, grid);
  const LikelihoodCache cache(s.baselines, data, ind);
  const auto prior = PriorConfig::defaults_for(grid);
  std::size_t accepted = 0, total = 0;
  for (int m = 0; m < 20; ++m) {
    const auto tu = mh_update_theta(s, data, cache, 1e-9, rng);
    for (auto a : tu.accepted) accepted += a, ++total;
    const auto pu = mh_update_positions(s, data, cache, 1e-9, 1e-9, rng);
    for (auto a : pu.accepted_z) accepted += a, ++total;
    for (auto a : pu.accepted_w) accepted += a, ++total;
    accepted += mh_update_gamma(s, prior, 1e-9, rng).accepted;
    ++total;
  }
  CHECK(static_cast<double>(accepted) / static_cast<double>(total) > 0.99);
}

TEST_CASE("log-normal proposal correction") {
  CHECK(log_normal_proposal_correction(0.5, 2.0) == doctest::Approx(std::log(4.0)));
  CHECK(log_normal_proposal_correction(3.0, 3.0) == 0.0);
}

TEST_CASE("gamma kernel at Z = W = 0 targets its exact conditional") {
  // with all positions at the origin, log gamma | rest ~ N(mu - nd tau^2, tau^2)
  const TimeGrid grid({0.0, 1.0});
  const auto prior = PriorConfig::defaults_for(grid);
  ModelState s(1, 1, 1, 1);
  const double nd = 2.0;
  const double mean = prior.mu_gamma - nd * prior.tau_gamma * prior.tau_gamma;
  Rng rng(26);
  s.gamma = std::exp(mean);
  std::vector<double> draws;
  for (int m = 0; m < 200000; ++m) {
    s.gamma = mh_update_gamma(s, prior, 1.5, rng).gamma;
    if (m % 40 == 39) draws.push_back(std::log(s.gamma));
  }
  const auto F = [&](double u) { return oracle::normal_cdf(u, mean, prior.tau_gamma); };
  CHECK(oracle::ks_pvalue(oracle::ks_statistic(draws, F), draws.size()) > 0.01);
}

TEST_CASE("chain schedule and determinism") {
  Rng rng(27);
  const auto grid = fixture::random_grid(rng, 3, 6.0);
  const auto data = fixture::random_dataset(rng, 8, 5, grid);
  const auto prior = PriorConfig::defaults_for(grid);

  ChainConfig tiny;
  tiny.iterations = 2;
  tiny.burn_in = 1;
  tiny.thin = 1;
  tiny.chain_count = 1;
  Rng r1(1);
  CHECK(run_chain(data, grid, 2, prior, tiny, r1).draws.size() == 1);

  ChainConfig cfg;
  cfg.iterations = 300;
  cfg.burn_in = 100;
  cfg.thin = 5;
  cfg.chain_count = 3;
  cfg.audit_interval = 25;
  const auto a = run_chains(data, grid, 2, prior, cfg, 1);
  const auto b = run_chains(data, grid, 2, prior, cfg, 3);
  REQUIRE(a.chains.size() == 3);
  CHECK(a.chains[0].draws.size() == 40);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t m = 0; m < a.chains[c].draws.size(); ++m) {
      CHECK(a.chains[c].draws[m].state == b.chains[c].draws[m].state);
      CHECK(a.chains[c].draws[m].log_posterior == b.chains[c].draws[m].log_posterior);
    }
  CHECK(!(a.chains[0].draws.back().state == a.chains[1].draws.back().state));

  ChainConfig bad = cfg;
  bad.burn_in = 300;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.thin = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("stored log posterior matches a fresh evaluation") {
  Rng rng(28);
  const auto grid = fixture::random_grid(rng, 3, 6.0);
  const auto data = fixture::random_dataset(rng, 6, 4, grid);
  const auto prior = PriorConfig::defaults_for(grid);
  ChainConfig cfg;
  cfg.iterations = 60;
  cfg.burn_in = 30;
  cfg.thin = 10;
  cfg.chain_count = 1;
  const auto res = run_chains(data, grid, 2, prior, cfg);
  const IndicatorTables ind(data, grid);
  for (const auto& d : res.chains[0].draws)
    CHECK(d.log_posterior == doctest::Approx(log_likelihood(d.state, data, grid, ind) + log_prior(d.state, prior)).epsilon(1e-9));
}

TEST_CASE("Gelman-Rubin") {
  Rng rng(29);
  auto chain = [&](double centre, std::size_t len) {
    std::vector<double> x;
    for (std::size_t m = 0; m < len; ++m) x.push_back(centre + standard_normal(rng));
    return x;
  };
  const auto good = gelman_rubin({chain(0, 1000), chain(0, 1000), chain(0, 1000)});
  REQUIRE(good.rhat);
  CHECK(*good.rhat < 1.05);
  const auto bad = gelman_rubin({chain(0, 1000), chain(10, 1000)});
  REQUIRE(bad.rhat);
  CHECK(*bad.rhat > 1.5);
  const auto single = gelman_rubin({chain(0, 1000)});
  CHECK(single.split);
  REQUIRE(single.rhat);
  CHECK(*single.rhat < 1.05);
  const auto shortc = gelman_rubin({chain(0, 2), chain(0, 2)});
  CHECK(!shortc.rhat);
  CHECK(!shortc.note.empty());
  const auto flat = gelman_rubin({std::vector<double>(50, 1.0), std::vector<double>(50, 1.0)});
  CHECK(!flat.rhat);
}
