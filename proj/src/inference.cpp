#include "lsam/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "lsam/model.hpp"

namespace lsam {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

bool accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  return std::log(open_uniform(rng)) < log_ratio;
}

double normal_log_density(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * z * z;
}

// log MVN_d(x | 0, gamma^2 I) summed over rows of M.
double isotropic_log_density(const Eigen::MatrixXd& M, double gamma) {
  const double d = static_cast<double>(M.cols());
  const double rows = static_cast<double>(M.rows());
  return -0.5 * rows * d * (kLog2Pi + 2.0 * std::log(gamma)) - 0.5 * M.squaredNorm() / (gamma * gamma);
}

double log_gamma_target(double gamma, const LatentPositions& positions, const PriorConfig& prior) {
  return isotropic_log_density(positions.Z, gamma) + isotropic_log_density(positions.W, gamma) +
         normal_log_density(std::log(gamma), prior.mu_gamma, prior.tau_gamma) - std::log(gamma);
}

}  // namespace

PriorConfig PriorConfig::defaults_for(const TimeGrid& grid) {
  PriorConfig prior;
  const double J = static_cast<double>(grid.intervals());
  for (std::size_t j = 1; j <= grid.intervals(); ++j)
    prior.lambda_shape_tilde.push_back(J / (grid.upper() * (J - static_cast<double>(j) + 0.5)));
  return prior;
}

void PriorConfig::validate(std::size_t intervals) const {
  if (lambda_shape_tilde.size() != intervals)
    throw std::invalid_argument("prior.lambda_shape_tilde: expected one value per interval");
  for (double v : lambda_shape_tilde)
    if (!(v > 0.0)) throw std::invalid_argument("prior.lambda_shape_tilde: values must be positive");
  if (!(lambda_rate > 0.0)) throw std::invalid_argument("prior.lambda_rate: must be positive");
  if (!(a_sigma > 0.0)) throw std::invalid_argument("prior.a_sigma: must be positive");
  if (!(b_sigma > 0.0)) throw std::invalid_argument("prior.b_sigma: must be positive");
  if (!(tau_gamma > 0.0)) throw std::invalid_argument("prior.tau_gamma: must be positive");
  if (!std::isfinite(mu_gamma)) throw std::invalid_argument("prior.mu_gamma: must be finite");
}

void ChainConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("chain.iterations: must be positive");
  if (burn_in >= iterations) throw std::invalid_argument("chain.burn_in: must be smaller than iterations");
  if (thin == 0) throw std::invalid_argument("chain.thin: must be at least 1");
  if (chain_count == 0) throw std::invalid_argument("chain.chain_count: must be at least 1");
  if (!(steps.theta > 0.0) || !(steps.z > 0.0) || !(steps.w > 0.0) || !(steps.log_gamma > 0.0))
    throw std::invalid_argument("chain.steps: proposal steps must be positive");
  if (adaptation_window == 0) throw std::invalid_argument("chain.adaptation_window: must be positive");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw std::invalid_argument("chain.target_acceptance: must lie in (0, 1)");
}

std::size_t PosteriorDraws::total() const {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.draws.size();
  return n;
}

std::vector<const Draw*> PosteriorDraws::all() const {
  std::vector<const Draw*> out;
  out.reserve(total());
  for (const auto& c : chains)
    for (const auto& d : c.draws) out.push_back(&d);
  return out;
}

double log_prior(const ModelState& state, const PriorConfig& prior) {
  double total = 0.0;
  const auto& lam = state.baselines;
  for (std::size_t i = 0; i < lam.items(); ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < lam.intervals(); ++j) {
        const double a = prior.lambda_rate * prior.lambda_shape_tilde[j];
        const double b = prior.lambda_rate;
        const double x = lam(i, c, j);
        total += a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
      }

  const double sd = std::sqrt(state.sigma2);
  for (double t : state.traits.values()) total += normal_log_density(t, 0.0, sd);

  total += prior.a_sigma * std::log(prior.b_sigma) - std::lgamma(prior.a_sigma) -
           (prior.a_sigma + 1.0) * std::log(state.sigma2) - prior.b_sigma / state.sigma2;

  total += log_gamma_target(state.gamma, state.positions, prior);
  return total;
}

LikelihoodCache::LikelihoodCache(const BaselineHazards& baselines, const ResponseDataset& data,
                                 const IndicatorTables& indicators)
    : cum_(2 * data.size(), 0.0), event_log_(data.size(), 0.0), event_(data.size()) {
  const std::size_t J = indicators.intervals();
  for (std::size_t r = 0; r < data.size(); ++r) {
    const std::size_t i = data[r].item;
    const auto exposure = indicators.exposure_row(r);
    for (Outcome c : kOutcomes) {
      double h = 0.0;
      for (std::size_t j = 0; j < J; ++j) h += exposure[j] * baselines(i, c, j);
      cum_[2 * r + slot(c)] = h;
    }
    event_[r] = indicators.event_outcome(r);
    if (event_[r]) event_log_[r] = std::log(baselines(i, *event_[r], *indicators.event_interval(r)));
  }
}

double LikelihoodCache::record(std::size_t r, double theta_neg, double theta_pos, double distance) const {
  const double eta_neg = theta_neg - distance;
  const double eta_pos = theta_pos + distance;
  double ll = -std::exp(eta_neg) * cum_[2 * r] - std::exp(eta_pos) * cum_[2 * r + 1];
  if (event_[r]) ll += event_log_[r] + (*event_[r] == Outcome::positive ? eta_pos : eta_neg);
  return ll;
}

LambdaConditional lambda_full_conditional(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                                          const IndicatorTables& indicators, const PriorConfig& prior) {
  const std::size_t p = state.items();
  const std::size_t J = grid.intervals();
  LambdaConditional out{BaselineHazards(p, J, 0.0), BaselineHazards(p, J, 0.0)};
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& rec = data[r];
    const double dist = state.positions.distance(rec.respondent, rec.item);
    const auto exposure = indicators.exposure_row(r);
    for (Outcome c : kOutcomes) {
      const double scale = std::exp(state.traits(rec.respondent, c) + sign(c) * dist);
      for (std::size_t j = 0; j < J; ++j) out.rate(rec.item, c, j) += exposure[j] * scale;
    }
    if (auto c = indicators.event_outcome(r)) out.shape(rec.item, *c, *indicators.event_interval(r)) += 1.0;
  }
  for (std::size_t i = 0; i < p; ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < J; ++j) {
        out.shape(i, c, j) += prior.lambda_rate * prior.lambda_shape_tilde[j];
        out.rate(i, c, j) += prior.lambda_rate;
      }
  return out;
}

BaselineHazards gibbs_update_lambda(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                                    const IndicatorTables& indicators, const PriorConfig& prior, Rng& rng) {
  const auto cond = lambda_full_conditional(state, data, grid, indicators, prior);
  BaselineHazards out(state.items(), grid.intervals());
  for (std::size_t i = 0; i < state.items(); ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < grid.intervals(); ++j) {
        const double rate = cond.rate(i, c, j);
        if (!(rate > 0.0) || !std::isfinite(rate)) throw SamplerError("lambda full conditional has invalid rate");
        out(i, c, j) = gamma_draw(rng, cond.shape(i, c, j), rate);
      }
  return out;
}

InvGammaParams sigma2_full_conditional(const LatentTraits& traits, const PriorConfig& prior) {
  double ss = 0.0;
  for (double t : traits.values()) ss += t * t;
  return {prior.a_sigma + static_cast<double>(traits.respondents()), prior.b_sigma + 0.5 * ss};
}

double gibbs_update_sigma2(const LatentTraits& traits, const PriorConfig& prior, Rng& rng) {
  const auto cond = sigma2_full_conditional(traits, prior);
  return 1.0 / gamma_draw(rng, cond.shape, cond.scale);
}

double theta_log_likelihood_delta(const ModelState& state, const ResponseDataset& data,
                                  const LikelihoodCache& cache, std::size_t k, Outcome c, double proposed) {
  const double current = state.traits(k, c);
  double events = 0.0;
  double weight = 0.0;
  for (std::size_t r : data.by_respondent(k)) {
    if (cache.event(r) == c) events += 1.0;
    weight += std::exp(sign(c) * state.positions.distance(k, data[r].item)) * cache.cumulative(r, c);
  }
  return events * (proposed - current) - (std::exp(proposed) - std::exp(current)) * weight;
}

TraitUpdate mh_update_theta(const ModelState& state, const ResponseDataset& data, const LikelihoodCache& cache,
                            double step, Rng& rng) {
  TraitUpdate out{state.traits, std::vector<std::uint8_t>(2 * state.respondents(), 0)};
  const double sigma2 = state.sigma2;
  for (std::size_t k = 0; k < state.respondents(); ++k) {
    // Row-local sufficient statistics: event counts and distance-weighted
    // cumulative baselines for each outcome.
    double events[2] = {0.0, 0.0};
    double weight[2] = {0.0, 0.0};
    for (std::size_t r : data.by_respondent(k)) {
      const double dist = state.positions.distance(k, data[r].item);
      if (const auto& e = cache.event(r)) events[slot(*e)] += 1.0;
      weight[0] += std::exp(-dist) * cache.cumulative(r, Outcome::negative);
      weight[1] += std::exp(dist) * cache.cumulative(r, Outcome::positive);
    }
    for (Outcome c : kOutcomes) {
      const double cur = out.traits(k, c);
      const double prop = cur + step * standard_normal(rng);
      const double log_ratio = events[slot(c)] * (prop - cur) - (std::exp(prop) - std::exp(cur)) * weight[slot(c)] -
                               0.5 * (prop * prop - cur * cur) / sigma2;
      if (accept(log_ratio, rng)) {
        out.traits(k, c) = prop;
        out.accepted[2 * k + slot(c)] = 1;
      }
    }
  }
  return out;
}

TraitUpdate mh_update_theta(const ModelState& state, const ResponseDataset& data, const TimeGrid&,
                            const IndicatorTables& indicators, const PriorConfig&, double step, Rng& rng) {
  const LikelihoodCache cache(state.baselines, data, indicators);
  return mh_update_theta(state, data, cache, step, rng);
}

namespace {

double row_log_likelihood(const ModelState& state, const ResponseDataset& data, const LikelihoodCache& cache,
                          std::size_t k, const Eigen::RowVectorXd& z) {
  double ll = 0.0;
  const double tn = state.traits(k, Outcome::negative);
  const double tp = state.traits(k, Outcome::positive);
  for (std::size_t r : data.by_respondent(k)) {
    const double dist = (z - state.positions.W.row(data[r].item)).norm();
    ll += cache.record(r, tn, tp, dist);
  }
  return ll;
}

double column_log_likelihood(const ModelState& state, const ResponseDataset& data, const LikelihoodCache& cache,
                             std::size_t i, const Eigen::RowVectorXd& w) {
  double ll = 0.0;
  for (std::size_t r : data.by_item(i)) {
    const std::size_t k = data[r].respondent;
    const double dist = (state.positions.Z.row(k) - w).norm();
    ll += cache.record(r, state.traits(k, Outcome::negative), state.traits(k, Outcome::positive), dist);
  }
  return ll;
}

}  // namespace

double respondent_position_log_likelihood_delta(const ModelState& state, const ResponseDataset& data,
                                                const LikelihoodCache& cache, std::size_t k,
                                                const Eigen::RowVectorXd& proposed) {
  return row_log_likelihood(state, data, cache, k, proposed) -
         row_log_likelihood(state, data, cache, k, state.positions.Z.row(k));
}

double item_position_log_likelihood_delta(const ModelState& state, const ResponseDataset& data,
                                          const LikelihoodCache& cache, std::size_t i,
                                          const Eigen::RowVectorXd& proposed) {
  return column_log_likelihood(state, data, cache, i, proposed) -
         column_log_likelihood(state, data, cache, i, state.positions.W.row(i));
}

PositionUpdate mh_update_positions(const ModelState& state, const ResponseDataset& data,
                                   const LikelihoodCache& cache, double z_step, double w_step, Rng& rng) {
  ModelState work = state;
  PositionUpdate out;
  out.accepted_z.assign(state.respondents(), 0);
  out.accepted_w.assign(state.items(), 0);
  const double inv_g2 = 1.0 / (state.gamma * state.gamma);
  const Eigen::Index d = static_cast<Eigen::Index>(state.dim());
  Eigen::RowVectorXd prop(d);

  for (std::size_t k = 0; k < state.respondents(); ++k) {
    const Eigen::RowVectorXd cur = work.positions.Z.row(k);
    for (Eigen::Index a = 0; a < d; ++a) prop(a) = cur(a) + z_step * standard_normal(rng);
    const double log_ratio = row_log_likelihood(work, data, cache, k, prop) -
                             row_log_likelihood(work, data, cache, k, cur) -
                             0.5 * (prop.squaredNorm() - cur.squaredNorm()) * inv_g2;
    if (accept(log_ratio, rng)) {
      work.positions.Z.row(k) = prop;
      out.accepted_z[k] = 1;
    }
  }
  for (std::size_t i = 0; i < state.items(); ++i) {
    const Eigen::RowVectorXd cur = work.positions.W.row(i);
    for (Eigen::Index a = 0; a < d; ++a) prop(a) = cur(a) + w_step * standard_normal(rng);
    const double log_ratio = column_log_likelihood(work, data, cache, i, prop) -
                             column_log_likelihood(work, data, cache, i, cur) -
                             0.5 * (prop.squaredNorm() - cur.squaredNorm()) * inv_g2;
    if (accept(log_ratio, rng)) {
      work.positions.W.row(i) = prop;
      out.accepted_w[i] = 1;
    }
  }
  out.positions = std::move(work.positions);
  return out;
}

PositionUpdate mh_update_positions(const ModelState& state, const ResponseDataset& data, const TimeGrid&,
                                   const IndicatorTables& indicators, const PriorConfig&, double z_step,
                                   double w_step, Rng& rng) {
  const LikelihoodCache cache(state.baselines, data, indicators);
  return mh_update_positions(state, data, cache, z_step, w_step, rng);
}

GammaUpdate mh_update_gamma(const ModelState& state, const PriorConfig& prior, double step, Rng& rng) {
  const double cur = state.gamma;
  const double prop = cur * std::exp(step * standard_normal(rng));
  const double log_ratio = log_gamma_target(prop, state.positions, prior) -
                           log_gamma_target(cur, state.positions, prior) +
                           log_normal_proposal_correction(cur, prop);
  if (accept(log_ratio, rng)) return {prop, true};
  return {cur, false};
}

ModelState initial_state(std::size_t n, std::size_t p, const TimeGrid& grid, std::size_t dim,
                         const PriorConfig& prior, Rng& rng) {
  ModelState s(n, p, grid.intervals(), dim);
  s.sigma2 = 1.0;
  s.gamma = 1.0;
  for (double& t : s.traits.values()) t = standard_normal(rng);
  for (Eigen::Index r = 0; r < s.positions.Z.rows(); ++r)
    for (Eigen::Index a = 0; a < s.positions.Z.cols(); ++a) s.positions.Z(r, a) = standard_normal(rng);
  for (Eigen::Index r = 0; r < s.positions.W.rows(); ++r)
    for (Eigen::Index a = 0; a < s.positions.W.cols(); ++a) s.positions.W(r, a) = standard_normal(rng);
  for (std::size_t i = 0; i < p; ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < grid.intervals(); ++j)
        s.baselines(i, c, j) =
            gamma_draw(rng, prior.lambda_rate * prior.lambda_shape_tilde[j], prior.lambda_rate);
  return s;
}

namespace {

// Robbins-Monro on the log step size, batch-wise during burn-in.
struct StepAdapter {
  double log_step;
  double accepted = 0.0;
  double proposed = 0.0;
  double post_accepted = 0.0;
  double post_proposed = 0.0;

  explicit StepAdapter(double step) : log_step(std::log(step)) {}
  double step() const { return std::exp(log_step); }

  void record(double acc, double prop, bool post_burn_in) {
    if (post_burn_in) {
      post_accepted += acc;
      post_proposed += prop;
    } else {
      accepted += acc;
      proposed += prop;
    }
  }
  void adapt(std::size_t batch, double target) {
    if (proposed > 0.0) {
      const double rate = accepted / proposed;
      const double gain = std::min(0.5, 2.0 / std::sqrt(static_cast<double>(batch)));
      log_step += gain * (rate - target);
    }
    accepted = proposed = 0.0;
  }
  double rate() const { return post_proposed > 0.0 ? post_accepted / post_proposed : 0.0; }
};

double count_accepted(const std::vector<std::uint8_t>& flags) {
  double s = 0.0;
  for (auto f : flags) s += f;
  return s;
}

void check_block(bool ok, std::size_t iteration, const char* block) {
  if (!ok) {
    std::ostringstream os;
    os << "non-finite value in block '" << block << "' at iteration " << iteration;
    throw SamplerError(os.str());
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void audit(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
           const IndicatorTables& indicators, const LikelihoodCache& cache, std::size_t iteration, Rng& rng) {
  if (state.respondents() == 0) return;
  const std::size_t k = std::uniform_int_distribution<std::size_t>(0, state.respondents() - 1)(rng);
  const Outcome c = outcome_from_slot(std::uniform_int_distribution<std::size_t>(0, 1)(rng));
  const double proposed = state.traits(k, c) + 0.1 * standard_normal(rng);
  const double cached = theta_log_likelihood_delta(state, data, cache, k, c, proposed);
  ModelState moved = state;
  moved.traits(k, c) = proposed;
  const double base = log_likelihood(state, data, grid, indicators);
  const double full = log_likelihood(moved, data, grid, indicators) - base;
  if (std::abs(cached - full) > 1e-10 * std::max(1.0, std::abs(base))) {
    std::ostringstream os;
    os << "cached MH ratio disagrees with full recomputation at iteration " << iteration << " (" << cached
       << " vs " << full << ")";
    throw SamplerError(os.str());
  }
}

}  // namespace

ChainResult run_chain(const ResponseDataset& data, const TimeGrid& grid, std::size_t dim,
                      const PriorConfig& prior, const ChainConfig& config, Rng& rng) {
  config.validate();
  prior.validate(grid.intervals());
  const IndicatorTables indicators(data, grid);
  ModelState state = initial_state(data.n(), data.p(), grid, dim, prior, rng);

  StepAdapter theta_step(config.steps.theta), z_step(config.steps.z), w_step(config.steps.w),
      gamma_step(config.steps.log_gamma);
  ChainResult result;
  result.draws.reserve(config.retained_per_chain());
  result.log_posterior_trace.reserve(config.iterations);
  std::size_t batch = 0;

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const bool post = it >= config.burn_in;

    state.baselines = gibbs_update_lambda(state, data, grid, indicators, prior, rng);
    check_block(all_finite(state.baselines.values()), it, "lambda");
    const LikelihoodCache cache(state.baselines, data, indicators);

    state.sigma2 = gibbs_update_sigma2(state.traits, prior, rng);
    check_block(std::isfinite(state.sigma2) && state.sigma2 > 0.0, it, "sigma2");

    auto tu = mh_update_theta(state, data, cache, theta_step.step(), rng);
    state.traits = std::move(tu.traits);
    check_block(all_finite(state.traits.values()), it, "theta");
    theta_step.record(count_accepted(tu.accepted), static_cast<double>(tu.accepted.size()), post);

    auto pu = mh_update_positions(state, data, cache, z_step.step(), w_step.step(), rng);
    state.positions = std::move(pu.positions);
    check_block(state.positions.Z.allFinite() && state.positions.W.allFinite(), it, "positions");
    z_step.record(count_accepted(pu.accepted_z), static_cast<double>(pu.accepted_z.size()), post);
    w_step.record(count_accepted(pu.accepted_w), static_cast<double>(pu.accepted_w.size()), post);

    const auto gu = mh_update_gamma(state, prior, gamma_step.step(), rng);
    state.gamma = gu.gamma;
    check_block(std::isfinite(state.gamma) && state.gamma > 0.0, it, "gamma");
    gamma_step.record(gu.accepted ? 1.0 : 0.0, 1.0, post);

    if (config.audit_interval > 0 && (it + 1) % config.audit_interval == 0)
      audit(state, data, grid, indicators, LikelihoodCache(state.baselines, data, indicators), it, rng);

    const double lp = log_likelihood(state, data, grid, indicators) + log_prior(state, prior);
    if (!std::isfinite(lp)) {
      std::ostringstream os;
      os << "non-finite log posterior at iteration " << it;
      throw SamplerError(os.str());
    }
    result.log_posterior_trace.push_back(lp);

    if (!post && config.adapt && (it + 1) % config.adaptation_window == 0) {
      ++batch;
      for (auto* a : {&theta_step, &z_step, &w_step, &gamma_step}) a->adapt(batch, config.target_acceptance);
    }
    if (post && (it + 1 - config.burn_in) % config.thin == 0) result.draws.push_back({it, lp, state});
  }

  result.acceptance = {theta_step.rate(), z_step.rate(), w_step.rate(), gamma_step.rate()};
  result.final_steps = {theta_step.step(), z_step.step(), w_step.step(), gamma_step.step()};
  return result;
}

PosteriorDraws run_chains(const ResponseDataset& data, const TimeGrid& grid, std::size_t dim,
                          const PriorConfig& prior, const ChainConfig& config, std::size_t threads) {
  config.validate();
  PosteriorDraws out;
  out.chains.resize(config.chain_count);
  std::vector<std::exception_ptr> errors(config.chain_count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < config.chain_count; c = next++) {
      try {
        Rng rng(derive_seed(config.seed, c));
        out.chains[c] = run_chain(data, grid, dim, prior, config, rng);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, config.chain_count);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  for (std::size_t c = 0; c < errors.size(); ++c) {
    if (!errors[c]) continue;
    try {
      std::rethrow_exception(errors[c]);
    } catch (const std::exception& e) {
      throw SamplerError("chain " + std::to_string(c) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace lsam
