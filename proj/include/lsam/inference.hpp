#ifndef LSAM_INFERENCE_HPP_
#define LSAM_INFERENCE_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsam/random.hpp"
#include "lsam/types.hpp"

namespace lsam {

// Independent priors:
//   lambda_ic,j ~ Gamma(lambda_rate * tilde_j, lambda_rate)    (prior mean tilde_j)
//   theta_kc    ~ N(0, sigma2),          sigma2 ~ Inv-Gamma(a_sigma, b_sigma)
//   z_k, w_i    ~ MVN_d(0, gamma^2 I),   log gamma ~ N(mu_gamma, tau_gamma^2)
struct PriorConfig {
  std::vector<double> lambda_shape_tilde;
  double lambda_rate = 0.5;
  double a_sigma = 0.0001;
  double b_sigma = 0.0001;
  double mu_gamma = 0.0;
  double tau_gamma = 2.0;

  // tilde_j = J / (s_J (J - j + 0.5)) for j = 1..J.
  static PriorConfig defaults_for(const TimeGrid& grid);
  void validate(std::size_t intervals) const;
};

struct ProposalSteps {
  double theta = 0.5;
  double z = 0.3;
  double w = 0.3;
  double log_gamma = 0.1;
};

struct ChainConfig {
  std::size_t iterations = 20000;
  std::size_t burn_in = 10000;
  std::size_t thin = 10;
  std::size_t chain_count = 3;
  std::uint64_t seed = 20240101;
  ProposalSteps steps;
  std::size_t adaptation_window = 50;
  double target_acceptance = 0.3;
  bool adapt = true;
  // Compare cached MH ratios with full recomputation every this many
  // iterations (0 disables).
  std::size_t audit_interval = 0;

  std::size_t retained_per_chain() const { return (iterations - burn_in) / thin; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Draw {
  std::size_t iteration = 0;
  double log_posterior = 0.0;
  ModelState state;
};

struct AcceptanceRates {
  double theta = 0.0;
  double z = 0.0;
  double w = 0.0;
  double gamma = 0.0;
};

struct ChainResult {
  std::vector<Draw> draws;
  AcceptanceRates acceptance;  // post burn-in
  ProposalSteps final_steps;
  std::vector<double> log_posterior_trace;  // one value per iteration
};

struct PosteriorDraws {
  std::vector<ChainResult> chains;

  std::size_t total() const;
  // Flattened view over all chains in chain-major order.
  std::vector<const Draw*> all() const;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double log_prior(const ModelState& state, const PriorConfig& prior);

// Per-record quantities that stay fixed while lambda is fixed: the cumulative
// baseline at the recorded time for each outcome and the log baseline of the
// observed event.
class LikelihoodCache {
 public:
  LikelihoodCache(const BaselineHazards& baselines, const ResponseDataset& data,
                  const IndicatorTables& indicators);

  double cumulative(std::size_t r, Outcome c) const { return cum_[2 * r + slot(c)]; }
  double event_log_baseline(std::size_t r) const { return event_log_[r]; }
  const std::optional<Outcome>& event(std::size_t r) const { return event_[r]; }

  // Log likelihood of record r given both traits and the distance, cached route.
  double record(std::size_t r, double theta_neg, double theta_pos, double distance) const;

 private:
  std::vector<double> cum_;
  std::vector<double> event_log_;
  std::vector<std::optional<Outcome>> event_;
};

// Gamma(shape, rate) full conditional of every lambda_icj.
struct LambdaConditional {
  BaselineHazards shape;
  BaselineHazards rate;
};
LambdaConditional lambda_full_conditional(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                                          const IndicatorTables& indicators, const PriorConfig& prior);

// Inv-Gamma(shape, scale) full conditional of sigma^2.
struct InvGammaParams {
  double shape = 0.0;
  double scale = 0.0;
};
InvGammaParams sigma2_full_conditional(const LatentTraits& traits, const PriorConfig& prior);

BaselineHazards gibbs_update_lambda(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                                    const IndicatorTables& indicators, const PriorConfig& prior, Rng& rng);

double gibbs_update_sigma2(const LatentTraits& traits, const PriorConfig& prior, Rng& rng);

struct TraitUpdate {
  LatentTraits traits;
  std::vector<std::uint8_t> accepted;  // 2n flags, same layout as traits
};

struct PositionUpdate {
  LatentPositions positions;
  std::vector<std::uint8_t> accepted_z;
  std::vector<std::uint8_t> accepted_w;
};

struct GammaUpdate {
  double gamma = 1.0;
  bool accepted = false;
};

TraitUpdate mh_update_theta(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                            const IndicatorTables& indicators, const PriorConfig& prior, double step, Rng& rng);
TraitUpdate mh_update_theta(const ModelState& state, const ResponseDataset& data, const LikelihoodCache& cache,
                            double step, Rng& rng);

PositionUpdate mh_update_positions(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                                   const IndicatorTables& indicators, const PriorConfig& prior, double z_step,
                                   double w_step, Rng& rng);
PositionUpdate mh_update_positions(const ModelState& state, const ResponseDataset& data,
                                   const LikelihoodCache& cache, double z_step, double w_step, Rng& rng);

GammaUpdate mh_update_gamma(const ModelState& state, const PriorConfig& prior, double step, Rng& rng);

// Log of the asymmetric-proposal correction for the log-normal random walk.
inline double log_normal_proposal_correction(double current, double proposed) {
  return std::log(proposed / current);
}

// Log-likelihood changes evaluated from the cache, touching only the row or
// column affected by the proposal.
double theta_log_likelihood_delta(const ModelState& state, const ResponseDataset& data,
                                  const LikelihoodCache& cache, std::size_t k, Outcome c, double proposed);
double respondent_position_log_likelihood_delta(const ModelState& state, const ResponseDataset& data,
                                                const LikelihoodCache& cache, std::size_t k,
                                                const Eigen::RowVectorXd& proposed);
double item_position_log_likelihood_delta(const ModelState& state, const ResponseDataset& data,
                                          const LikelihoodCache& cache, std::size_t i,
                                          const Eigen::RowVectorXd& proposed);

// Random starting values: theta, Z, W from their priors with sigma2 = gamma = 1,
// lambda from its prior.
ModelState initial_state(std::size_t n, std::size_t p, const TimeGrid& grid, std::size_t dim,
                         const PriorConfig& prior, Rng& rng);

// One chain with systematic scan lambda -> sigma2 -> theta -> Z -> W -> gamma.
ChainResult run_chain(const ResponseDataset& data, const TimeGrid& grid, std::size_t dim,
                      const PriorConfig& prior, const ChainConfig& config, Rng& rng);

// chain_count independent chains seeded from config.seed; runs up to
// `threads` chains concurrently.
PosteriorDraws run_chains(const ResponseDataset& data, const TimeGrid& grid, std::size_t dim,
                          const PriorConfig& prior, const ChainConfig& config, std::size_t threads = 1);

}  // namespace lsam

#endif  // LSAM_INFERENCE_HPP_
