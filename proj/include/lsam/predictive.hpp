#ifndef LSAM_PREDICTIVE_HPP_
#define LSAM_PREDICTIVE_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsam/inference.hpp"
#include "lsam/postprocess.hpp"

namespace lsam {

struct SurvivalInversion {
  double time = 0.0;
  bool censored = false;  // -log u exceeded the total cumulative hazard on (0, s_J]
};

// Solves S_ki(t) = u on the piecewise-exponential survival curve.
SurvivalInversion invert_survival(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                                  double u);

// P(X_ki = c | T_ki = t) = h_kic(t) / sum_c h_kic(t).
double outcome_probability(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                           Outcome c, double t);

struct SimulatedCell {
  double time = 0.0;
  std::optional<Outcome> outcome;  // empty when censored at s_J
  double prob_positive = 0.0;      // P(X = +1 | T = time); 0 when censored
};

SimulatedCell simulate_cell(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, Rng& rng);

// Simulated (time, outcome) for every observed cell under each of L
// posterior draws. Cells follow the record order of the dataset.
class PredictiveSample {
 public:
  PredictiveSample() = default;
  PredictiveSample(std::size_t draws, std::size_t records) : L_(draws), R_(records), cells_(draws * records) {}

  std::size_t draws() const { return L_; }
  std::size_t records() const { return R_; }
  const SimulatedCell& operator()(std::size_t l, std::size_t r) const { return cells_[l * R_ + r]; }
  SimulatedCell& operator()(std::size_t l, std::size_t r) { return cells_[l * R_ + r]; }

  // Index into the posterior draws used for each predictive draw.
  std::vector<std::size_t> source_draws;

 private:
  std::size_t L_ = 0;
  std::size_t R_ = 0;
  std::vector<SimulatedCell> cells_;
};

// Posterior predictive simulation; subsamples `size` draws uniformly without
// replacement when more are available. Each predictive draw uses its own
// random stream derived from `seed`, so results do not depend on `threads`.
PredictiveSample simulate_predictive(const PosteriorDraws& draws, const ResponseDataset& data,
                                     const TimeGrid& grid, std::size_t size, std::uint64_t seed,
                                     std::size_t threads = 1);

// n x p matrix of P(T~ >= t_ki); NaN for unobserved cells.
Eigen::MatrixXd bayesian_pvalue(const PredictiveSample& predictive, const ResponseDataset& data);

inline bool pvalue_misfit(double pv) { return pv < 0.05 || pv > 0.95; }

struct LogLoss {
  std::vector<double> per_draw;  // NaN when no cell contributes in a draw
  std::size_t clamped = 0;       // probabilities floored at 1e-12
};

// Per draw: -(1/N) sum_k log p_k,observed over cells with an observed outcome
// and an uncensored simulated time; N counts those cells.
LogLoss log_loss(const PredictiveSample& predictive, const ResponseDataset& data, std::size_t item);

// Mann-Whitney AUC with ties counted one half; empty if a class is missing.
std::optional<double> mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-draw AUC of P(X = +1 | T = T~) against observed outcomes (positive = +1);
// empty when the item has a single observed class.
std::optional<std::vector<double>> roc_auc(const PredictiveSample& predictive, const ResponseDataset& data,
                                           std::size_t item);

struct ItemFit {
  std::size_t item = 0;
  std::size_t pvalue_inside = 0;
  std::size_t pvalue_outside = 0;
  std::optional<PosteriorSummary> log_loss;
  std::optional<PosteriorSummary> auc;
  std::vector<std::string> warnings;
};

std::vector<ItemFit> item_fit_table(const PredictiveSample& predictive, const ResponseDataset& data);

}  // namespace lsam

#endif  // LSAM_PREDICTIVE_HPP_
