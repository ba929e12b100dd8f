#ifndef LSAM_MODEL_HPP_
#define LSAM_MODEL_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

#include "lsam/types.hpp"

// Deterministic model math for the latent space accumulator model: outcome
// specific proportional hazards with piecewise-constant baselines, overall
// survival, joint density of (time, outcome), likelihood and cumulative
// incidence. Interval indices are zero-based throughout.
namespace lsam {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// h_kic(t) = lambda_ic(t) * exp(theta_kc + c * ||z_k - w_i||), for 0 < t <= s_J.
double hazard_at(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, Outcome c,
                 double t);

// Lambda_ic(t), the integral of the piecewise baseline over [0, t].
double cumulative_baseline(const BaselineHazards& baselines, const TimeGrid& grid, std::size_t i, Outcome c,
                           double t);

// g_ki,j: sum over both outcomes of the hazards on interval j.
double overall_hazard_segment(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                              std::size_t j);

// S_ki(t) = P(T_ki > t).
double survival(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, double t);

// log f(T = t, X = c) = log h_kic(t) + log S_ki(t).
double log_joint_density(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                         Outcome c, double t);

// Contribution of one record: the joint density for an observed outcome,
// log S_ki(t) for a censored one.
double log_cell_likelihood(const ModelState& state, const TimeGrid& grid, const ResponseRecord& record);

double log_likelihood(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                      const IndicatorTables& indicators);

// CIF_kic(t) = P(T_ki <= t, X_ki = c), integrated exactly segment by segment.
double cif(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, Outcome c, double t);

}  // namespace lsam

#endif  // LSAM_MODEL_HPP_
