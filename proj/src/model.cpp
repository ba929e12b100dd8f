#include "lsam/model.hpp"

#include <cmath>
#include <sstream>

namespace lsam {

namespace {

void require_time(const TimeGrid& grid, double t, bool allow_zero) {
  const bool ok = allow_zero ? (t >= 0.0 && t <= grid.upper()) : (t > 0.0 && t <= grid.upper());
  if (!ok) {
    std::ostringstream os;
    os << "time " << t << " outside " << (allow_zero ? "[0, " : "(0, ") << grid.upper() << "]";
    throw std::domain_error(os.str());
  }
}

// Sum over outcomes of exp(eta_c) * Lambda_ic(t).
double total_cumulative_hazard(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                               double t) {
  double total = 0.0;
  for (Outcome c : kOutcomes)
    total += std::exp(state.eta(k, i, c)) * cumulative_baseline(state.baselines, grid, i, c, t);
  return total;
}

}  // namespace

double hazard_at(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, Outcome c,
                 double t) {
  require_time(grid, t, false);
  const std::size_t j = grid.interval_of(t);
  return state.baselines(i, c, j) * std::exp(state.eta(k, i, c));
}

double cumulative_baseline(const BaselineHazards& baselines, const TimeGrid& grid, std::size_t i, Outcome c,
                           double t) {
  require_time(grid, t, true);
  double total = 0.0;
  for (std::size_t j = 0; j < grid.intervals() && grid.cut(j) < t; ++j)
    total += baselines(i, c, j) * grid.exposure(j, t);
  return total;
}

double overall_hazard_segment(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                              std::size_t j) {
  if (j >= grid.intervals()) throw std::out_of_range("interval index out of range");
  double g = 0.0;
  for (Outcome c : kOutcomes) g += state.baselines(i, c, j) * std::exp(state.eta(k, i, c));
  return g;
}

double survival(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, double t) {
  require_time(grid, t, true);
  return std::exp(-total_cumulative_hazard(state, grid, k, i, t));
}

double log_joint_density(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                         Outcome c, double t) {
  require_time(grid, t, false);
  const std::size_t j = grid.interval_of(t);
  const double value = std::log(state.baselines(i, c, j)) + state.eta(k, i, c) -
                       total_cumulative_hazard(state, grid, k, i, t);
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "non-finite log density for cell (" << k << ", " << i << ") at t=" << t;
    throw NumericalError(os.str());
  }
  return value;
}

double log_cell_likelihood(const ModelState& state, const TimeGrid& grid, const ResponseRecord& record) {
  if (record.censored())
    return -total_cumulative_hazard(state, grid, record.respondent, record.item, record.time);
  return log_joint_density(state, grid, record.respondent, record.item, *record.outcome, record.time);
}

double log_likelihood(const ModelState& state, const ResponseDataset& data, const TimeGrid& grid,
                      const IndicatorTables& indicators) {
  const std::size_t J = grid.intervals();
  double total = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& rec = data[r];
    const auto exposure = indicators.exposure_row(r);
    for (Outcome c : kOutcomes) {
      const double eta = state.eta(rec.respondent, rec.item, c);
      double cum = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        cum += exposure[j] * state.baselines(rec.item, c, j);
        if (indicators.delta(r, j) * indicators.nu(r, c) == 1)
          total += std::log(state.baselines(rec.item, c, j)) + eta;
      }
      total -= std::exp(eta) * cum;
    }
  }
  if (!std::isfinite(total)) throw NumericalError("non-finite log likelihood");
  return total;
}

double cif(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, Outcome c, double t) {
  require_time(grid, t, true);
  const double scale_c = std::exp(state.eta(k, i, c));
  const double scale_other = std::exp(state.eta(k, i, c == Outcome::positive ? Outcome::negative : Outcome::positive));
  const Outcome other = c == Outcome::positive ? Outcome::negative : Outcome::positive;
  double log_surv = 0.0;  // log S at the start of the current segment
  double total = 0.0;
  for (std::size_t j = 0; j < grid.intervals() && grid.cut(j) < t; ++j) {
    const double h = state.baselines(i, c, j) * scale_c;
    const double g = h + state.baselines(i, other, j) * scale_other;
    const double span = grid.exposure(j, t);
    total += h / g * std::exp(log_surv) * -std::expm1(-g * span);
    log_surv -= g * span;
  }
  return total;
}

}  // namespace lsam
