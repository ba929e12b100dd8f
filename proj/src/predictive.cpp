#include "lsam/predictive.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "lsam/model.hpp"

namespace lsam {

SurvivalInversion invert_survival(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                                  double u) {
  if (!(u > 0.0 && u < 1.0)) {
    std::ostringstream os;
    os << "survival value " << u << " outside (0, 1)";
    throw std::domain_error(os.str());
  }
  const double target = -std::log(u);
  double cumulative = 0.0;
  for (std::size_t j = 0; j < grid.intervals(); ++j) {
    const double g = overall_hazard_segment(state, grid, k, i, j);
    const double segment = g * grid.width(j);
    if (target <= cumulative + segment) {
      const double t = grid.cut(j) + (target - cumulative) / g;
      return {std::min(t, grid.cut(j + 1)), false};
    }
    cumulative += segment;
  }
  return {grid.upper(), true};
}

double outcome_probability(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i,
                           Outcome c, double t) {
  const std::size_t j = grid.interval_of(t);
  const double h = state.baselines(i, c, j) * std::exp(state.eta(k, i, c));
  return h / overall_hazard_segment(state, grid, k, i, j);
}

SimulatedCell simulate_cell(const ModelState& state, const TimeGrid& grid, std::size_t k, std::size_t i, Rng& rng) {
  const auto inv = invert_survival(state, grid, k, i, open_uniform(rng));
  SimulatedCell cell;
  cell.time = inv.time;
  if (inv.censored) return cell;
  cell.prob_positive = outcome_probability(state, grid, k, i, Outcome::positive, inv.time);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  cell.outcome = u < cell.prob_positive ? Outcome::positive : Outcome::negative;
  return cell;
}

PredictiveSample simulate_predictive(const PosteriorDraws& draws, const ResponseDataset& data,
                                     const TimeGrid& grid, std::size_t size, std::uint64_t seed,
                                     std::size_t threads) {
  const auto all = draws.all();
  if (all.empty()) throw std::invalid_argument("simulate_predictive: no posterior draws");
  std::vector<std::size_t> chosen(all.size());
  std::iota(chosen.begin(), chosen.end(), 0);
  if (size > 0 && all.size() > size) {
    Rng pick(derive_seed(seed, 0xA11CE));
    std::shuffle(chosen.begin(), chosen.end(), pick);
    chosen.resize(size);
    std::sort(chosen.begin(), chosen.end());
  }

  PredictiveSample out(chosen.size(), data.size());
  out.source_draws = chosen;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t l = next++; l < chosen.size(); l = next++) {
      const ModelState& state = all[chosen[l]]->state;
      Rng rng(derive_seed(seed, l));
      for (std::size_t r = 0; r < data.size(); ++r)
        out(l, r) = simulate_cell(state, grid, data[r].respondent, data[r].item, rng);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(chosen.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  return out;
}

Eigen::MatrixXd bayesian_pvalue(const PredictiveSample& predictive, const ResponseDataset& data) {
  if (predictive.records() != data.size())
    throw std::invalid_argument("bayesian_pvalue: predictive sample does not match the dataset");
  Eigen::MatrixXd pv = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(data.n()), static_cast<Eigen::Index>(data.p()),
                                                 std::numeric_limits<double>::quiet_NaN());
  const double L = static_cast<double>(predictive.draws());
  for (std::size_t r = 0; r < data.size(); ++r) {
    double count = 0.0;
    for (std::size_t l = 0; l < predictive.draws(); ++l)
      if (predictive(l, r).time >= data[r].time) count += 1.0;
    pv(static_cast<Eigen::Index>(data[r].respondent), static_cast<Eigen::Index>(data[r].item)) = count / L;
  }
  return pv;
}

LogLoss log_loss(const PredictiveSample& predictive, const ResponseDataset& data, std::size_t item) {
  constexpr double kFloor = 1e-12;
  LogLoss out;
  for (std::size_t l = 0; l < predictive.draws(); ++l) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r : data.by_item(item)) {
      const auto& obs = data[r];
      const auto& sim = predictive(l, r);
      if (obs.censored() || !sim.outcome) continue;
      double p = *obs.outcome == Outcome::positive ? sim.prob_positive : 1.0 - sim.prob_positive;
      if (p < kFloor) {
        p = kFloor;
        ++out.clamped;
      }
      total -= std::log(p);
      ++count;
    }
    out.per_draw.push_back(count > 0 ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

std::optional<double> mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // midranks
  std::vector<double> rank(scores.size());
  for (std::size_t a = 0; a < order.size();) {
    std::size_t b = a;
    while (b + 1 < order.size() && scores[order[b + 1]] == scores[order[a]]) ++b;
    const double mid = 0.5 * static_cast<double>(a + b) + 1.0;
    for (std::size_t m = a; m <= b; ++m) rank[order[m]] = mid;
    a = b + 1;
  }
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (labels[m] == 1) {
      pos += 1.0;
      rank_sum += rank[m];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::optional<std::vector<double>> roc_auc(const PredictiveSample& predictive, const ResponseDataset& data,
                                           std::size_t item) {
  bool has_pos = false, has_neg = false;
  for (std::size_t r : data.by_item(item)) {
    if (data[r].censored()) continue;
    (*data[r].outcome == Outcome::positive ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) return std::nullopt;
  std::vector<double> out;
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t l = 0; l < predictive.draws(); ++l) {
    scores.clear();
    labels.clear();
    for (std::size_t r : data.by_item(item)) {
      const auto& sim = predictive(l, r);
      if (data[r].censored() || !sim.outcome) continue;
      scores.push_back(sim.prob_positive);
      labels.push_back(*data[r].outcome == Outcome::positive ? 1 : 0);
    }
    out.push_back(mann_whitney_auc(scores, labels).value_or(std::numeric_limits<double>::quiet_NaN()));
  }
  return out;
}

namespace {

std::optional<PosteriorSummary> summarize_finite(const std::vector<double>& v) {
  std::vector<double> finite;
  for (double x : v)
    if (std::isfinite(x)) finite.push_back(x);
  if (finite.empty()) return std::nullopt;
  return summarize(std::move(finite));
}

}  // namespace

std::vector<ItemFit> item_fit_table(const PredictiveSample& predictive, const ResponseDataset& data) {
  const Eigen::MatrixXd pv = bayesian_pvalue(predictive, data);
  std::vector<ItemFit> table;
  for (std::size_t i = 0; i < data.p(); ++i) {
    ItemFit fit;
    fit.item = i;
    for (std::size_t r : data.by_item(i)) {
      const double v = pv(static_cast<Eigen::Index>(data[r].respondent), static_cast<Eigen::Index>(i));
      (pvalue_misfit(v) ? fit.pvalue_outside : fit.pvalue_inside) += 1;
    }
    const auto ll = log_loss(predictive, data, i);
    fit.log_loss = summarize_finite(ll.per_draw);
    if (ll.clamped > 0)
      fit.warnings.push_back(std::to_string(ll.clamped) + " prediction probabilities clamped at 1e-12");
    if (auto auc = roc_auc(predictive, data, i)) {
      fit.auc = summarize_finite(*auc);
    } else {
      fit.warnings.push_back("AUC undefined: item has a single observed outcome class");
    }
    table.push_back(std::move(fit));
  }
  return table;
}

}  // namespace lsam
