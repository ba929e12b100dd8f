#include "lsam/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "lsam/predictive.hpp"
#include "lsam/random.hpp"

namespace lsam {

void SyntheticSpec::validate() const {
  if (n == 0 || p == 0 || J == 0 || d == 0) throw std::invalid_argument("synthetic: n, p, J and d must be positive");
  if (!cuts.empty() && cuts.size() != J + 1) throw std::invalid_argument("synthetic: cuts must hold J + 1 values");
  if (cuts.empty() && !(upper > 0.0)) throw std::invalid_argument("synthetic: upper must be positive");
  if (!(trait_sd >= 0.0) || !(position_scale >= 0.0)) throw std::invalid_argument("synthetic: scales must be nonnegative");
  if (!(baseline_low > 0.0) || !(baseline_high >= baseline_low))
    throw std::invalid_argument("synthetic: baseline range must be positive and ordered");
  if (negative_rate_ratio && !(*negative_rate_ratio > 0.0))
    throw std::invalid_argument("synthetic: negative_rate_ratio must be positive");
  if (censor_limit && !(*censor_limit > 0.0)) throw std::invalid_argument("synthetic: censor_limit must be positive");
  if (truth) {
    truth->validate();
    if (truth->respondents() != n || truth->items() != p || truth->intervals() != J || truth->dim() != d)
      throw std::invalid_argument("synthetic: fixed truth does not match n, p, J, d");
  }
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, 0));

  std::vector<double> cuts = spec.cuts;
  if (cuts.empty())
    for (std::size_t j = 0; j <= spec.J; ++j) cuts.push_back(spec.upper * static_cast<double>(j) / static_cast<double>(spec.J));
  TimeGrid grid(cuts);

  SyntheticData out;
  out.grid = grid;
  if (spec.truth) {
    out.truth = *spec.truth;
  } else {
    ModelState s(spec.n, spec.p, spec.J, spec.d);
    s.sigma2 = spec.trait_sd * spec.trait_sd;
    s.gamma = spec.position_scale;
    for (std::size_t k = 0; k < spec.n; ++k) {
      s.traits(k, Outcome::negative) = spec.trait_mean_negative + spec.trait_sd * standard_normal(rng);
      s.traits(k, Outcome::positive) = spec.trait_mean_positive + spec.trait_sd * standard_normal(rng);
    }
    auto fill_rows = [&](Eigen::MatrixXd& M, std::vector<int>& groups) {
      for (Eigen::Index r = 0; r < M.rows(); ++r) {
        Eigen::RowVectorXd center = Eigen::RowVectorXd::Zero(M.cols());
        double spread = spec.position_scale;
        if (spec.planted_groups > 0) {
          const int g = static_cast<int>(static_cast<std::size_t>(r) % spec.planted_groups);
          groups.push_back(g);
          const double angle = 2.0 * std::numbers::pi * g / static_cast<double>(spec.planted_groups);
          center(0) = spec.planted_radius * std::cos(angle);
          if (M.cols() > 1) center(1) = spec.planted_radius * std::sin(angle);
          spread = spec.planted_spread;
        }
        for (Eigen::Index a = 0; a < M.cols(); ++a) M(r, a) = center(a) + spread * standard_normal(rng);
      }
    };
    fill_rows(s.positions.Z, out.planted_respondent_groups);
    fill_rows(s.positions.W, out.planted_item_groups);
    std::uniform_real_distribution<double> base(spec.baseline_low, spec.baseline_high);
    for (std::size_t i = 0; i < spec.p; ++i)
      for (std::size_t j = 0; j < spec.J; ++j) {
        const double pos = base(rng);
        s.baselines(i, Outcome::positive, j) = pos;
        s.baselines(i, Outcome::negative, j) = spec.negative_rate_ratio ? *spec.negative_rate_ratio * pos : base(rng);
      }
    s.validate();
    out.truth = std::move(s);
  }

  const double limit = spec.censor_limit ? std::min(*spec.censor_limit, grid.upper()) : grid.upper();
  std::vector<ResponseRecord> records;
  records.reserve(spec.n * spec.p);
  Rng sim(derive_seed(spec.seed, 1));
  for (std::size_t k = 0; k < spec.n; ++k)
    for (std::size_t i = 0; i < spec.p; ++i) {
      const auto cell = simulate_cell(out.truth, grid, k, i, sim);
      ResponseRecord rec{k, i, cell.outcome, cell.time};
      if (rec.time > limit) {
        rec.time = limit;
        rec.outcome.reset();
      }
      records.push_back(rec);
    }
  std::vector<std::string> rids, iids;
  for (std::size_t k = 0; k < spec.n; ++k) rids.push_back("r" + std::to_string(k + 1));
  for (std::size_t i = 0; i < spec.p; ++i) iids.push_back("i" + std::to_string(i + 1));
  out.data = ResponseDataset(std::move(records), spec.n, spec.p, std::move(rids), std::move(iids));
  return out;
}

SyntheticSpec act_like_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.cuts = {0.0, 4.0, 8.0, 13.0, 20.0, 30.0};
  spec.J = 5;
  spec.trait_sd = 0.8;
  spec.position_scale = 0.7;
  spec.negative_rate_ratio = 1.5;
  spec.baseline_low = 0.02;
  spec.baseline_high = 0.12;
  spec.seed = seed;
  return spec;
}

SyntheticSpec recovery_spec(std::uint64_t seed) {
  SyntheticSpec spec = act_like_spec(seed);
  spec.trait_sd = 2.0;
  spec.position_scale = 1.3;
  spec.negative_rate_ratio = 8.0;
  return spec;
}

}  // namespace lsam
