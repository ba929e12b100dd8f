// Random model configurations for property and acceptance tests.
#ifndef LSAM_TESTS_FIXTURES_HPP_
#define LSAM_TESTS_FIXTURES_HPP_

#include <algorithm>
#include <vector>

#include "lsam/random.hpp"
#include "lsam/types.hpp"

namespace fixture {

inline double uniform(lsam::Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// J intervals on [0, upper] with random interior cuts.
inline lsam::TimeGrid random_grid(lsam::Rng& rng, std::size_t J, double upper) {
  std::vector<double> inner;
  for (std::size_t j = 1; j < J; ++j) inner.push_back(uniform(rng, 0.05, 0.95) * upper);
  std::sort(inner.begin(), inner.end());
  std::vector<double> cuts{0.0};
  for (double c : inner)
    if (c > cuts.back() + 1e-3) cuts.push_back(c);
  while (cuts.size() < J) cuts.push_back(cuts.back() + 1e-2);
  cuts.push_back(std::max(upper, cuts.back() + 1e-2));
  return lsam::TimeGrid(cuts);
}

inline lsam::ModelState random_state(lsam::Rng& rng, std::size_t n, std::size_t p, std::size_t J, std::size_t d,
                                     double lambda_lo = 0.05, double lambda_hi = 0.6) {
  lsam::ModelState s(n, p, J, d);
  for (double& v : s.traits.values()) v = 0.6 * lsam::standard_normal(rng);
  for (double& v : s.baselines.values()) v = uniform(rng, lambda_lo, lambda_hi);
  for (Eigen::Index r = 0; r < s.positions.Z.rows(); ++r)
    for (Eigen::Index a = 0; a < s.positions.Z.cols(); ++a) s.positions.Z(r, a) = 0.7 * lsam::standard_normal(rng);
  for (Eigen::Index r = 0; r < s.positions.W.rows(); ++r)
    for (Eigen::Index a = 0; a < s.positions.W.cols(); ++a) s.positions.W(r, a) = 0.7 * lsam::standard_normal(rng);
  s.sigma2 = uniform(rng, 0.2, 2.0);
  s.gamma = uniform(rng, 0.3, 2.0);
  return s;
}

// Every cell observed; roughly a fifth censored at s_J.
inline lsam::ResponseDataset random_dataset(lsam::Rng& rng, std::size_t n, std::size_t p, const lsam::TimeGrid& grid) {
  std::vector<lsam::ResponseRecord> records;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < p; ++i) {
      lsam::ResponseRecord r{k, i, std::nullopt, grid.upper()};
      if (uniform(rng, 0, 1) > 0.2) {
        r.time = uniform(rng, 0.01, 1.0) * grid.upper();
        r.outcome = uniform(rng, 0, 1) < 0.6 ? lsam::Outcome::positive : lsam::Outcome::negative;
      }
      records.push_back(r);
    }
  return lsam::ResponseDataset(std::move(records), n, p);
}

// Haar-ish random orthogonal matrix via QR of a Gaussian matrix.
inline Eigen::MatrixXd random_orthogonal(lsam::Rng& rng, std::size_t d) {
  Eigen::MatrixXd G(d, d);
  for (Eigen::Index r = 0; r < G.rows(); ++r)
    for (Eigen::Index c = 0; c < G.cols(); ++c) G(r, c) = lsam::standard_normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  return qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace fixture

#endif  // LSAM_TESTS_FIXTURES_HPP_
