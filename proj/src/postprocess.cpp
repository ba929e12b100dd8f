#include "lsam/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lsam/random.hpp"

namespace lsam {

Eigen::MatrixXd stack_positions(const LatentPositions& positions) {
  Eigen::MatrixXd X(positions.Z.rows() + positions.W.rows(), positions.Z.cols());
  X << positions.Z, positions.W;
  return X;
}

LatentPositions unstack_positions(const Eigen::MatrixXd& stacked, std::size_t n) {
  LatentPositions out;
  const auto rows = static_cast<Eigen::Index>(n);
  out.Z = stacked.topRows(rows);
  out.W = stacked.bottomRows(stacked.rows() - rows);
  return out;
}

Eigen::MatrixXd procrustes_match(const Eigen::MatrixXd& config, const Eigen::MatrixXd& reference, bool* degenerate) {
  const Eigen::RowVectorXd mean_x = config.colwise().mean();
  const Eigen::RowVectorXd mean_r = reference.colwise().mean();
  const Eigen::MatrixXd xc = config.rowwise() - mean_x;
  const Eigen::MatrixXd rc = reference.rowwise() - mean_r;
  const Eigen::MatrixXd cross = xc.transpose() * rc;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const bool rank_deficient = s.size() == 0 || !(s(s.size() - 1) > 1e-12 * std::max(s(0), 1e-300));
  if (degenerate) *degenerate = rank_deficient;
  Eigen::MatrixXd rotation = Eigen::MatrixXd::Identity(config.cols(), config.cols());
  if (!rank_deficient) rotation = svd.matrixU() * svd.matrixV().transpose();
  return (xc * rotation).rowwise() + mean_r;
}

AlignedDraws procrustes_align(const PosteriorDraws& draws) {
  if (draws.total() == 0) throw std::invalid_argument("procrustes_align: no draws");
  const Draw* best = nullptr;
  for (const Draw* d : draws.all())
    if (!best || d->log_posterior > best->log_posterior) best = d;

  AlignedDraws out;
  out.draws = draws;
  out.reference = stack_positions(best->state.positions);
  const std::size_t n = best->state.respondents();
  std::size_t degenerate = 0;
  for (auto& chain : out.draws.chains)
    for (auto& d : chain.draws) {
      bool flag = false;
      const Eigen::MatrixXd aligned = procrustes_match(stack_positions(d.state.positions), out.reference, &flag);
      if (flag) ++degenerate;
      d.state.positions = unstack_positions(aligned, n);
    }
  if (degenerate > 0) {
    std::ostringstream os;
    os << degenerate << " draw(s) had a rank-deficient cross-covariance; identity rotation used";
    out.warnings.push_back(os.str());
  }
  return out;
}

LatentPositions AlignedDraws::posterior_mean() const {
  const auto all = draws.all();
  if (all.empty()) return {};
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(reference.rows(), reference.cols());
  for (const Draw* d : all) sum += stack_positions(d->state.positions);
  sum /= static_cast<double>(all.size());
  return unstack_positions(sum, all.front()->state.respondents());
}

double sample_quantile(std::vector<double> sample, double prob) {
  if (sample.empty()) throw std::invalid_argument("sample_quantile: empty sample");
  std::sort(sample.begin(), sample.end());
  const double h = (static_cast<double>(sample.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

PosteriorSummary summarize(std::vector<double> sample) {
  if (sample.empty()) throw std::invalid_argument("summarize: empty sample");
  PosteriorSummary s;
  s.mean = std::accumulate(sample.begin(), sample.end(), 0.0) / static_cast<double>(sample.size());
  s.median = sample_quantile(sample, 0.5);
  s.lower = sample_quantile(sample, 0.025);
  s.upper = sample_quantile(sample, 0.975);
  return s;
}

std::vector<double> delta_lambda(const PosteriorDraws& draws, std::size_t i, std::size_t j) {
  std::vector<double> out;
  for (const Draw* d : draws.all()) {
    const auto& lam = d->state.baselines;
    if (i >= lam.items() || j >= lam.intervals()) throw std::out_of_range("delta_lambda: index out of range");
    out.push_back(lam(i, Outcome::negative, j) - lam(i, Outcome::positive, j));
  }
  return out;
}

std::vector<double> delta_theta(const PosteriorDraws& draws, std::size_t k) {
  std::vector<double> out;
  for (const Draw* d : draws.all()) {
    if (k >= d->state.respondents()) throw std::out_of_range("delta_theta: index out of range");
    out.push_back(d->state.traits(k, Outcome::negative) - d->state.traits(k, Outcome::positive));
  }
  return out;
}

double median_distance_bandwidth(const LatentPositions& positions) {
  const Eigen::MatrixXd D = positions.distances();
  std::vector<double> all(D.data(), D.data() + D.size());
  return sample_quantile(std::move(all), 0.5);
}

Eigen::MatrixXd rbf_affinity(const LatentPositions& positions, double bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("rbf_affinity: bandwidth must be positive");
  const Eigen::MatrixXd D = positions.distances();
  return (-D.array().square() / (2.0 * bandwidth * bandwidth)).exp().matrix();
}

double within_cluster_sse(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  const int K = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(K, points.cols());
  std::vector<double> counts(static_cast<std::size_t>(K), 0.0);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    centroids.row(labels[r]) += points.row(r);
    counts[labels[r]] += 1.0;
  }
  for (int c = 0; c < K; ++c)
    if (counts[c] > 0) centroids.row(c) /= counts[c];
  double sse = 0.0;
  for (Eigen::Index r = 0; r < points.rows(); ++r) sse += (points.row(r) - centroids.row(labels[r])).squaredNorm();
  return sse;
}

namespace {

KMeansResult kmeans_once(const Eigen::MatrixXd& X, std::size_t K, Rng& rng) {
  const auto N = static_cast<std::size_t>(X.rows());
  Eigen::MatrixXd C(static_cast<Eigen::Index>(K), X.cols());
  // k-means++ seeding
  std::vector<double> nearest(N, std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
  C.row(0) = X.row(first);
  for (std::size_t c = 1; c < K; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < N; ++r) {
      nearest[r] = std::min(nearest[r], (X.row(r) - C.row(c - 1)).squaredNorm());
      total += nearest[r];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (pick = 0; pick + 1 < N && u >= nearest[pick]; ++pick) u -= nearest[pick];
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
    }
    C.row(c) = X.row(pick);
  }

  std::vector<int> labels(N, -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t r = 0; r < N; ++r) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < K; ++c) {
        const double d = (X.row(r) - C.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (labels[r] != best) {
        labels[r] = best;
        changed = true;
      }
    }
    std::vector<std::size_t> counts(K, 0);
    for (int l : labels) ++counts[l];
    for (std::size_t c = 0; c < K; ++c) {
      if (counts[c] > 0) continue;
      // reseed an empty cluster at the worst-fit point taken from a cluster
      // with at least two members
      std::size_t far = N;
      double far_d = -1.0;
      for (std::size_t r = 0; r < N; ++r) {
        if (counts[labels[r]] < 2) continue;
        const double d = (X.row(r) - C.row(labels[r])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = r;
        }
      }
      if (far == N) break;
      --counts[labels[far]];
      labels[far] = static_cast<int>(c);
      counts[c] = 1;
      changed = true;
    }
    C.setZero();
    for (std::size_t r = 0; r < N; ++r) C.row(labels[r]) += X.row(r);
    for (std::size_t c = 0; c < K; ++c)
      if (counts[c] > 0) C.row(c) /= static_cast<double>(counts[c]);
    if (!changed) break;
  }
  KMeansResult res{labels, C, 0.0};
  res.sse = within_cluster_sse(X, labels);
  return res;
}

// Relabel clusters in order of first appearance so equal partitions compare equal.
void canonical_labels(std::vector<int>& labels) {
  std::vector<int> map;
  for (int& l : labels) {
    if (static_cast<std::size_t>(l) >= map.size()) map.resize(l + 1, -1);
    if (map[l] < 0) map[l] = static_cast<int>(std::count_if(map.begin(), map.end(), [](int v) { return v >= 0; }));
    l = map[l];
  }
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t K, std::size_t restarts, std::uint64_t seed) {
  if (K == 0 || K > static_cast<std::size_t>(points.rows()))
    throw std::invalid_argument("kmeans: K must lie in 1..number of points");
  KMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    Rng rng(derive_seed(seed, r));
    auto res = kmeans_once(points, K, rng);
    if (res.sse < best.sse - 1e-12) best = std::move(res);
  }
  canonical_labels(best.labels);
  return best;
}

Eigen::MatrixXd cocluster_embedding(const Eigen::MatrixXd& affinity, std::size_t vectors) {
  if ((affinity.array() < 0.0).any()) throw std::invalid_argument("co-clustering: affinity must be nonnegative");
  const Eigen::VectorXd row_sums = affinity.rowwise().sum();
  const Eigen::VectorXd col_sums = affinity.colwise().sum().transpose();
  for (Eigen::Index k = 0; k < row_sums.size(); ++k)
    if (!(row_sums(k) > 0.0)) throw std::invalid_argument("co-clustering: zero affinity row " + std::to_string(k));
  for (Eigen::Index i = 0; i < col_sums.size(); ++i)
    if (!(col_sums(i) > 0.0)) throw std::invalid_argument("co-clustering: zero affinity column " + std::to_string(i));

  const Eigen::VectorXd d1 = row_sums.array().rsqrt();
  const Eigen::VectorXd d2 = col_sums.array().rsqrt();
  const Eigen::MatrixXd normalized = d1.asDiagonal() * affinity * d2.asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(normalized, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto available = static_cast<std::size_t>(std::min(normalized.rows(), normalized.cols()));
  const auto used = static_cast<Eigen::Index>(std::min(vectors, available) - 1);
  Eigen::MatrixXd embedding(affinity.rows() + affinity.cols(), std::max<Eigen::Index>(used, 1));
  if (used < 1) {
    embedding.setZero();
    return embedding;
  }
  embedding.topRows(affinity.rows()) = d1.asDiagonal() * svd.matrixU().middleCols(1, used);
  embedding.bottomRows(affinity.cols()) = d2.asDiagonal() * svd.matrixV().middleCols(1, used);
  // Fix the sign of each column so the embedding is reproducible.
  for (Eigen::Index c = 0; c < embedding.cols(); ++c) {
    Eigen::Index arg;
    embedding.col(c).cwiseAbs().maxCoeff(&arg);
    if (embedding(arg, c) < 0.0) embedding.col(c) *= -1.0;
  }
  return embedding;
}

namespace {

std::size_t singular_vectors_for(std::size_t K) {
  return static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(K)))) + 1;
}

}  // namespace

Coclustering spectral_cocluster(const Eigen::MatrixXd& affinity, std::size_t K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("spectral_cocluster: K must be at least 2");
  const auto nodes = static_cast<std::size_t>(affinity.rows() + affinity.cols());
  if (K > nodes) throw std::invalid_argument("spectral_cocluster: K exceeds the number of respondents and items");
  Coclustering out;
  out.K = K;
  out.embedding = cocluster_embedding(affinity, singular_vectors_for(K));
  if (K == nodes) out.warnings.push_back("K equals the number of nodes; every node forms its own cluster");
  const auto km = kmeans(out.embedding, K, 10, seed);
  out.sse = km.sse;
  const auto n = static_cast<std::size_t>(affinity.rows());
  out.respondent_labels.assign(km.labels.begin(), km.labels.begin() + static_cast<long>(n));
  out.item_labels.assign(km.labels.begin() + static_cast<long>(n), km.labels.end());
  return out;
}

ElbowSelection elbow_from_curve(const std::vector<std::size_t>& ks, const std::vector<double>& sse) {
  if (ks.size() != sse.size()) throw std::invalid_argument("elbow: K and SSE lengths differ");
  if (ks.size() < 3) throw std::invalid_argument("elbow: need at least 3 candidate K values");
  ElbowSelection out{ks.front(), ks, sse, {}};
  const double scale = std::max(std::abs(*std::max_element(sse.begin(), sse.end())), 1e-300);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m + 1 < ks.size(); ++m) {
    const double curvature = sse[m - 1] - 2.0 * sse[m] + sse[m + 1];
    if (curvature > best) {
      best = curvature;
      out.K = ks[m];
    }
  }
  if (!(best > 1e-9 * scale)) {
    out.K = ks.front();
    out.warnings.push_back("SSE curve has no curvature; returning the smallest K");
  }
  return out;
}

ElbowSelection elbow_select_k(const Eigen::MatrixXd& affinity, const std::vector<std::size_t>& k_range,
                              std::uint64_t seed) {
  if (k_range.size() < 3) throw std::invalid_argument("elbow: need at least 3 candidate K values");
  std::vector<std::size_t> ks = k_range;
  std::sort(ks.begin(), ks.end());
  const Eigen::MatrixXd common = cocluster_embedding(affinity, singular_vectors_for(std::max<std::size_t>(ks.back(), 2)));
  const auto n = static_cast<std::size_t>(affinity.rows());
  std::vector<double> sse;
  for (std::size_t K : ks) {
    std::vector<int> labels(static_cast<std::size_t>(common.rows()), 0);
    if (K >= 2) {
      const auto cc = spectral_cocluster(affinity, K, seed);
      std::copy(cc.respondent_labels.begin(), cc.respondent_labels.end(), labels.begin());
      std::copy(cc.item_labels.begin(), cc.item_labels.end(), labels.begin() + static_cast<long>(n));
    }
    sse.push_back(within_cluster_sse(common, labels));
  }
  return elbow_from_curve(ks, sse);
}

}  // namespace lsam
