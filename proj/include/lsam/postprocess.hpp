#ifndef LSAM_POSTPROCESS_HPP_
#define LSAM_POSTPROCESS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lsam/inference.hpp"

namespace lsam {

// Posterior draws whose stacked (Z; W) configurations have been rigidly
// matched to a common reference.
struct AlignedDraws {
  PosteriorDraws draws;
  Eigen::MatrixXd reference;  // (n + p) x d
  std::vector<std::string> warnings;

  LatentPositions posterior_mean() const;
};

// Rigid (translation + orthogonal, no scaling) least-squares match of
// `config` onto `reference`. Sets `degenerate` when the cross-covariance is
// rank deficient; the rotation then falls back to the identity.
Eigen::MatrixXd procrustes_match(const Eigen::MatrixXd& config, const Eigen::MatrixXd& reference,
                                 bool* degenerate = nullptr);

Eigen::MatrixXd stack_positions(const LatentPositions& positions);
LatentPositions unstack_positions(const Eigen::MatrixXd& stacked, std::size_t n);

// Reference is the maximum log-posterior draw.
AlignedDraws procrustes_align(const PosteriorDraws& draws);

struct PosteriorSummary {
  double mean = 0.0;
  double median = 0.0;
  double lower = 0.0;  // 2.5% quantile
  double upper = 0.0;  // 97.5% quantile
};

PosteriorSummary summarize(std::vector<double> sample);
// Type-7 sample quantile of an unsorted sample.
double sample_quantile(std::vector<double> sample, double prob);

// lambda_i(-1),j - lambda_i(+1),j per draw (zero-based item and interval).
std::vector<double> delta_lambda(const PosteriorDraws& draws, std::size_t i, std::size_t j);
// theta_k(-1) - theta_k(+1) per draw.
std::vector<double> delta_theta(const PosteriorDraws& draws, std::size_t k);

// Median of all n * p respondent-item distances.
double median_distance_bandwidth(const LatentPositions& positions);

// A[k][i] = exp(-||z_k - w_i||^2 / (2 bandwidth^2)).
Eigen::MatrixXd rbf_affinity(const LatentPositions& positions, double bandwidth);

struct KMeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double sse = 0.0;
};

// Lloyd iterations from k-means++ seeds; best of `restarts` runs. Empty
// clusters are reseeded at the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t K, std::size_t restarts, std::uint64_t seed);

// Within-cluster sum of squares of `labels` over the rows of `points`.
double within_cluster_sse(const Eigen::MatrixXd& points, const std::vector<int>& labels);

struct Coclustering {
  std::size_t K = 0;
  std::vector<int> respondent_labels;
  std::vector<int> item_labels;
  double bandwidth = 0.0;
  Eigen::MatrixXd embedding;  // (n + p) x l, respondents first
  double sse = 0.0;
  std::vector<std::size_t> candidate_k;  // filled by elbow selection
  std::vector<double> candidate_sse;
  std::vector<std::string> warnings;
};

// Bipartite spectral co-clustering: normalize A by D1^-1/2 A D2^-1/2, take the
// ceil(log2 K) + 1 leading singular pairs, drop the leading (trivial) one,
// scale by D^-1/2 and run k-means on the joint row/column embedding.
Eigen::MatrixXd cocluster_embedding(const Eigen::MatrixXd& affinity, std::size_t vectors);
Coclustering spectral_cocluster(const Eigen::MatrixXd& affinity, std::size_t K, std::uint64_t seed = 1);

struct ElbowSelection {
  std::size_t K = 0;
  std::vector<std::size_t> ks;
  std::vector<double> sse;
  std::vector<std::string> warnings;
};

// Picks the K with the largest second difference of the SSE curve.
ElbowSelection elbow_from_curve(const std::vector<std::size_t>& ks, const std::vector<double>& sse);
// Runs co-clustering for each K in `k_range` (K = 1 is the single-cluster
// baseline) and scores every labelling in the embedding of the largest K.
ElbowSelection elbow_select_k(const Eigen::MatrixXd& affinity, const std::vector<std::size_t>& k_range,
                              std::uint64_t seed = 1);

}  // namespace lsam

#endif  // LSAM_POSTPROCESS_HPP_
