#ifndef LSAM_TYPES_HPP_
#define LSAM_TYPES_HPP_

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lsam {

// The two competing response outcomes (incorrect / correct).
enum class Outcome : int { negative = -1, positive = 1 };

inline constexpr std::array<Outcome, 2> kOutcomes{Outcome::negative, Outcome::positive};

// Storage slot for an outcome: negative -> 0, positive -> 1.
constexpr std::size_t slot(Outcome c) { return c == Outcome::positive ? 1 : 0; }
constexpr double sign(Outcome c) { return static_cast<double>(static_cast<int>(c)); }
constexpr Outcome outcome_from_slot(std::size_t s) { return s == 1 ? Outcome::positive : Outcome::negative; }

struct ResponseRecord {
  std::size_t respondent = 0;
  std::size_t item = 0;
  // Empty when the record is censored.
  std::optional<Outcome> outcome;
  double time = 0.0;

  bool censored() const { return !outcome.has_value(); }
};

// Observed responses with dense respondent/item indices.
class ResponseDataset {
 public:
  ResponseDataset() = default;
  // Validates indices, positivity of times and uniqueness of (k, i).
  ResponseDataset(std::vector<ResponseRecord> records, std::size_t n, std::size_t p,
                  std::vector<std::string> respondent_ids = {},
                  std::vector<std::string> item_ids = {});

  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<ResponseRecord>& records() const { return records_; }
  const ResponseRecord& operator[](std::size_t r) const { return records_[r]; }

  // Record index of cell (k, i), if observed.
  std::optional<std::size_t> cell(std::size_t k, std::size_t i) const;
  const std::vector<std::size_t>& by_respondent(std::size_t k) const { return rows_[k]; }
  const std::vector<std::size_t>& by_item(std::size_t i) const { return cols_[i]; }

  const std::vector<std::string>& respondent_ids() const { return respondent_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  std::string respondent_label(std::size_t k) const;
  std::string item_label(std::size_t i) const;

  bool operator==(const ResponseDataset& other) const;

 private:
  std::vector<ResponseRecord> records_;
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  std::vector<long> cell_;  // n*p, -1 when missing
  std::vector<std::vector<std::size_t>> rows_;
  std::vector<std::vector<std::size_t>> cols_;
  std::vector<std::string> respondent_ids_;
  std::vector<std::string> item_ids_;
};

// Cut points 0 = s_0 < s_1 < ... < s_J, in seconds.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> cuts);

  std::size_t intervals() const { return cuts_.size() - 1; }
  double upper() const { return cuts_.back(); }
  // s_j for j in 0..J.
  double cut(std::size_t j) const { return cuts_[j]; }
  double width(std::size_t j) const { return cuts_[j + 1] - cuts_[j]; }  // zero-based interval j
  const std::vector<double>& cuts() const { return cuts_; }

  // Zero-based interval containing t; intervals are right-open except the last,
  // which also holds t = s_J. Throws std::domain_error outside [0, s_J].
  std::size_t interval_of(double t) const;

  // Overlap of zero-based interval j with [0, t).
  double exposure(std::size_t j, double t) const;

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> cuts_;
};

// lambda[item][outcome slot][interval], strictly positive.
class BaselineHazards {
 public:
  BaselineHazards() = default;
  BaselineHazards(std::size_t p, std::size_t J, double fill = 1.0);

  std::size_t items() const { return p_; }
  std::size_t intervals() const { return J_; }

  double operator()(std::size_t i, Outcome c, std::size_t j) const { return v_[index(i, slot(c), j)]; }
  double& operator()(std::size_t i, Outcome c, std::size_t j) { return v_[index(i, slot(c), j)]; }
  std::span<const double> values() const { return v_; }
  std::span<double> values() { return v_; }

  bool operator==(const BaselineHazards&) const = default;

 private:
  std::size_t index(std::size_t i, std::size_t s, std::size_t j) const { return (i * 2 + s) * J_ + j; }
  std::size_t p_ = 0;
  std::size_t J_ = 0;
  std::vector<double> v_;
};

// theta[respondent][outcome slot].
class LatentTraits {
 public:
  LatentTraits() = default;
  explicit LatentTraits(std::size_t n, double fill = 0.0) : n_(n), v_(2 * n, fill) {}

  std::size_t respondents() const { return n_; }
  double operator()(std::size_t k, Outcome c) const { return v_[2 * k + slot(c)]; }
  double& operator()(std::size_t k, Outcome c) { return v_[2 * k + slot(c)]; }
  std::span<const double> values() const { return v_; }
  std::span<double> values() { return v_; }

  bool operator==(const LatentTraits&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> v_;
};

struct LatentPositions {
  Eigen::MatrixXd Z;  // n x d respondents
  Eigen::MatrixXd W;  // p x d items

  LatentPositions() = default;
  LatentPositions(std::size_t n, std::size_t p, std::size_t d)
      : Z(Eigen::MatrixXd::Zero(n, d)), W(Eigen::MatrixXd::Zero(p, d)) {}

  std::size_t dim() const { return static_cast<std::size_t>(Z.cols()); }
  double distance(std::size_t k, std::size_t i) const { return (Z.row(k) - W.row(i)).norm(); }
  // n x p matrix of respondent-item distances.
  Eigen::MatrixXd distances() const;

  bool operator==(const LatentPositions& o) const { return Z == o.Z && W == o.W; }
};

struct ModelState {
  LatentTraits traits;
  BaselineHazards baselines;
  LatentPositions positions;
  double sigma2 = 1.0;
  double gamma = 1.0;

  ModelState() = default;
  ModelState(std::size_t n, std::size_t p, std::size_t J, std::size_t d)
      : traits(n), baselines(p, J), positions(n, p, d) {}

  std::size_t respondents() const { return traits.respondents(); }
  std::size_t items() const { return baselines.items(); }
  std::size_t intervals() const { return baselines.intervals(); }
  std::size_t dim() const { return positions.dim(); }

  // Linear predictor theta_kc + c * ||z_k - w_i||.
  double eta(std::size_t k, std::size_t i, Outcome c) const {
    return traits(k, c) + sign(c) * positions.distance(k, i);
  }

  // Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  bool operator==(const ModelState&) const = default;
};

// Per-record interval indicator delta, outcome indicator nu and exposure.
// Records of a censored cell carry no delta or nu.
class IndicatorTables {
 public:
  IndicatorTables() = default;
  IndicatorTables(const ResponseDataset& data, const TimeGrid& grid);

  std::size_t records() const { return event_interval_.size(); }
  std::size_t intervals() const { return J_; }

  int delta(std::size_t r, std::size_t j) const { return event_interval_[r] && *event_interval_[r] == j ? 1 : 0; }
  int nu(std::size_t r, Outcome c) const { return event_outcome_[r] == c ? 1 : 0; }
  double exposure(std::size_t r, std::size_t j) const { return exposure_[r * J_ + j]; }
  std::span<const double> exposure_row(std::size_t r) const { return {exposure_.data() + r * J_, J_}; }

  // Zero-based event interval and outcome; empty for censored records.
  std::optional<std::size_t> event_interval(std::size_t r) const { return event_interval_[r]; }
  std::optional<Outcome> event_outcome(std::size_t r) const { return event_outcome_[r]; }

 private:
  std::size_t J_ = 0;
  std::vector<std::optional<std::size_t>> event_interval_;
  std::vector<std::optional<Outcome>> event_outcome_;
  std::vector<double> exposure_;
};

}  // namespace lsam

#endif  // LSAM_TYPES_HPP_
