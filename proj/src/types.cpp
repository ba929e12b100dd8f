#include "lsam/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace lsam {

ResponseDataset::ResponseDataset(std::vector<ResponseRecord> records, std::size_t n, std::size_t p,
                                 std::vector<std::string> respondent_ids,
                                 std::vector<std::string> item_ids)
    : records_(std::move(records)),
      n_(n),
      p_(p),
      cell_(n * p, -1),
      rows_(n),
      cols_(p),
      respondent_ids_(std::move(respondent_ids)),
      item_ids_(std::move(item_ids)) {
  if (!respondent_ids_.empty() && respondent_ids_.size() != n)
    throw std::invalid_argument("respondent id count does not match n");
  if (!item_ids_.empty() && item_ids_.size() != p)
    throw std::invalid_argument("item id count does not match p");
  for (std::size_t r = 0; r < records_.size(); ++r) {
    const auto& rec = records_[r];
    if (rec.respondent >= n || rec.item >= p) {
      std::ostringstream os;
      os << "record " << r << ": index (" << rec.respondent << ", " << rec.item << ") out of range";
      throw std::invalid_argument(os.str());
    }
    if (!(rec.time > 0.0) || !std::isfinite(rec.time)) {
      std::ostringstream os;
      os << "record " << r << ": response time must be positive and finite";
      throw std::invalid_argument(os.str());
    }
    auto& slot_ref = cell_[rec.respondent * p + rec.item];
    if (slot_ref >= 0) {
      std::ostringstream os;
      os << "duplicate cell (" << respondent_label(rec.respondent) << ", " << item_label(rec.item) << ")";
      throw std::invalid_argument(os.str());
    }
    slot_ref = static_cast<long>(r);
    rows_[rec.respondent].push_back(r);
    cols_[rec.item].push_back(r);
  }
}

std::optional<std::size_t> ResponseDataset::cell(std::size_t k, std::size_t i) const {
  const long r = cell_[k * p_ + i];
  if (r < 0) return std::nullopt;
  return static_cast<std::size_t>(r);
}

std::string ResponseDataset::respondent_label(std::size_t k) const {
  return k < respondent_ids_.size() ? respondent_ids_[k] : std::to_string(k);
}

std::string ResponseDataset::item_label(std::size_t i) const {
  return i < item_ids_.size() ? item_ids_[i] : std::to_string(i);
}

bool ResponseDataset::operator==(const ResponseDataset& o) const {
  if (n_ != o.n_ || p_ != o.p_ || records_.size() != o.records_.size()) return false;
  if (respondent_ids_ != o.respondent_ids_ || item_ids_ != o.item_ids_) return false;
  for (std::size_t r = 0; r < records_.size(); ++r) {
    const auto& a = records_[r];
    const auto& b = o.records_[r];
    if (a.respondent != b.respondent || a.item != b.item || a.outcome != b.outcome || a.time != b.time)
      return false;
  }
  return true;
}

TimeGrid::TimeGrid(std::vector<double> cuts) : cuts_(std::move(cuts)) {
  if (cuts_.size() < 2) throw std::invalid_argument("time grid needs at least one interval");
  if (cuts_.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
  for (std::size_t j = 1; j < cuts_.size(); ++j) {
    if (!(cuts_[j] > cuts_[j - 1]) || !std::isfinite(cuts_[j]))
      throw std::invalid_argument("time grid cuts must be finite and strictly increasing");
  }
}

std::size_t TimeGrid::interval_of(double t) const {
  if (!(t >= 0.0) || t > upper()) {
    std::ostringstream os;
    os << "time " << t << " outside [0, " << upper() << "]";
    throw std::domain_error(os.str());
  }
  auto it = std::upper_bound(cuts_.begin(), cuts_.end(), t);
  if (it == cuts_.end()) return intervals() - 1;  // t == s_J
  return static_cast<std::size_t>(it - cuts_.begin()) - 1;
}

double TimeGrid::exposure(std::size_t j, double t) const {
  return std::clamp(t - cuts_[j], 0.0, cuts_[j + 1] - cuts_[j]);
}

Eigen::MatrixXd LatentPositions::distances() const {
  Eigen::MatrixXd D(Z.rows(), W.rows());
  for (Eigen::Index k = 0; k < Z.rows(); ++k)
    for (Eigen::Index i = 0; i < W.rows(); ++i) D(k, i) = (Z.row(k) - W.row(i)).norm();
  return D;
}

BaselineHazards::BaselineHazards(std::size_t p, std::size_t J, double fill)
    : p_(p), J_(J), v_(p * 2 * J, fill) {}

void ModelState::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("sigma2 must be positive");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be positive");
  for (double v : baselines.values())
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("baseline hazards must be positive and finite");
  for (double v : traits.values())
    if (!std::isfinite(v)) throw std::invalid_argument("latent traits must be finite");
  if (!positions.Z.allFinite() || !positions.W.allFinite())
    throw std::invalid_argument("latent positions must be finite");
  if (positions.dim() < 1) throw std::invalid_argument("embedding dimension must be >= 1");
  if (static_cast<std::size_t>(positions.Z.rows()) != traits.respondents() ||
      static_cast<std::size_t>(positions.W.rows()) != baselines.items())
    throw std::invalid_argument("position matrices do not match respondent/item counts");
}

IndicatorTables::IndicatorTables(const ResponseDataset& data, const TimeGrid& grid)
    : J_(grid.intervals()),
      event_interval_(data.size()),
      event_outcome_(data.size()),
      exposure_(data.size() * grid.intervals(), 0.0) {
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto& rec = data[r];
    if (rec.time > grid.upper()) {
      std::ostringstream os;
      os << "record " << r << ": time " << rec.time << " exceeds grid upper limit " << grid.upper();
      throw std::domain_error(os.str());
    }
    for (std::size_t j = 0; j < J_; ++j) exposure_[r * J_ + j] = grid.exposure(j, rec.time);
    if (!rec.censored()) {
      event_interval_[r] = grid.interval_of(rec.time);
      event_outcome_[r] = rec.outcome;
    }
  }
}

}  // namespace lsam
