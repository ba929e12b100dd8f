#ifndef LSAM_DATA_HPP_
#define LSAM_DATA_HPP_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lsam/types.hpp"

namespace lsam {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadOptions {
  // Times above the limit are stored as censored at the limit.
  std::optional<double> censor_limit;
  // Keep the first occurrence of a repeated (respondent, item) pair instead of
  // rejecting the file.
  bool keep_first = false;
  // Keep respondents that did not answer every item. By default only
  // respondents with a complete set of responses are retained.
  bool allow_sparse = false;
};

// Delimited text with header `respondent,item,outcome,time[,censored]`.
// Outcome tokens: 1 / +1 -> positive, -1 / 0 -> negative; NA or empty only on
// censored rows. Identifiers are arbitrary strings mapped to dense indices in
// order of first appearance.
ResponseDataset parse_responses(std::istream& in, const LoadOptions& options = {},
                                std::vector<std::string>* warnings = nullptr);
ResponseDataset load_responses(const std::filesystem::path& path, const LoadOptions& options = {},
                               std::vector<std::string>* warnings = nullptr);

void write_responses(std::ostream& out, const ResponseDataset& data);

// Interior cuts at the j/J type-7 sample quantiles of `times`; s_0 = 0 and
// s_J = `upper` when given, otherwise max(times). Tied quantiles are
// collapsed, reducing J, with a warning.
TimeGrid build_time_grid(const std::vector<double>& times, std::size_t J, std::optional<double> upper = std::nullopt,
                         std::vector<std::string>* warnings = nullptr);

std::vector<double> response_times(const ResponseDataset& data);

// Share of observed outcomes that are positive, per respondent; NaN when a
// respondent has no uncensored record.
std::vector<double> respondent_accuracy(const ResponseDataset& data);

}  // namespace lsam

#endif  // LSAM_DATA_HPP_
