#ifndef LSAM_DIAGNOSTICS_HPP_
#define LSAM_DIAGNOSTICS_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lsam/inference.hpp"

namespace lsam {

struct RhatResult {
  std::optional<double> rhat;  // empty when the diagnostic is undefined
  std::string note;
  bool split = false;  // a single chain was split into halves
};

// Potential scale reduction factor from between/within chain variances.
// With one chain the sequence is split in half. Requires at least 10 retained
// draws per (possibly split) chain and a positive within-chain variance.
RhatResult gelman_rubin(const std::vector<std::vector<double>>& chains);

RhatResult gelman_rubin(const PosteriorDraws& draws, const std::function<double(const ModelState&)>& extractor);

}  // namespace lsam

#endif  // LSAM_DIAGNOSTICS_HPP_
