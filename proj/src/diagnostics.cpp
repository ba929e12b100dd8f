#include "lsam/diagnostics.hpp"

#include <cmath>

namespace lsam {

RhatResult gelman_rubin(const std::vector<std::vector<double>>& input) {
  RhatResult result;
  std::vector<std::vector<double>> chains = input;
  if (chains.size() == 1) {
    const auto& only = input.front();
    const std::size_t half = only.size() / 2;
    chains = {std::vector<double>(only.begin(), only.begin() + half),
              std::vector<double>(only.end() - half, only.end())};
    result.split = true;
  }
  if (chains.empty()) {
    result.note = "no chains";
    return result;
  }
  std::size_t len = chains.front().size();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len < 10) {
    result.note = "fewer than 10 retained draws per chain; run more iterations or reduce thinning";
    return result;
  }

  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(len);
  std::vector<double> means;
  double within = 0.0;
  for (const auto& c : chains) {
    double mean = 0.0;
    for (std::size_t t = 0; t < len; ++t) mean += c[t];
    mean /= n;
    double var = 0.0;
    for (std::size_t t = 0; t < len; ++t) var += (c[t] - mean) * (c[t] - mean);
    within += var / (n - 1.0);
    means.push_back(mean);
  }
  within /= m;
  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= m;
  double between = 0.0;
  for (double v : means) between += (v - grand) * (v - grand);
  between *= n / (m - 1.0);

  if (!(within > 0.0)) {
    result.note = "zero within-chain variance; diagnostic undefined";
    return result;
  }
  const double pooled = (n - 1.0) / n * within + between / n;
  result.rhat = std::sqrt(pooled / within);
  return result;
}

RhatResult gelman_rubin(const PosteriorDraws& draws, const std::function<double(const ModelState&)>& extractor) {
  std::vector<std::vector<double>> chains;
  for (const auto& chain : draws.chains) {
    std::vector<double> values;
    values.reserve(chain.draws.size());
    for (const auto& d : chain.draws) values.push_back(extractor(d.state));
    chains.push_back(std::move(values));
  }
  return gelman_rubin(chains);
}

}  // namespace lsam
