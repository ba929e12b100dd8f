#include "lsam/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lsam/postprocess.hpp"

namespace lsam {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

char detect_delimiter(const std::string& header) {
  if (header.find('\t') != std::string::npos) return '\t';
  if (header.find(';') != std::string::npos && header.find(',') == std::string::npos) return ';';
  return ',';
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw DataError("line " + std::to_string(line) + ": " + msg);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool parse_flag(const std::string& token, std::size_t line) {
  const auto t = lower(token);
  if (t == "1" || t == "true" || t == "yes") return true;
  if (t.empty() || t == "0" || t == "false" || t == "no") return false;
  fail(line, "unknown censored flag '" + token + "'");
}

double parse_time(const std::string& token, std::size_t line) {
  double v = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) fail(line, "cannot parse time '" + token + "'");
  if (!(v > 0.0) || !std::isfinite(v)) fail(line, "response time must be positive, got '" + token + "'");
  return v;
}

struct RawRecord {
  std::string respondent;
  std::string item;
  std::optional<Outcome> outcome;
  double time;
};

}  // namespace

ResponseDataset parse_responses(std::istream& in, const LoadOptions& options, std::vector<std::string>* warnings) {
  std::string header_line;
  std::size_t line_no = 0;
  while (std::getline(in, header_line)) {
    ++line_no;
    if (!trim(header_line).empty()) break;
  }
  if (trim(header_line).empty()) throw DataError("empty input: missing header");
  const char delim = detect_delimiter(header_line);
  const auto header = split_fields(header_line, delim);
  std::map<std::string, std::size_t> col;
  for (std::size_t c = 0; c < header.size(); ++c) col[lower(header[c])] = c;
  for (const char* required : {"respondent", "item", "outcome", "time"})
    if (!col.count(required)) throw DataError(std::string("header is missing column '") + required + "'");
  const std::optional<std::size_t> censored_col =
      col.count("censored") ? std::optional<std::size_t>(col["censored"]) : std::nullopt;

  std::vector<RawRecord> raw;
  std::map<std::pair<std::string, std::string>, std::size_t> seen;
  std::size_t duplicates = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line, delim);
    if (f.size() < header.size()) fail(line_no, "expected " + std::to_string(header.size()) + " fields");
    RawRecord rec{f[col["respondent"]], f[col["item"]], std::nullopt, parse_time(f[col["time"]], line_no)};
    if (rec.respondent.empty() || rec.item.empty()) fail(line_no, "empty respondent or item identifier");
    const bool censored = censored_col && parse_flag(f[*censored_col], line_no);
    const std::string token = lower(f[col["outcome"]]);
    if (!censored) {
      if (token == "1" || token == "+1") rec.outcome = Outcome::positive;
      else if (token == "-1" || token == "0") rec.outcome = Outcome::negative;
      else fail(line_no, "unknown outcome token '" + f[col["outcome"]] + "'");
    } else if (!(token.empty() || token == "na" || token == "1" || token == "+1" || token == "-1" || token == "0")) {
      fail(line_no, "unknown outcome token '" + f[col["outcome"]] + "'");
    }
    if (options.censor_limit && rec.time > *options.censor_limit) {
      rec.time = *options.censor_limit;
      rec.outcome.reset();
    }
    const auto key = std::make_pair(rec.respondent, rec.item);
    if (seen.count(key)) {
      if (!options.keep_first)
        fail(line_no, "duplicate cell (respondent '" + rec.respondent + "', item '" + rec.item + "')");
      ++duplicates;
      continue;
    }
    seen[key] = raw.size();
    raw.push_back(std::move(rec));
  }
  if (duplicates > 0 && warnings)
    warnings->push_back(std::to_string(duplicates) + " repeated response(s) dropped; first exposure kept");

  // dense ids in order of first appearance
  std::vector<std::string> respondents, items;
  std::unordered_map<std::string, std::size_t> rmap, imap;
  for (const auto& r : raw) {
    if (rmap.emplace(r.respondent, respondents.size()).second) respondents.push_back(r.respondent);
    if (imap.emplace(r.item, items.size()).second) items.push_back(r.item);
  }

  std::vector<bool> keep(respondents.size(), true);
  if (!options.allow_sparse) {
    std::vector<std::size_t> answered(respondents.size(), 0);
    for (const auto& r : raw) ++answered[rmap[r.respondent]];
    std::size_t dropped = 0;
    for (std::size_t k = 0; k < respondents.size(); ++k)
      if (answered[k] != items.size()) {
        keep[k] = false;
        ++dropped;
      }
    if (dropped > 0 && warnings)
      warnings->push_back(std::to_string(dropped) +
                          " respondent(s) without a complete set of responses dropped (use sparse loading to keep)");
  }
  std::vector<std::string> kept_ids;
  std::vector<long> remap(respondents.size(), -1);
  for (std::size_t k = 0; k < respondents.size(); ++k)
    if (keep[k]) {
      remap[k] = static_cast<long>(kept_ids.size());
      kept_ids.push_back(respondents[k]);
    }

  std::vector<ResponseRecord> records;
  for (const auto& r : raw) {
    const long k = remap[rmap[r.respondent]];
    if (k < 0) continue;
    records.push_back({static_cast<std::size_t>(k), imap[r.item], r.outcome, r.time});
  }
  const std::size_t n = kept_ids.size(), p = items.size();
  return ResponseDataset(std::move(records), n, p, std::move(kept_ids), std::move(items));
}

ResponseDataset load_responses(const std::filesystem::path& path, const LoadOptions& options,
                               std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_responses(in, options, warnings);
}

void write_responses(std::ostream& out, const ResponseDataset& data) {
  out << "respondent,item,outcome,time,censored\n";
  char buf[64];
  for (const auto& r : data.records()) {
    std::snprintf(buf, sizeof buf, "%.17g", r.time);
    out << data.respondent_label(r.respondent) << ',' << data.item_label(r.item) << ',';
    if (r.censored()) out << "NA";
    else out << static_cast<int>(*r.outcome);
    out << ',' << buf << ',' << (r.censored() ? 1 : 0) << '\n';
  }
}

TimeGrid build_time_grid(const std::vector<double>& times, std::size_t J, std::optional<double> upper,
                         std::vector<std::string>* warnings) {
  if (J < 1) throw std::invalid_argument("build_time_grid: J must be at least 1");
  std::set<double> distinct(times.begin(), times.end());
  if (distinct.size() < J)
    throw std::invalid_argument("build_time_grid: need at least " + std::to_string(J) + " distinct times");
  const double top = upper ? *upper : *distinct.rbegin();
  std::vector<double> cuts{0.0};
  for (std::size_t j = 1; j < J; ++j) {
    const double q = sample_quantile(times, static_cast<double>(j) / static_cast<double>(J));
    if (q > cuts.back() && q < top) cuts.push_back(q);
  }
  cuts.push_back(top);
  if (cuts.size() - 1 < J && warnings)
    warnings->push_back("tied sample quantiles collapsed; using " + std::to_string(cuts.size() - 1) +
                        " intervals instead of " + std::to_string(J));
  return TimeGrid(std::move(cuts));
}

std::vector<double> response_times(const ResponseDataset& data) {
  std::vector<double> t;
  t.reserve(data.size());
  for (const auto& r : data.records()) t.push_back(r.time);
  return t;
}

std::vector<double> respondent_accuracy(const ResponseDataset& data) {
  std::vector<double> acc(data.n(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < data.n(); ++k) {
    double pos = 0.0, total = 0.0;
    for (std::size_t r : data.by_respondent(k)) {
      if (data[r].censored()) continue;
      total += 1.0;
      if (*data[r].outcome == Outcome::positive) pos += 1.0;
    }
    if (total > 0.0) acc[k] = pos / total;
  }
  return acc;
}

}  // namespace lsam
