#include "lsam/draws_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace lsam {

namespace {

const char* slot_name(Outcome c) { return c == Outcome::positive ? "pos" : "neg"; }

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::runtime_error("bad numeric field '" + s + "'");
  return v;
}

}  // namespace

std::vector<std::string> draw_columns(const DrawShape& s) {
  std::vector<std::string> cols{"log_posterior", "sigma2", "gamma"};
  for (std::size_t k = 0; k < s.n; ++k)
    for (Outcome c : kOutcomes) cols.push_back("theta[" + std::to_string(k) + "," + slot_name(c) + "]");
  for (std::size_t i = 0; i < s.p; ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < s.J; ++j)
        cols.push_back("lambda[" + std::to_string(i) + "," + slot_name(c) + "," + std::to_string(j) + "]");
  for (std::size_t k = 0; k < s.n; ++k)
    for (std::size_t a = 0; a < s.d; ++a) cols.push_back("z[" + std::to_string(k) + "," + std::to_string(a) + "]");
  for (std::size_t i = 0; i < s.p; ++i)
    for (std::size_t a = 0; a < s.d; ++a) cols.push_back("w[" + std::to_string(i) + "," + std::to_string(a) + "]");
  return cols;
}

void write_chain_draws(std::ostream& out, std::size_t chain, const ChainResult& result) {
  if (result.draws.empty()) {
    out << "chain,iteration\n";
    return;
  }
  const DrawShape shape = DrawShape::of(result.draws.front().state);
  out << "chain,iteration";
  for (const auto& c : draw_columns(shape)) out << ',' << c;
  out << '\n';
  for (const auto& d : result.draws) {
    const auto& s = d.state;
    out << chain << ',' << d.iteration << ',' << fmt(d.log_posterior) << ',' << fmt(s.sigma2) << ',' << fmt(s.gamma);
    for (double v : s.traits.values()) out << ',' << fmt(v);
    for (double v : s.baselines.values()) out << ',' << fmt(v);
    for (std::size_t k = 0; k < shape.n; ++k)
      for (std::size_t a = 0; a < shape.d; ++a) out << ',' << fmt(s.positions.Z(k, a));
    for (std::size_t i = 0; i < shape.p; ++i)
      for (std::size_t a = 0; a < shape.d; ++a) out << ',' << fmt(s.positions.W(i, a));
    out << '\n';
  }
}

ChainResult read_chain_draws(std::istream& in, const DrawShape& shape) {
  ChainResult result;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("draw file is empty");
  const std::size_t expected = 2 + draw_columns(shape).size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != expected) throw std::runtime_error("draw row has " + std::to_string(f.size()) + " fields, expected " + std::to_string(expected));
    Draw d;
    d.iteration = std::stoul(f[1]);
    std::size_t c = 2;
    d.log_posterior = parse_double(f[c++]);
    d.state = ModelState(shape.n, shape.p, shape.J, shape.d);
    d.state.sigma2 = parse_double(f[c++]);
    d.state.gamma = parse_double(f[c++]);
    for (double& v : d.state.traits.values()) v = parse_double(f[c++]);
    for (double& v : d.state.baselines.values()) v = parse_double(f[c++]);
    for (std::size_t k = 0; k < shape.n; ++k)
      for (std::size_t a = 0; a < shape.d; ++a) d.state.positions.Z(k, a) = parse_double(f[c++]);
    for (std::size_t i = 0; i < shape.p; ++i)
      for (std::size_t a = 0; a < shape.d; ++a) d.state.positions.W(i, a) = parse_double(f[c++]);
    result.draws.push_back(std::move(d));
  }
  return result;
}

void save_draws(const std::filesystem::path& dir, const PosteriorDraws& draws) {
  std::filesystem::create_directories(dir);
  if (draws.total() == 0) throw std::invalid_argument("save_draws: no draws");
  const DrawShape shape = DrawShape::of(draws.all().front()->state);
  nlohmann::json schema;
  schema["n"] = shape.n;
  schema["p"] = shape.p;
  schema["J"] = shape.J;
  schema["d"] = shape.d;
  schema["chains"] = draws.chains.size();
  schema["row_key"] = {"chain", "iteration"};
  schema["columns"] = draw_columns(shape);
  schema["layout"] = {
      {"theta", "respondent-major, outcome neg then pos"},
      {"lambda", "item-major, outcome neg then pos, interval"},
      {"z", "respondent-major, coordinate"},
      {"w", "item-major, coordinate"},
  };
  std::vector<std::string> files;
  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    std::ostringstream os;
    write_chain_draws(os, c, draws.chains[c]);
    const std::string name = "chain_" + std::to_string(c) + ".csv";
    write_file_atomic(dir / name, os.str());
    files.push_back(name);
  }
  schema["files"] = files;
  write_file_atomic(dir / "schema.json", schema.dump(2) + "\n");
}

PosteriorDraws load_draws(const std::filesystem::path& dir) {
  const auto schema = nlohmann::json::parse(read_file(dir / "schema.json"));
  const DrawShape shape{schema.at("n").get<std::size_t>(), schema.at("p").get<std::size_t>(),
                        schema.at("J").get<std::size_t>(), schema.at("d").get<std::size_t>()};
  PosteriorDraws out;
  for (const auto& name : schema.at("files")) {
    std::ifstream in(dir / name.get<std::string>());
    if (!in) throw std::runtime_error("cannot open " + (dir / name.get<std::string>()).string());
    out.chains.push_back(read_chain_draws(in, shape));
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string digest_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lsam
