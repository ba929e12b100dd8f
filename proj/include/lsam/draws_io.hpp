#ifndef LSAM_DRAWS_IO_HPP_
#define LSAM_DRAWS_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lsam/inference.hpp"

namespace lsam {

struct DrawShape {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t J = 0;
  std::size_t d = 0;

  static DrawShape of(const ModelState& s) { return {s.respondents(), s.items(), s.intervals(), s.dim()}; }
};

// Column order of the flattened draw rows (after `chain,iteration`).
std::vector<std::string> draw_columns(const DrawShape& shape);

// One row per retained (chain, iteration), values printed round-trip exact.
void write_chain_draws(std::ostream& out, std::size_t chain, const ChainResult& result);
ChainResult read_chain_draws(std::istream& in, const DrawShape& shape);

// draws/chain_<c>.csv plus draws/schema.json
void save_draws(const std::filesystem::path& dir, const PosteriorDraws& draws);
PosteriorDraws load_draws(const std::filesystem::path& dir);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// 64-bit FNV-1a digest rendered as 16 hex digits.
std::string digest_hex(const std::string& bytes);

}  // namespace lsam

#endif  // LSAM_DRAWS_IO_HPP_
