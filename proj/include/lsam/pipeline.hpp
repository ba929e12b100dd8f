#ifndef LSAM_PIPELINE_HPP_
#define LSAM_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsam/data.hpp"
#include "lsam/inference.hpp"
#include "lsam/postprocess.hpp"
#include "lsam/predictive.hpp"

namespace lsam {

struct GridPolicy {
  std::vector<double> cuts;  // explicit cut points, used when non-empty
  std::size_t intervals = 5;  // quantile grid otherwise
};

struct RunConfig {
  std::filesystem::path input;
  std::filesystem::path out_dir = "lsam_out";
  std::optional<std::filesystem::path> covariates;
  GridPolicy grid;
  std::size_t dim = 2;
  // lambda_shape_tilde is derived from the grid when left empty.
  PriorConfig prior;
  ChainConfig chain;
  std::optional<double> censor_limit;
  bool keep_first = false;
  bool allow_sparse = false;
  std::size_t predictive_size = 1000;
  std::vector<std::size_t> k_range{1, 2, 3, 4, 5, 6};
  std::size_t rhat_distances = 20;
  std::size_t cif_points = 31;
  std::size_t threads = 1;

  // Throws ConfigError with the offending field name.
  void validate() const;
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Worker threads from LSAM_THREADS, falling back to the hardware count.
std::size_t default_thread_count();

struct StageRecord {
  std::string name;
  std::vector<std::string> files;
};

// Records completed stages and the digest of every artifact written; rewritten
// atomically after each stage. An existing manifest.json in `out_dir` is
// extended rather than replaced.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path out_dir);
  void add_file(const std::string& relative, const std::string& content);
  void complete_stage(const std::string& stage);
  void fail(const std::string& stage, const std::string& message);
  nlohmann::json json() const { return doc_; }

 private:
  void flush() const;
  std::filesystem::path dir_;
  nlohmann::json doc_ = {{"status", "running"}, {"stages", nlohmann::json::array()}, {"files", nlohmann::json::object()}};
};

// Everything the analysis stages share; later subcommands rebuild it from an
// output directory.
struct Workspace {
  RunConfig config;
  ResponseDataset data;
  TimeGrid grid;
  PosteriorDraws draws;
  std::optional<AlignedDraws> aligned;
  std::vector<std::string> warnings;
};

Workspace load_workspace(const std::filesystem::path& out_dir, bool with_draws = true);

// Stage functions; each writes its artifacts through the manifest.
void stage_load(Workspace& ws, Manifest& manifest);
void stage_grid(Workspace& ws, Manifest& manifest);
void stage_fit(Workspace& ws, Manifest& manifest);
nlohmann::json stage_diagnose(Workspace& ws, Manifest& manifest);
void stage_align(Workspace& ws, Manifest& manifest);
void stage_summarize(Workspace& ws, Manifest& manifest);
Coclustering stage_cocluster(Workspace& ws, Manifest& manifest);
std::vector<ItemFit> stage_ppc(Workspace& ws, Manifest& manifest);
void stage_cif(Workspace& ws, Manifest& manifest, const std::vector<std::pair<std::size_t, std::size_t>>& cells);
void stage_export(Workspace& ws, Manifest& manifest, const Coclustering& clusters);

struct PipelineResult {
  int exit_code = 0;  // 0 success, 1 validation error, 2 runtime failure
  std::string last_completed_stage;
  std::string error;
};

// load -> grid -> fit -> diagnose -> align -> summarize -> cocluster -> ppc ->
// cif -> export.
PipelineResult run_pipeline(const RunConfig& config);

// Static SVG scatter of the interaction map; respondents as dots, items as labels.
std::string interaction_map_svg(const LatentPositions& positions, const std::vector<int>& respondent_labels,
                                const std::vector<int>& item_labels, const std::vector<std::string>& item_names);

}  // namespace lsam

#endif  // LSAM_PIPELINE_HPP_
