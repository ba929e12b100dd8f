// lsam command-line front end.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "lsam/data.hpp"
#include "lsam/draws_io.hpp"
#include "lsam/pipeline.hpp"
#include "lsam/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> chains, iters, thin, burn_in, dim, intervals;
  std::optional<double> censor_limit;
};

json state_json(const lsam::ModelState& s) {
  json j;
  j["sigma2"] = s.sigma2;
  j["gamma"] = s.gamma;
  j["theta"] = s.traits.values();
  j["lambda"] = s.baselines.values();
  std::vector<std::vector<double>> z, w;
  for (Eigen::Index k = 0; k < s.positions.Z.rows(); ++k) {
    z.emplace_back();
    for (Eigen::Index a = 0; a < s.positions.Z.cols(); ++a) z.back().push_back(s.positions.Z(k, a));
  }
  for (Eigen::Index i = 0; i < s.positions.W.rows(); ++i) {
    w.emplace_back();
    for (Eigen::Index a = 0; a < s.positions.W.cols(); ++a) w.back().push_back(s.positions.W(i, a));
  }
  j["z"] = z;
  j["w"] = w;
  return j;
}

lsam::RunConfig base_config(const Globals& g) {
  lsam::RunConfig cfg;
  cfg.threads = lsam::default_thread_count();
  if (!g.config.empty()) {
    std::string text;
    try {
      text = lsam::read_file(g.config);
    } catch (const std::exception&) {
      throw lsam::ConfigError("config: cannot read " + g.config);
    }
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw lsam::ConfigError(std::string("config: ") + e.what());
    }
    cfg = lsam::RunConfig::from_json(j);
    if (!j.contains("threads")) cfg.threads = lsam::default_thread_count();
  }
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.seed) cfg.chain.seed = *g.seed;
  if (g.chains) cfg.chain.chain_count = *g.chains;
  if (g.iters) {
    cfg.chain.iterations = *g.iters;
    if (!g.burn_in) cfg.chain.burn_in = *g.iters / 2;
  }
  if (g.burn_in) cfg.chain.burn_in = *g.burn_in;
  if (g.thin) cfg.chain.thin = *g.thin;
  if (g.dim) cfg.dim = *g.dim;
  if (g.intervals) {
    cfg.grid.intervals = *g.intervals;
    cfg.grid.cuts.clear();
  }
  if (g.censor_limit) cfg.censor_limit = *g.censor_limit;
  return cfg;
}

fs::path out_dir(const Globals& g) {
  if (!g.out.empty()) return g.out;
  if (!g.config.empty()) return base_config(g).out_dir;
  return "lsam_out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent space accumulator model: fitting and assessment"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_option("--seed", g.seed, "master random seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--chains", g.chains, "number of chains");
  app.add_option("--iters", g.iters, "iterations per chain");
  app.add_option("--burn-in", g.burn_in, "burn-in iterations (default: half of --iters)");
  app.add_option("--thin", g.thin, "thinning interval");
  app.add_option("--dim", g.dim, "latent dimension");
  app.add_option("--intervals", g.intervals, "baseline intervals for the quantile grid");
  app.add_option("--censor-limit", g.censor_limit, "censor response times above this many seconds");

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic data set with known parameters");
  std::size_t sim_n = 100, sim_p = 20, sim_groups = 0;
  simulate->add_option("--respondents", sim_n, "number of respondents");
  simulate->add_option("--items", sim_p, "number of items");
  simulate->add_option("--planted", sim_groups, "planted position clusters (0 = none)");

  auto* fit = app.add_subcommand("fit", "run the full pipeline on a response file");
  std::string input, covariates;
  bool keep_first = false, allow_sparse = false;
  std::optional<std::size_t> predictive_size;
  fit->add_option("--input", input, "response file (respondent,item,outcome,time[,censored])");
  fit->add_option("--covariates", covariates, "respondent covariates joined into the interaction map");
  fit->add_flag("--keep-first", keep_first, "keep the first of repeated respondent-item pairs");
  fit->add_flag("--allow-sparse", allow_sparse, "keep respondents with missing items");
  fit->add_option("--predictive-size", predictive_size, "posterior predictive draws");

  auto* diagnose = app.add_subcommand("diagnose", "acceptance rates, R-hat and log-posterior trace");
  auto* summarize = app.add_subcommand("summarize", "accumulation-rate contrasts and posterior summaries");
  auto* cocluster = app.add_subcommand("cocluster", "spectral co-clustering of the interaction map");
  auto* cif = app.add_subcommand("cif", "cumulative incidence curves");
  std::vector<std::string> cells;
  cif->add_option("--cell", cells, "respondent:item pair (repeatable; default all observed cells)");
  auto* ppc = app.add_subcommand("ppc", "posterior predictive checks");
  auto* exp = app.add_subcommand("export", "interaction-map table and SVG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) {
      lsam::SyntheticSpec spec = lsam::act_like_spec(g.seed.value_or(1));
      spec.n = sim_n;
      spec.p = sim_p;
      spec.planted_groups = sim_groups;
      if (g.dim) spec.d = *g.dim;
      if (g.censor_limit) spec.censor_limit = *g.censor_limit;
      const auto sim = lsam::generate_synthetic(spec);
      const fs::path out = g.out.empty() ? fs::path("lsam_sim") : fs::path(g.out);
      std::ostringstream os;
      lsam::write_responses(os, sim.data);
      lsam::write_file_atomic(out / "responses.csv", os.str());
      json truth = state_json(sim.truth);
      truth["cuts"] = sim.grid.cuts();
      truth["planted_respondent_groups"] = sim.planted_respondent_groups;
      truth["planted_item_groups"] = sim.planted_item_groups;
      lsam::write_file_atomic(out / "truth.json", truth.dump(2) + "\n");
      std::cout << "wrote " << sim.data.size() << " records to " << (out / "responses.csv").string() << '\n';
      return 0;
    }
    if (fit->parsed()) {
      auto cfg = base_config(g);
      if (!input.empty()) cfg.input = input;
      if (!covariates.empty()) cfg.covariates = fs::path(covariates);
      if (keep_first) cfg.keep_first = true;
      if (allow_sparse) cfg.allow_sparse = true;
      if (predictive_size) cfg.predictive_size = *predictive_size;
      const auto result = lsam::run_pipeline(cfg);
      if (result.exit_code != 0) {
        std::cerr << "error: " << result.error << '\n';
        if (!result.last_completed_stage.empty())
          std::cerr << "last completed stage: " << result.last_completed_stage << '\n';
        return result.exit_code;
      }
      std::cout << "fit complete; outputs in " << cfg.out_dir.string() << '\n';
      return 0;
    }

    const fs::path out = out_dir(g);
    auto ws = lsam::load_workspace(out);
    if (g.seed) ws.config.chain.seed = *g.seed;
    ws.config.threads = lsam::default_thread_count();
    lsam::Manifest manifest(out);
    if (diagnose->parsed()) {
      const auto report = lsam::stage_diagnose(ws, manifest);
      std::cout << "retained draws per chain: " << report["retained_per_chain"] << '\n';
      if (report["rhat_unavailable"].get<std::size_t>() > 0) {
        std::cout << "R-hat unavailable for " << report["rhat_unavailable"] << " parameters: " << report["guidance"].get<std::string>()
                  << '\n';
      } else {
        std::cout << "max R-hat: " << report["max_rhat"] << '\n';
      }
      manifest.complete_stage("diagnose");
    } else if (summarize->parsed()) {
      lsam::stage_summarize(ws, manifest);
      manifest.complete_stage("summarize");
    } else if (cocluster->parsed()) {
      const auto c = lsam::stage_cocluster(ws, manifest);
      std::cout << "selected K = " << c.K << '\n';
      manifest.complete_stage("cocluster");
    } else if (cif->parsed()) {
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      if (cells.empty()) {
        for (const auto& r : ws.data.records()) pairs.emplace_back(r.respondent, r.item);
      } else {
        for (const auto& cell : cells) {
          const auto colon = cell.find(':');
          if (colon == std::string::npos) throw lsam::ConfigError("cell: expected respondent:item, got '" + cell + "'");
          const std::string rid = cell.substr(0, colon), iid = cell.substr(colon + 1);
          std::optional<std::size_t> k, i;
          for (std::size_t m = 0; m < ws.data.n(); ++m)
            if (ws.data.respondent_label(m) == rid) k = m;
          for (std::size_t m = 0; m < ws.data.p(); ++m)
            if (ws.data.item_label(m) == iid) i = m;
          if (!k || !i) throw lsam::ConfigError("cell: unknown pair '" + cell + "'");
          pairs.emplace_back(*k, *i);
        }
      }
      lsam::stage_cif(ws, manifest, pairs);
      manifest.complete_stage("cif");
    } else if (ppc->parsed()) {
      const auto table = lsam::stage_ppc(ws, manifest);
      std::cout << "item fit rows: " << table.size() << '\n';
      manifest.complete_stage("ppc");
    } else if (exp->parsed()) {
      lsam::stage_align(ws, manifest);
      const auto c = lsam::stage_cocluster(ws, manifest);
      lsam::stage_export(ws, manifest, c);
      manifest.complete_stage("export");
    }
    return 0;
  } catch (const lsam::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const lsam::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
}
