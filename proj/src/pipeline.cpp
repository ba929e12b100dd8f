#include "lsam/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "lsam/diagnostics.hpp"
#include "lsam/draws_io.hpp"
#include "lsam/model.hpp"

namespace lsam {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

json summary_json(const PosteriorSummary& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"lower", s.lower}, {"upper", s.upper}};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::pair<double, double>> xy;
  for (std::size_t m = 0; m < x.size(); ++m)
    if (std::isfinite(x[m]) && std::isfinite(y[m])) xy.emplace_back(x[m], y[m]);
  if (xy.size() < 2) return std::nan("");
  double mx = 0, my = 0;
  for (auto [a, b] : xy) mx += a, my += b;
  mx /= static_cast<double>(xy.size());
  my /= static_cast<double>(xy.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (auto [a, b] : xy) {
    sxy += (a - mx) * (b - my);
    sxx += (a - mx) * (a - mx);
    syy += (b - my) * (b - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

void RunConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); };
  if (input.empty()) bad("input", "path to a response file is required");
  if (!fs::exists(input)) bad("input", "file not found: " + input.string());
  if (out_dir.empty()) bad("out_dir", "output directory is required");
  if (covariates && !fs::exists(*covariates)) bad("covariates", "file not found: " + covariates->string());
  if (grid.cuts.empty()) {
    if (grid.intervals < 1) bad("grid.intervals", "must be at least 1");
  } else {
    try {
      TimeGrid check(grid.cuts);
    } catch (const std::exception& e) {
      bad("grid.cuts", e.what());
    }
  }
  if (dim < 1) bad("dim", "must be at least 1");
  if (censor_limit && !(*censor_limit > 0.0)) bad("censor_limit", "must be positive");
  if (predictive_size < 1) bad("predictive_size", "must be at least 1");
  if (k_range.size() < 3) bad("k_range", "needs at least 3 candidate values");
  for (auto k : k_range)
    if (k < 1) bad("k_range", "values must be at least 1");
  if (threads < 1) bad("threads", "must be at least 1");
  try {
    chain.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (chain.retained_per_chain() == 0) bad("chain.thin", "no draws retained after burn-in; lower thin or raise iterations");
  if (!prior.lambda_shape_tilde.empty()) {
    const std::size_t J = grid.cuts.empty() ? grid.intervals : grid.cuts.size() - 1;
    try {
      prior.validate(J);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  } else {
    PriorConfig probe = prior;
    probe.lambda_shape_tilde = {1.0};
    try {
      probe.validate(1);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  if (j.contains("input")) c.input = j["input"].get<std::string>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("covariates") && !j["covariates"].is_null()) c.covariates = fs::path(j["covariates"].get<std::string>());
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (g.contains("cuts")) c.grid.cuts = g["cuts"].get<std::vector<double>>();
    if (g.contains("intervals")) c.grid.intervals = g["intervals"].get<std::size_t>();
  }
  if (j.contains("dim")) c.dim = j["dim"].get<std::size_t>();
  if (j.contains("prior")) {
    const auto& p = j["prior"];
    if (p.contains("lambda_shape_tilde")) c.prior.lambda_shape_tilde = p["lambda_shape_tilde"].get<std::vector<double>>();
    if (p.contains("lambda_rate")) c.prior.lambda_rate = p["lambda_rate"].get<double>();
    if (p.contains("a_sigma")) c.prior.a_sigma = p["a_sigma"].get<double>();
    if (p.contains("b_sigma")) c.prior.b_sigma = p["b_sigma"].get<double>();
    if (p.contains("mu_gamma")) c.prior.mu_gamma = p["mu_gamma"].get<double>();
    if (p.contains("tau_gamma")) c.prior.tau_gamma = p["tau_gamma"].get<double>();
  }
  if (j.contains("chain")) {
    const auto& ch = j["chain"];
    if (ch.contains("iterations")) c.chain.iterations = ch["iterations"].get<std::size_t>();
    if (ch.contains("burn_in")) c.chain.burn_in = ch["burn_in"].get<std::size_t>();
    else c.chain.burn_in = c.chain.iterations / 2;
    if (ch.contains("thin")) c.chain.thin = ch["thin"].get<std::size_t>();
    if (ch.contains("chains")) c.chain.chain_count = ch["chains"].get<std::size_t>();
    if (ch.contains("seed")) c.chain.seed = ch["seed"].get<std::uint64_t>();
    if (ch.contains("adaptation_window")) c.chain.adaptation_window = ch["adaptation_window"].get<std::size_t>();
    if (ch.contains("target_acceptance")) c.chain.target_acceptance = ch["target_acceptance"].get<double>();
    if (ch.contains("adapt")) c.chain.adapt = ch["adapt"].get<bool>();
    if (ch.contains("audit_interval")) c.chain.audit_interval = ch["audit_interval"].get<std::size_t>();
    if (ch.contains("steps")) {
      const auto& s = ch["steps"];
      if (s.contains("theta")) c.chain.steps.theta = s["theta"].get<double>();
      if (s.contains("z")) c.chain.steps.z = s["z"].get<double>();
      if (s.contains("w")) c.chain.steps.w = s["w"].get<double>();
      if (s.contains("log_gamma")) c.chain.steps.log_gamma = s["log_gamma"].get<double>();
    }
  }
  if (j.contains("censor_limit") && !j["censor_limit"].is_null()) c.censor_limit = j["censor_limit"].get<double>();
  if (j.contains("keep_first")) c.keep_first = j["keep_first"].get<bool>();
  if (j.contains("allow_sparse")) c.allow_sparse = j["allow_sparse"].get<bool>();
  if (j.contains("predictive_size")) c.predictive_size = j["predictive_size"].get<std::size_t>();
  if (j.contains("k_range")) c.k_range = j["k_range"].get<std::vector<std::size_t>>();
  if (j.contains("rhat_distances")) c.rhat_distances = j["rhat_distances"].get<std::size_t>();
  if (j.contains("cif_points")) c.cif_points = j["cif_points"].get<std::size_t>();
  if (j.contains("threads")) c.threads = j["threads"].get<std::size_t>();
  return c;
}

json RunConfig::to_json() const {
  json j;
  j["input"] = input.string();
  j["out_dir"] = out_dir.string();
  j["covariates"] = covariates ? json(covariates->string()) : json(nullptr);
  j["grid"] = {{"cuts", grid.cuts}, {"intervals", grid.intervals}};
  j["dim"] = dim;
  j["prior"] = {{"lambda_shape_tilde", prior.lambda_shape_tilde}, {"lambda_rate", prior.lambda_rate},
                {"a_sigma", prior.a_sigma},  {"b_sigma", prior.b_sigma},
                {"mu_gamma", prior.mu_gamma}, {"tau_gamma", prior.tau_gamma}};
  j["chain"] = {{"iterations", chain.iterations},
                {"burn_in", chain.burn_in},
                {"thin", chain.thin},
                {"chains", chain.chain_count},
                {"seed", chain.seed},
                {"adaptation_window", chain.adaptation_window},
                {"target_acceptance", chain.target_acceptance},
                {"adapt", chain.adapt},
                {"audit_interval", chain.audit_interval},
                {"steps",
                 {{"theta", chain.steps.theta}, {"z", chain.steps.z}, {"w", chain.steps.w}, {"log_gamma", chain.steps.log_gamma}}}};
  j["censor_limit"] = censor_limit ? json(*censor_limit) : json(nullptr);
  j["keep_first"] = keep_first;
  j["allow_sparse"] = allow_sparse;
  j["predictive_size"] = predictive_size;
  j["k_range"] = k_range;
  j["rhat_distances"] = rhat_distances;
  j["cif_points"] = cif_points;
  return j;
}

std::size_t default_thread_count() {
  if (const char* env = std::getenv("LSAM_THREADS")) {
    std::size_t v = 0;
    const std::string s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size() && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// manifest

Manifest::Manifest(fs::path out_dir) : dir_(std::move(out_dir)) {
  const auto path = dir_ / "manifest.json";
  if (fs::exists(path)) {
    doc_ = json::parse(read_file(path));
    doc_["status"] = "running";
    doc_.erase("failed_stage");
    doc_.erase("error");
  }
}

void Manifest::add_file(const std::string& relative, const std::string& content) {
  write_file_atomic(dir_ / relative, content);
  doc_["files"][relative] = digest_hex(content);
  flush();
}

void Manifest::complete_stage(const std::string& stage) {
  doc_["stages"].push_back(stage);
  doc_["last_completed_stage"] = stage;
  doc_["status"] = "ok";
  flush();
}

void Manifest::fail(const std::string& stage, const std::string& message) {
  doc_["status"] = "failed";
  doc_["failed_stage"] = stage;
  doc_["error"] = message;
  flush();
}

void Manifest::flush() const { write_file_atomic(dir_ / "manifest.json", doc_.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// workspace

Workspace load_workspace(const fs::path& out_dir, bool with_draws) {
  Workspace ws;
  const auto cfg_path = out_dir / "run_config.json";
  if (!fs::exists(cfg_path)) throw ConfigError("out: " + out_dir.string() + " holds no fitted run (run_config.json missing)");
  ws.config = RunConfig::from_json(json::parse(read_file(cfg_path)));
  ws.config.out_dir = out_dir;
  LoadOptions opts;
  opts.allow_sparse = true;
  std::ifstream in(out_dir / "data" / "responses.csv");
  if (!in) throw ConfigError("out: data/responses.csv missing");
  ws.data = parse_responses(in, opts);
  const auto grid_json = json::parse(read_file(out_dir / "grid.json"));
  ws.grid = TimeGrid(grid_json.at("cuts").get<std::vector<double>>());
  if (with_draws) {
    ws.draws = load_draws(out_dir / "draws");
    const auto chains_path = out_dir / "draws" / "chains.json";
    if (fs::exists(chains_path)) {
      const auto info = json::parse(read_file(chains_path));
      for (std::size_t c = 0; c < ws.draws.chains.size() && c < info.size(); ++c) {
        auto& ch = ws.draws.chains[c];
        const auto& a = info[c].at("acceptance");
        ch.acceptance = {a.at("theta"), a.at("z"), a.at("w"), a.at("gamma")};
        const auto& s = info[c].at("final_steps");
        ch.final_steps = {s.at("theta"), s.at("z"), s.at("w"), s.at("log_gamma")};
        ch.log_posterior_trace = info[c].at("log_posterior_trace").get<std::vector<double>>();
      }
    }
  }
  return ws;
}

// ---------------------------------------------------------------------------
// stages

void stage_load(Workspace& ws, Manifest& manifest) {
  LoadOptions opts;
  opts.censor_limit = ws.config.censor_limit;
  opts.keep_first = ws.config.keep_first;
  opts.allow_sparse = ws.config.allow_sparse;
  ws.data = load_responses(ws.config.input, opts, &ws.warnings);
  if (ws.data.empty()) throw DataError("no usable records in " + ws.config.input.string());
  std::ostringstream os;
  write_responses(os, ws.data);
  manifest.add_file("data/responses.csv", os.str());
}

void stage_grid(Workspace& ws, Manifest& manifest) {
  const auto times = response_times(ws.data);
  if (!ws.config.grid.cuts.empty()) {
    ws.grid = TimeGrid(ws.config.grid.cuts);
  } else {
    std::optional<double> upper = ws.config.censor_limit;
    const double max_time = *std::max_element(times.begin(), times.end());
    if (upper && *upper < max_time) upper = max_time;
    ws.grid = build_time_grid(times, ws.config.grid.intervals, upper, &ws.warnings);
  }
  for (double t : times)
    if (t > ws.grid.upper())
      throw DataError("response time " + num(t) + " exceeds the grid upper limit " + num(ws.grid.upper()));
  if (ws.config.prior.lambda_shape_tilde.empty())
    ws.config.prior.lambda_shape_tilde = PriorConfig::defaults_for(ws.grid).lambda_shape_tilde;
  ws.config.prior.validate(ws.grid.intervals());
  manifest.add_file("grid.json", json{{"cuts", ws.grid.cuts()}, {"intervals", ws.grid.intervals()}}.dump(2) + "\n");
  manifest.add_file("run_config.json", ws.config.to_json().dump(2) + "\n");
}

void stage_fit(Workspace& ws, Manifest& manifest) {
  ws.draws = run_chains(ws.data, ws.grid, ws.config.dim, ws.config.prior, ws.config.chain, ws.config.threads);
  const DrawShape shape{ws.data.n(), ws.data.p(), ws.grid.intervals(), ws.config.dim};
  json schema;
  schema["n"] = shape.n;
  schema["p"] = shape.p;
  schema["J"] = shape.J;
  schema["d"] = shape.d;
  schema["chains"] = ws.draws.chains.size();
  schema["row_key"] = {"chain", "iteration"};
  schema["columns"] = draw_columns(shape);
  std::vector<std::string> files;
  json chains = json::array();
  for (std::size_t c = 0; c < ws.draws.chains.size(); ++c) {
    const auto& ch = ws.draws.chains[c];
    std::ostringstream os;
    write_chain_draws(os, c, ch);
    const std::string name = "chain_" + std::to_string(c) + ".csv";
    manifest.add_file("draws/" + name, os.str());
    files.push_back(name);
    chains.push_back({{"acceptance", {{"theta", ch.acceptance.theta}, {"z", ch.acceptance.z}, {"w", ch.acceptance.w}, {"gamma", ch.acceptance.gamma}}},
                      {"final_steps", {{"theta", ch.final_steps.theta}, {"z", ch.final_steps.z}, {"w", ch.final_steps.w}, {"log_gamma", ch.final_steps.log_gamma}}},
                      {"log_posterior_trace", ch.log_posterior_trace}});
  }
  schema["files"] = files;
  manifest.add_file("draws/schema.json", schema.dump(2) + "\n");
  manifest.add_file("draws/chains.json", chains.dump() + "\n");
}

json stage_diagnose(Workspace& ws, Manifest& manifest) {
  json report;
  json acceptance = json::array();
  for (const auto& ch : ws.draws.chains)
    acceptance.push_back({{"theta", ch.acceptance.theta}, {"z", ch.acceptance.z}, {"w", ch.acceptance.w}, {"gamma", ch.acceptance.gamma}});
  report["acceptance"] = acceptance;
  report["retained_per_chain"] = ws.draws.chains.empty() ? 0 : ws.draws.chains.front().draws.size();

  json table = json::array();
  double worst = 0.0;
  std::size_t unavailable = 0;
  auto add = [&](const std::string& name, const std::function<double(const ModelState&)>& f) {
    const auto r = gelman_rubin(ws.draws, f);
    json row{{"parameter", name}, {"rhat", r.rhat ? json(*r.rhat) : json(nullptr)}};
    if (!r.note.empty()) row["note"] = r.note;
    if (r.split) row["split_chain"] = true;
    if (r.rhat) worst = std::max(worst, *r.rhat);
    else ++unavailable;
    table.push_back(row);
  };
  add("sigma2", [](const ModelState& s) { return s.sigma2; });
  add("gamma", [](const ModelState& s) { return s.gamma; });
  const std::size_t n = ws.data.n(), p = ws.data.p(), J = ws.grid.intervals();
  for (std::size_t i = 0; i < p; ++i)
    for (Outcome c : kOutcomes)
      for (std::size_t j = 0; j < J; ++j)
        add("lambda[" + ws.data.item_label(i) + "," + std::to_string(static_cast<int>(c)) + "," + std::to_string(j + 1) + "]",
            [i, c, j](const ModelState& s) { return s.baselines(i, c, j); });
  Rng rng(derive_seed(ws.config.chain.seed, 0xD157));
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t want = std::min(ws.config.rhat_distances, n * p);
  while (pairs.size() < want)
    pairs.emplace(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng), std::uniform_int_distribution<std::size_t>(0, p - 1)(rng));
  for (auto [k, i] : pairs)
    add("distance[" + ws.data.respondent_label(k) + "," + ws.data.item_label(i) + "]",
        [k, i](const ModelState& s) { return s.positions.distance(k, i); });
  report["rhat"] = table;
  report["max_rhat"] = worst;
  report["rhat_unavailable"] = unavailable;
  if (unavailable > 0)
    report["guidance"] = "R-hat needs at least 10 retained draws per chain; increase --iters or lower --thin";

  std::ostringstream trace;
  trace << "iteration";
  for (std::size_t c = 0; c < ws.draws.chains.size(); ++c) trace << ",chain_" << c;
  trace << '\n';
  std::size_t len = 0;
  for (const auto& ch : ws.draws.chains) len = std::max(len, ch.log_posterior_trace.size());
  for (std::size_t t = 0; t < len; ++t) {
    trace << t;
    for (const auto& ch : ws.draws.chains)
      trace << ',' << (t < ch.log_posterior_trace.size() ? num(ch.log_posterior_trace[t]) : "NA");
    trace << '\n';
  }
  manifest.add_file("diagnostics/log_posterior_trace.csv", trace.str());
  manifest.add_file("diagnostics/diagnostics.json", report.dump(2) + "\n");
  return report;
}

void stage_align(Workspace& ws, Manifest& manifest) {
  ws.aligned = procrustes_align(ws.draws);
  for (const auto& w : ws.aligned->warnings) ws.warnings.push_back(w);
  const auto mean = ws.aligned->posterior_mean();
  std::ostringstream os;
  os << "kind,id";
  for (std::size_t a = 0; a < mean.dim(); ++a) os << ",x" << a + 1;
  os << '\n';
  for (Eigen::Index k = 0; k < mean.Z.rows(); ++k) {
    os << "respondent," << ws.data.respondent_label(static_cast<std::size_t>(k));
    for (Eigen::Index a = 0; a < mean.Z.cols(); ++a) os << ',' << num(mean.Z(k, a));
    os << '\n';
  }
  for (Eigen::Index i = 0; i < mean.W.rows(); ++i) {
    os << "item," << ws.data.item_label(static_cast<std::size_t>(i));
    for (Eigen::Index a = 0; a < mean.W.cols(); ++a) os << ',' << num(mean.W(i, a));
    os << '\n';
  }
  manifest.add_file("aligned_positions.csv", os.str());
}

void stage_summarize(Workspace& ws, Manifest& manifest) {
  std::ostringstream dl;
  dl << "item,interval,start,end,mean,median,lower,upper\n";
  for (std::size_t i = 0; i < ws.data.p(); ++i)
    for (std::size_t j = 0; j < ws.grid.intervals(); ++j) {
      const auto s = summarize(delta_lambda(ws.draws, i, j));
      dl << ws.data.item_label(i) << ',' << j + 1 << ',' << num(ws.grid.cut(j)) << ',' << num(ws.grid.cut(j + 1)) << ','
         << num(s.mean) << ',' << num(s.median) << ',' << num(s.lower) << ',' << num(s.upper) << '\n';
    }
  manifest.add_file("delta_lambda.csv", dl.str());

  const auto accuracy = respondent_accuracy(ws.data);
  std::vector<double> dt_mean;
  std::ostringstream dt;
  dt << "respondent,mean,median,lower,upper,accuracy\n";
  for (std::size_t k = 0; k < ws.data.n(); ++k) {
    const auto s = summarize(delta_theta(ws.draws, k));
    dt_mean.push_back(s.mean);
    dt << ws.data.respondent_label(k) << ',' << num(s.mean) << ',' << num(s.median) << ',' << num(s.lower) << ','
       << num(s.upper) << ',' << num(accuracy[k]) << '\n';
  }
  manifest.add_file("delta_theta.csv", dt.str());

  std::vector<double> sig, gam;
  for (const Draw* d : ws.draws.all()) {
    sig.push_back(d->state.sigma2);
    gam.push_back(d->state.gamma);
  }
  json summary;
  summary["draws"] = ws.draws.total();
  summary["sigma2"] = summary_json(summarize(sig));
  summary["gamma"] = summary_json(summarize(gam));
  const double corr = pearson(dt_mean, accuracy);
  summary["delta_theta_accuracy_correlation"] = std::isfinite(corr) ? json(corr) : json(nullptr);
  summary["warnings"] = ws.warnings;
  manifest.add_file("summary.json", summary.dump(2) + "\n");
}

Coclustering stage_cocluster(Workspace& ws, Manifest& manifest) {
  if (!ws.aligned) ws.aligned = procrustes_align(ws.draws);
  const auto mean = ws.aligned->posterior_mean();
  const double bandwidth = median_distance_bandwidth(mean);
  const Eigen::MatrixXd affinity = rbf_affinity(mean, bandwidth);
  const std::size_t nodes = ws.data.n() + ws.data.p();
  std::vector<std::size_t> ks;
  for (auto k : ws.config.k_range)
    if (k <= nodes) ks.push_back(k);
  Coclustering result;
  ElbowSelection elbow;
  if (ks.size() >= 3) {
    elbow = elbow_select_k(affinity, ks, ws.config.chain.seed);
  } else {
    elbow.K = 1;
    elbow.warnings.push_back("too few feasible K values for elbow selection");
  }
  if (elbow.K >= 2) {
    result = spectral_cocluster(affinity, elbow.K, ws.config.chain.seed);
  } else {
    result.K = 1;
    result.respondent_labels.assign(ws.data.n(), 0);
    result.item_labels.assign(ws.data.p(), 0);
  }
  result.bandwidth = bandwidth;
  result.candidate_k = elbow.ks;
  result.candidate_sse = elbow.sse;
  for (const auto& w : elbow.warnings) result.warnings.push_back(w);

  json out;
  out["K"] = result.K;
  out["bandwidth"] = bandwidth;
  json cand = json::array();
  for (std::size_t m = 0; m < elbow.ks.size(); ++m) cand.push_back({{"K", elbow.ks[m]}, {"sse", elbow.sse[m]}});
  out["candidates"] = cand;
  out["warnings"] = result.warnings;
  json rl = json::object(), il = json::object();
  for (std::size_t k = 0; k < ws.data.n(); ++k) rl[ws.data.respondent_label(k)] = result.respondent_labels[k];
  for (std::size_t i = 0; i < ws.data.p(); ++i) il[ws.data.item_label(i)] = result.item_labels[i];
  out["respondent_labels"] = rl;
  out["item_labels"] = il;
  manifest.add_file("cocluster.json", out.dump(2) + "\n");
  return result;
}

std::vector<ItemFit> stage_ppc(Workspace& ws, Manifest& manifest) {
  const auto predictive = simulate_predictive(ws.draws, ws.data, ws.grid, ws.config.predictive_size,
                                              derive_seed(ws.config.chain.seed, 0x99C), ws.config.threads);
  const auto table = item_fit_table(predictive, ws.data);
  std::ostringstream os;
  os << "item,pvalue_inside,pvalue_outside,logloss_mean,logloss_median,logloss_lower,logloss_upper,auc_mean,auc_median,"
        "auc_lower,auc_upper\n";
  std::size_t inside = 0, total = 0;
  for (const auto& f : table) {
    inside += f.pvalue_inside;
    total += f.pvalue_inside + f.pvalue_outside;
    os << ws.data.item_label(f.item) << ',' << f.pvalue_inside << ',' << f.pvalue_outside;
    for (const auto& s : {f.log_loss, f.auc}) {
      if (s) os << ',' << num(s->mean) << ',' << num(s->median) << ',' << num(s->lower) << ',' << num(s->upper);
      else os << ",NA,NA,NA,NA";
    }
    os << '\n';
  }
  manifest.add_file("ppc_items.csv", os.str());

  const Eigen::MatrixXd pv = bayesian_pvalue(predictive, ws.data);
  std::ostringstream pvs;
  pvs << "respondent,item,pvalue,misfit\n";
  for (const auto& r : ws.data.records()) {
    const double v = pv(static_cast<Eigen::Index>(r.respondent), static_cast<Eigen::Index>(r.item));
    pvs << ws.data.respondent_label(r.respondent) << ',' << ws.data.item_label(r.item) << ',' << num(v) << ','
        << (pvalue_misfit(v) ? 1 : 0) << '\n';
  }
  manifest.add_file("ppc_pvalues.csv", pvs.str());
  json summary{{"predictive_draws", predictive.draws()},
               {"pvalue_inside_share", total > 0 ? static_cast<double>(inside) / static_cast<double>(total) : 0.0}};
  manifest.add_file("ppc_summary.json", summary.dump(2) + "\n");
  return table;
}

void stage_cif(Workspace& ws, Manifest& manifest, const std::vector<std::pair<std::size_t, std::size_t>>& cells) {
  const auto all = ws.draws.all();
  // posterior-mean CIF over an evenly spaced subset of at most 200 draws
  const std::size_t use = std::min<std::size_t>(all.size(), 200);
  std::vector<const ModelState*> states;
  for (std::size_t m = 0; m < use; ++m) states.push_back(&all[m * all.size() / use]->state);
  const std::size_t points = std::max<std::size_t>(ws.config.cif_points, 2);
  std::ostringstream os;
  os << "respondent,item,outcome,time,cif\n";
  for (auto [k, i] : cells) {
    for (Outcome c : kOutcomes)
      for (std::size_t m = 0; m < points; ++m) {
        const double t = ws.grid.upper() * static_cast<double>(m) / static_cast<double>(points - 1);
        double total = 0.0;
        for (const ModelState* s : states) total += cif(*s, ws.grid, k, i, c, t);
        os << ws.data.respondent_label(k) << ',' << ws.data.item_label(i) << ',' << static_cast<int>(c) << ','
           << num(t) << ',' << num(total / static_cast<double>(states.size())) << '\n';
      }
  }
  manifest.add_file("cif.csv", os.str());
}

namespace {

// respondent id -> (column name -> value)
std::pair<std::vector<std::string>, std::map<std::string, std::vector<std::string>>> read_covariates(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open covariate file " + path.string());
  std::string line;
  std::getline(in, line);
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::string x;
    std::istringstream ss(s);
    while (std::getline(ss, x, ',')) {
      while (!x.empty() && (x.back() == '\r' || x.back() == ' ')) x.pop_back();
      f.push_back(x);
    }
    return f;
  };
  auto header = split(line);
  if (header.empty()) throw DataError("covariate file has no header");
  std::vector<std::string> names(header.begin() + 1, header.end());
  std::map<std::string, std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split(line);
    f.resize(header.size());
    rows[f[0]] = std::vector<std::string>(f.begin() + 1, f.end());
  }
  return {names, rows};
}

}  // namespace

void stage_export(Workspace& ws, Manifest& manifest, const Coclustering& clusters) {
  if (!ws.aligned) ws.aligned = procrustes_align(ws.draws);
  const auto mean = ws.aligned->posterior_mean();
  const auto accuracy = respondent_accuracy(ws.data);
  std::vector<std::string> cov_names;
  std::map<std::string, std::vector<std::string>> cov_rows;
  if (ws.config.covariates) std::tie(cov_names, cov_rows) = read_covariates(*ws.config.covariates);

  std::ostringstream os;
  os << "kind,id";
  for (std::size_t a = 0; a < mean.dim(); ++a) os << ",x" << a + 1;
  os << ",cluster,delta_theta,accuracy";
  for (const auto& c : cov_names) os << ',' << c;
  os << '\n';
  for (std::size_t k = 0; k < ws.data.n(); ++k) {
    const auto id = ws.data.respondent_label(k);
    os << "respondent," << id;
    for (std::size_t a = 0; a < mean.dim(); ++a) os << ',' << num(mean.Z(k, a));
    const auto dt = delta_theta(ws.draws, k);
    os << ',' << clusters.respondent_labels[k] << ','
       << num(std::accumulate(dt.begin(), dt.end(), 0.0) / static_cast<double>(dt.size())) << ',' << num(accuracy[k]);
    const auto it = cov_rows.find(id);
    for (std::size_t c = 0; c < cov_names.size(); ++c) os << ',' << (it != cov_rows.end() ? it->second[c] : "NA");
    os << '\n';
  }
  for (std::size_t i = 0; i < ws.data.p(); ++i) {
    os << "item," << ws.data.item_label(i);
    for (std::size_t a = 0; a < mean.dim(); ++a) os << ',' << num(mean.W(i, a));
    os << ',' << clusters.item_labels[i] << ",NA,NA";
    for (std::size_t c = 0; c < cov_names.size(); ++c) os << ",NA";
    os << '\n';
  }
  manifest.add_file("interaction_map.csv", os.str());
  if (mean.dim() >= 2)
    manifest.add_file("interaction_map.svg",
                      interaction_map_svg(mean, clusters.respondent_labels, clusters.item_labels, ws.data.item_ids()));
}

std::string interaction_map_svg(const LatentPositions& positions, const std::vector<int>& respondent_labels,
                                const std::vector<int>& item_labels, const std::vector<std::string>& item_names) {
  static const char* palette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const Eigen::MatrixXd X = stack_positions(positions);
  const double lo_x = X.col(0).minCoeff(), hi_x = X.col(0).maxCoeff();
  const double lo_y = X.col(1).minCoeff(), hi_y = X.col(1).maxCoeff();
  const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-9});
  auto px = [&](double v) { return 40.0 + 520.0 * (v - lo_x) / span; };
  auto py = [&](double v) { return 560.0 - 520.0 * (v - lo_y) / span; };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n";
  os << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  for (Eigen::Index k = 0; k < positions.Z.rows(); ++k)
    os << "<circle cx=\"" << num(px(positions.Z(k, 0))) << "\" cy=\"" << num(py(positions.Z(k, 1)))
       << "\" r=\"3\" fill=\"" << palette[respondent_labels[k] % 8] << "\" fill-opacity=\"0.6\"/>\n";
  for (Eigen::Index i = 0; i < positions.W.rows(); ++i) {
    const std::string name = static_cast<std::size_t>(i) < item_names.size() ? item_names[i] : std::to_string(i + 1);
    os << "<text x=\"" << num(px(positions.W(i, 0))) << "\" y=\"" << num(py(positions.W(i, 1)))
       << "\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\" fill=\"" << palette[item_labels[i] % 8]
       << "\">" << name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

PipelineResult run_pipeline(const RunConfig& config) {
  PipelineResult result;
  try {
    config.validate();
  } catch (const std::exception& e) {
    result.exit_code = 1;
    result.error = e.what();
    return result;
  }
  fs::create_directories(config.out_dir);
  fs::remove(config.out_dir / "manifest.json");
  Manifest manifest(config.out_dir);
  Workspace ws;
  ws.config = config;
  std::string stage = "load";
  auto done = [&](const std::string& name) {
    manifest.complete_stage(name);
    result.last_completed_stage = name;
  };
  try {
    stage_load(ws, manifest);
    done(stage);
    stage = "grid";
    stage_grid(ws, manifest);
    done(stage);
    stage = "fit";
    stage_fit(ws, manifest);
    done(stage);
    stage = "diagnose";
    stage_diagnose(ws, manifest);
    done(stage);
    stage = "align";
    stage_align(ws, manifest);
    done(stage);
    stage = "summarize";
    stage_summarize(ws, manifest);
    done(stage);
    stage = "cocluster";
    const auto clusters = stage_cocluster(ws, manifest);
    done(stage);
    stage = "ppc";
    stage_ppc(ws, manifest);
    done(stage);
    stage = "cif";
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (const auto& r : ws.data.records()) cells.emplace_back(r.respondent, r.item);
    stage_cif(ws, manifest, cells);
    done(stage);
    stage = "export";
    stage_export(ws, manifest, clusters);
    done(stage);
  } catch (const std::exception& e) {
    const bool validation = dynamic_cast<const DataError*>(&e) || dynamic_cast<const ConfigError*>(&e) ||
                            dynamic_cast<const std::invalid_argument*>(&e);
    result.exit_code = validation ? 1 : 2;
    result.error = stage + ": " + e.what();
    manifest.fail(stage, e.what());
    return result;
  }
  return result;
}

}  // namespace lsam
