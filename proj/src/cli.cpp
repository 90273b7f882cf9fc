#include "lmmsubset/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lmmsubset/dataset.hpp"
#include "lmmsubset/digest.hpp"
#include "lmmsubset/draws_io.hpp"
#include "lmmsubset/errors.hpp"
#include "lmmsubset/family.hpp"
#include "lmmsubset/pipeline.hpp"
#include "lmmsubset/report.hpp"
#include "lmmsubset/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lmmsubset::cli {

namespace {

constexpr const char* kVersion = LMMSUBSET_VERSION;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json run_manifest(const std::vector<std::string>& args, const std::string& command, const json& config,
                  const std::string& data_digest, std::uint64_t seed) {
  std::string line = "lmmsubset";
  for (const auto& a : args) line += " " + a;
  return {{"command", command},
          {"command_line", line},
          {"config", config},
          {"config_digest", sha256_hex(config.dump())},
          {"data_digest", data_digest},
          {"seed", seed},
          {"versions", {{"lmmsubset", kVersion}, {"draw_format", "float64-le-rowmajor"}}},
          {"started", utc_now()},
          {"status", "running"}};
}

// Manifest for a single-file output lives next to it.
fs::path manifest_path_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void finish_manifest(const fs::path& path, json manifest, const std::vector<fs::path>& outputs) {
  for (const auto& o : outputs) manifest["outputs"][o.filename().string()] = sha256_file(o);
  manifest["finished"] = utc_now();
  manifest["status"] = "complete";
  write_file_atomic(path, dump_json(manifest));
}

json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("file not found: " + path.string());
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<int> parse_subset(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError("--subset: '" + item + "' is not an integer");
    }
  }
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end())
    throw ValidationError("--subset: repeated index");
  return out;
}

ModelConfig model_from_flags(int draws, int burn, std::uint64_t seed, const std::string& prior,
                             bool no_intercept, double global_scale, double sigma_u_upper, int p) {
  ModelConfig m;
  m.n_save = draws;
  m.n_burn = burn;
  m.seed = seed;
  m.include_intercept = !no_intercept;
  m.horseshoe_global_scale = global_scale;
  m.sigma_u_upper = sigma_u_upper;
  if (prior == "horseshoe") {
    m.prior = PriorKind::Horseshoe;
  } else if (prior == "gaussian") {
    m.prior = PriorKind::Gaussian;
    m.prior_cov = Eigen::MatrixXd::Identity(p, p) * 100.0;
  } else {
    throw ValidationError("--prior must be horseshoe or gaussian");
  }
  return m;
}

// Draws directory produced by `fit`, with its data and regenerated y_tilde.
struct FittedRun {
  json manifest;
  LongitudinalDataset data;
  PosteriorDraws draws;
  ModelConfig model;
};

FittedRun load_fitted(const fs::path& dir, int threads) {
  FittedRun r;
  if (!fs::exists(dir / "manifest.json")) throw ValidationError("no manifest.json in " + dir.string());
  r.draws = load_draws(dir, &r.manifest);
  if (r.manifest.value("status", std::string()) != "complete")
    throw ValidationError("draws directory " + dir.string() + " is incomplete");
  r.model = ModelConfig::from_json(r.manifest.at("config"));
  const Schema schema = Schema::from_json(read_json(dir / "schema.json"));
  r.data = load_dataset(dir / "data.csv", schema, r.model.include_intercept);
  if (sha256_hex(dataset_to_csv(r.data)) != r.manifest.at("data_digest").get<std::string>())
    throw ValidationError("data.csv in " + dir.string() + " does not match its manifest digest");
  if (r.data.cols() != r.draws.p() || r.data.subjects() != r.draws.n())
    throw ValidationError("shape error: stored draws do not match stored data");
  attach_in_sample_predictive(r.draws, r.data, r.manifest.at("predictive_seed").get<std::uint64_t>(),
                              threads);
  return r;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string data, schema, out, prior = "horseshoe";
  int draws = 10000, burn = 5000;
  std::uint64_t seed = 0;
  bool no_intercept = false;
  double global_scale = 1.0, sigma_u_upper = 100.0;
};

int cmd_fit(const FitArgs& a, int threads, const std::vector<std::string>& args, std::ostream& out) {
  const Schema schema = Schema::from_json(read_json(a.schema));
  const LongitudinalDataset data = load_dataset(a.data, schema, !a.no_intercept);
  const ModelConfig model = model_from_flags(a.draws, a.burn, a.seed, a.prior, a.no_intercept,
                                             a.global_scale, a.sigma_u_upper, data.cols());
  const std::string csv = dataset_to_csv(data);
  const std::string digest = sha256_hex(csv);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  json manifest = run_manifest(args, "fit", model.to_json(), digest, a.seed);
  write_file_atomic(dir / "manifest.json", dump_json(manifest));

  const FitResult fr = fit(data, model, a.seed, threads);
  write_file_atomic(dir / "data.csv", csv);
  write_file_atomic(dir / "schema.json", dump_json(canonical_schema(data).to_json()));
  manifest["predictive_seed"] = fr.predictive_seed;
  manifest["column_names"] = data.column_names;
  manifest["subjects"] = data.subjects();
  manifest["rows"] = data.rows();
  for (const auto& w : fr.draws.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
  save_draws(dir, fr.draws, manifest);
  json final_manifest = read_json(dir / "manifest.json");
  final_manifest["outputs"]["data.csv"] = sha256_file(dir / "data.csv");
  final_manifest["outputs"]["schema.json"] = sha256_file(dir / "schema.json");
  final_manifest["finished"] = utc_now();
  final_manifest["status"] = "complete";
  write_file_atomic(dir / "manifest.json", dump_json(final_manifest));
  out << "fit: " << fr.draws.draws() << " draws written to " << dir.string() << "\n";
  return 0;
}

struct SearchArgs {
  std::string draws, out;
  int smax = 0, sk = 15;
};

int cmd_search(const SearchArgs& a, int threads, const std::vector<std::string>& args, std::ostream& out) {
  const FittedRun run = load_fitted(a.draws, threads);
  SearchConfig sc = SearchConfig::defaults(run.data.cols(), run.data.has_intercept);
  if (a.smax > 0) sc.s_max = a.smax;
  sc.s_k = a.sk;
  const json config = {{"s_max", sc.s_max}, {"s_k", sc.s_k}, {"forced_in", sc.forced_in}};
  const fs::path out_path = a.out;
  const fs::path mpath = manifest_path_for(out_path);
  const json manifest = run_manifest(args, "search", config, run.manifest.at("data_digest"),
                                     run.model.seed);
  write_file_atomic(mpath, dump_json(manifest));

  const auto design = PredictionDesign::in_sample(run.data, PredictionMode::ExistingSubject);
  const DecisionProblem problem(summarize_weights(run.draws, design), run.data.X);
  const CandidateList cands = search_candidates(run.draws, problem, sc);
  json doc = candidates_to_json(cands, prescreen(run.draws, sc.s_max, sc.forced_in), run.data.column_names);
  doc["draws_dir"] = fs::absolute(a.draws).lexically_normal().string();
  doc["data_digest"] = run.manifest.at("data_digest");
  doc["config"] = config;
  write_file_atomic(out_path, dump_json(doc));
  finish_manifest(mpath, manifest, {out_path});
  out << "search: " << cands.total() << " candidate subsets written to " << out_path.string() << "\n";
  return 0;
}

struct SelectArgs {
  std::string data, schema, candidates, out, draws;
  int K = 10;
  double eta = 0.0, epsilon = 0.10, level = 0.90;
  std::uint64_t seed = 0;
};

int cmd_select(const SelectArgs& a, int threads, const std::vector<std::string>& args, std::ostream& out) {
  const json cands = read_json(a.candidates);
  const std::vector<std::vector<int>> subsets = candidate_subsets(cands);
  const fs::path draws_dir = a.draws.empty() ? fs::path(cands.at("draws_dir").get<std::string>()) : fs::path(a.draws);
  const FittedRun run = load_fitted(draws_dir, threads);

  const Schema schema = a.schema.empty() ? Schema::from_json(read_json(draws_dir / "schema.json"))
                                         : Schema::from_json(read_json(a.schema));
  const LongitudinalDataset data = load_dataset(a.data, schema, run.model.include_intercept);
  const std::string digest = sha256_hex(dataset_to_csv(data));
  if (digest != run.manifest.at("data_digest").get<std::string>())
    throw ValidationError("--data does not match the data the draws were fitted to");

  CrossValidationConfig cvc;
  cvc.K = a.K;
  cvc.model = run.model;
  cvc.seed = a.seed;
  cvc.threads = threads;
  const json config = {{"cross_validation", cvc.to_json()},
                       {"eta", a.eta},
                       {"epsilon", a.epsilon},
                       {"level", a.level}};
  const fs::path out_path = a.out;
  const fs::path mpath = manifest_path_for(out_path);
  const json manifest = run_manifest(args, "select", config, digest, a.seed);
  write_file_atomic(mpath, dump_json(manifest));

  const CrossValidation cv = cross_validate(data, cvc);
  const auto evaluations = evaluate_subsets(subsets, cv, threads);
  const AcceptableFamily fam = build_family(evaluations, data.cols(), a.eta, a.epsilon);
  const auto design = PredictionDesign::in_sample(data, PredictionMode::ExistingSubject);
  const DecisionProblem problem(summarize_weights(run.draws, design), data.X);
  json doc = family_to_json({fam, evaluations, problem, run.draws, data.column_names, a.level, a.K, a.seed});
  int stride = 1;
  for (const auto& f : cv.folds) stride = std::max(stride, f.thin_stride);
  doc["thin_stride"] = stride;
  write_file_atomic(out_path, dump_json(doc));
  json done = manifest;
  done["thin_stride"] = stride;
  finish_manifest(mpath, done, {out_path});
  out << "select: " << fam.members.size() << " acceptable subsets; |S_min| = " << fam.s_min.size()
      << ", |S_small| = " << fam.s_small.size() << "\n";
  if (fam.floored_draws > 0)
    std::cerr << "warning: " << fam.floored_draws << " draws used the 1e-12 loss floor\n";
  return 0;
}

struct CoefArgs {
  std::string draws, subset, design, out;
  double level = 0.90;
};

PredictionDesign design_from_json(const json& j, int p, std::uint64_t& seed_index) {
  const std::string mode_text = j.value("mode", std::string("existing"));
  PredictionMode mode;
  if (mode_text == "existing") mode = PredictionMode::ExistingSubject;
  else if (mode_text == "new") mode = PredictionMode::NewSubject;
  else throw ValidationError("design: mode must be \"existing\" or \"new\"");
  auto rows = [&](const json& m) {
    const auto v = m.get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd X(static_cast<Eigen::Index>(v.size()), p);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (static_cast<int>(v[i].size()) != p)
        throw ValidationError("shape error: design row " + std::to_string(i) + " has " +
                              std::to_string(v[i].size()) + " entries, expected " + std::to_string(p));
      for (int c = 0; c < p; ++c) X(static_cast<Eigen::Index>(i), c) = v[i][c];
    }
    return X;
  };
  const auto index = j.value("existing_index", std::vector<int>{});
  seed_index = 1;
  if (j.contains("subject_rows"))
    return PredictionDesign::replicated(rows(j.at("subject_rows")), j.at("m_tilde").get<std::vector<int>>(),
                                        mode, index);
  if (j.contains("X"))
    return PredictionDesign::grouped(rows(j.at("X")), j.at("group_sizes").get<std::vector<int>>(), mode, index);
  throw ValidationError("design: expected \"in_sample\", \"X\" + \"group_sizes\", or \"subject_rows\" + \"m_tilde\"");
}

int cmd_coefficients(const CoefArgs& a, int threads, std::ostream& out) {
  FittedRun run = load_fitted(a.draws, threads);
  const std::vector<int> subset = parse_subset(a.subset);
  check_subset(subset, run.data.cols());

  PredictionDesign design = PredictionDesign::in_sample(run.data, PredictionMode::ExistingSubject);
  const json dj = a.design.empty() ? json{{"in_sample", true}} : read_json(a.design);
  if (!dj.value("in_sample", false)) {
    std::uint64_t idx = 0;
    design = design_from_json(dj, run.data.cols(), idx);
    design.validate(run.data.cols(), run.data.subjects());
    run.draws = predictive_draws(run.draws, design,
                                 derive_seed(run.manifest.at("predictive_seed").get<std::uint64_t>(),
                                             "predictive", idx),
                                 threads);
  } else if (dj.value("mode", std::string("existing")) == "new") {
    design = PredictionDesign::in_sample(run.data, PredictionMode::NewSubject);
    run.draws = predictive_draws(run.draws, design,
                                 derive_seed(run.manifest.at("predictive_seed").get<std::uint64_t>(),
                                             "predictive", 2),
                                 threads);
  }
  const DecisionProblem problem(summarize_weights(run.draws, design), design.X);
  const SubsetCoefficients coef = problem.optimal(subset);
  const CoefficientIntervals ci = projected_intervals(coef, problem.project(subset, run.draws.y_tilde), a.level);
  json coefs = json::array();
  for (int j : subset)
    coefs.push_back({{"index", j},
                     {"name", run.data.column_names[j]},
                     {"estimate", ci.estimate(j)},
                     {"mean", ci.mean(j)},
                     {"lower", ci.lower(j)},
                     {"upper", ci.upper(j)}});
  std::vector<double> delta(coef.delta_hat.data(), coef.delta_hat.data() + coef.delta_hat.size());
  const json doc = {{"subset", subset},
                    {"level", a.level},
                    {"expected_loss", coef.expected_loss},
                    {"delta_hat", delta},
                    {"coefficients", coefs}};
  if (a.out.empty()) {
    out << dump_json(doc);
  } else {
    write_file_atomic(a.out, dump_json(doc));
  }
  return 0;
}

struct SimArgs {
  int n = 300, p = 15, m = 4, p_star = 5, reps = 100, draws = 10000, burn = 5000, K = 10, sk = 15;
  double snr = 1.0, rho = 0.25;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_simulate(const SimArgs& a, int threads, const std::vector<std::string>& args, std::ostream& out) {
  SimDesign d;
  d.n = a.n;
  d.p = a.p;
  d.m = a.m;
  d.p_star = a.p_star;
  d.rho_star = a.rho;
  d.snr = a.snr;
  d.n_reps = a.reps;
  d.seed = a.seed;
  d.validate();
  PipelineConfig pc;
  pc.model.n_save = a.draws;
  pc.model.n_burn = a.burn;
  pc.K = a.K;
  pc.s_k = a.sk;
  pc.threads = threads;
  const json config = {{"design", d.to_json()}, {"pipeline", pc.to_json()}};
  const std::string csv_name = a.out.empty() ? std::string() : a.out;
  json manifest = run_manifest(args, "simulate", config, "", a.seed);
  if (!csv_name.empty()) write_file_atomic(manifest_path_for(csv_name), dump_json(manifest));
  const std::string csv = sim_rows_to_csv(simulate(d, pc));
  if (csv_name.empty()) {
    out << csv;
  } else {
    write_file_atomic(csv_name, csv);
    finish_manifest(manifest_path_for(csv_name), manifest, {fs::path(csv_name)});
  }
  return 0;
}

struct ReportArgs {
  std::string family, format = "csv", table = "all", out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const json fam = read_json(a.family);
  for (const char* key : {"s_min", "s_small", "vi", "candidates", "intervals"})
    if (!fam.contains(key)) throw ValidationError("family file lacks \"" + std::string(key) + "\"");
  if (a.format != "csv" && a.format != "json") throw ValidationError("--format must be csv or json");
  const std::vector<std::pair<std::string, std::string>> tables = {
      {"loss", loss_table_csv(fam)}, {"vi", vi_table_csv(fam)}, {"coefficients", coefficient_table_csv(fam)}};
  auto render = [&](const std::string& name, const std::string& csv) -> std::string {
    if (a.format == "csv") return csv;
    if (name == "loss") return dump_json(fam.at("candidates"));
    if (name == "vi") return dump_json(fam.at("vi"));
    return dump_json(fam.at("intervals"));
  };
  const std::string ext = a.format == "csv" ? ".csv" : ".json";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    for (const auto& [name, csv] : tables) {
      if (a.table != "all" && a.table != name) continue;
      write_file_atomic(fs::path(a.out) / (name + ext), render(name, csv));
    }
    return 0;
  }
  bool first = true;
  for (const auto& [name, csv] : tables) {
    if (a.table != "all" && a.table != name) continue;
    if (!first) out << "\n";
    if (a.table == "all") out << "# " << name << "\n";
    out << render(name, csv);
    first = false;
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subset selection for linear mixed models", "lmmsubset"};
  app.set_version_flag("--version", std::string("lmmsubset ") + kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads (results do not depend on this)")
      ->check(CLI::Range(1, 1024));

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Run the Gibbs sampler and store posterior draws");
  fit_cmd->add_option("--data", fa.data, "Long-format CSV")->required();
  fit_cmd->add_option("--schema", fa.schema, "Column mapping JSON")->required();
  fit_cmd->add_option("--draws", fa.draws, "Saved draws")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--burn", fa.burn, "Burn-in sweeps")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--seed", fa.seed, "Master seed");
  fit_cmd->add_option("--out", fa.out, "Output directory")->required();
  fit_cmd->add_option("--prior", fa.prior, "horseshoe or gaussian");
  fit_cmd->add_option("--global-scale", fa.global_scale, "Horseshoe global scale");
  fit_cmd->add_option("--sigma-u-upper", fa.sigma_u_upper, "Upper bound B of sigma_u ~ Unif(0, B)");
  fit_cmd->add_flag("--no-intercept", fa.no_intercept, "Do not prepend an intercept column");

  SearchArgs sa;
  auto* search_cmd = app.add_subcommand("search", "Branch-and-bound search over pseudo-data");
  search_cmd->add_option("--draws", sa.draws, "Draws directory from fit")->required();
  search_cmd->add_option("--smax", sa.smax, "Largest subset size (default min(p, 35))");
  search_cmd->add_option("--sk", sa.sk, "Subsets kept per size");
  search_cmd->add_option("--out", sa.out, "candidates.json")->required();

  SelectArgs sel;
  auto* select_cmd = app.add_subcommand("select", "Cross-validate candidates and build the acceptable family");
  select_cmd->add_option("--data", sel.data, "Long-format CSV used for the fit")->required();
  select_cmd->add_option("--schema", sel.schema, "Column mapping JSON (default: the fit's)");
  select_cmd->add_option("--candidates", sel.candidates, "candidates.json")->required();
  select_cmd->add_option("--draws", sel.draws, "Draws directory (default: from candidates.json)");
  select_cmd->add_option("--K", sel.K, "Folds");
  select_cmd->add_option("--eta", sel.eta, "Margin in percent");
  select_cmd->add_option("--epsilon", sel.epsilon, "Probability level");
  select_cmd->add_option("--level", sel.level, "Interval level");
  select_cmd->add_option("--seed", sel.seed, "Master seed");
  select_cmd->add_option("--out", sel.out, "family.json")->required();

  CoefArgs ca;
  auto* coef_cmd = app.add_subcommand("coefficients", "Optimal coefficients and projected intervals");
  coef_cmd->add_option("--draws", ca.draws, "Draws directory from fit")->required();
  coef_cmd->add_option("--subset", ca.subset, "Comma-separated column indices (0 = intercept)")->required();
  coef_cmd->add_option("--design", ca.design, "Prediction design JSON (default: in-sample)");
  coef_cmd->add_option("--level", ca.level, "Interval level");
  coef_cmd->add_option("--out", ca.out, "Output JSON (default: stdout)");

  SimArgs sm;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulation study");
  sim_cmd->add_option("--n", sm.n, "Subjects");
  sim_cmd->add_option("--p", sm.p, "Covariates (excluding intercept)");
  sim_cmd->add_option("--m", sm.m, "Replicates per subject");
  sim_cmd->add_option("--pstar", sm.p_star, "Active covariates");
  sim_cmd->add_option("--rho", sm.rho, "Intraclass correlation");
  sim_cmd->add_option("--snr", sm.snr, "Signal-to-noise ratio");
  sim_cmd->add_option("--reps", sm.reps, "Replications");
  sim_cmd->add_option("--draws", sm.draws, "Saved draws per chain");
  sim_cmd->add_option("--burn", sm.burn, "Burn-in per chain");
  sim_cmd->add_option("--K", sm.K, "Folds");
  sim_cmd->add_option("--sk", sm.sk, "Subsets kept per size");
  sim_cmd->add_option("--seed", sm.seed, "Master seed");
  sim_cmd->add_option("--out", sm.out, "results.csv (default: stdout)");

  ReportArgs ra;
  auto* report_cmd = app.add_subcommand("report", "Plot-ready tables from family.json");
  report_cmd->add_option("--family", ra.family, "family.json")->required();
  report_cmd->add_option("--format", ra.format, "csv or json");
  report_cmd->add_option("--table", ra.table, "loss, vi, coefficients or all");
  report_cmd->add_option("--out", ra.out, "Output directory (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) err << app.help();
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit_cmd) return cmd_fit(fa, threads, args, out);
    if (*search_cmd) return cmd_search(sa, threads, args, out);
    if (*select_cmd) return cmd_select(sel, threads, args, out);
    if (*coef_cmd) return cmd_coefficients(ca, threads, out);
    if (*sim_cmd) return cmd_simulate(sm, threads, args, out);
    if (*report_cmd) return cmd_report(ra, out);
  } catch (const NumericalError& e) {
    err << "numerical error in " << e.where() << ": " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run(const std::vector<std::string>& args) { return run(args, std::cout, std::cerr); }

}  // namespace lmmsubset::cli
