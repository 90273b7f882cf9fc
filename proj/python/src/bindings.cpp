#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "lmmsubset/cli.hpp"
#include "lmmsubset/errors.hpp"
#include "lmmsubset/pipeline.hpp"
#include "lmmsubset/report.hpp"
#include "lmmsubset/weights.hpp"

namespace py = pybind11;
using namespace lmmsubset;

namespace {

LongitudinalDataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, std::vector<int> group_sizes,
                                 std::vector<std::string> column_names, bool has_intercept) {
  if (column_names.empty())
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      column_names.push_back(has_intercept && j == 0 ? "(Intercept)" : "x" + std::to_string(j));
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < group_sizes.size(); ++i) labels.push_back(std::to_string(i + 1));
  return LongitudinalDataset::from_groups(labels, std::move(group_sizes), y, X, std::move(column_names),
                                          has_intercept);
}

ModelConfig model_config(int n_save, int n_burn, std::uint64_t seed, const std::string& prior) {
  ModelConfig c;
  c.n_save = n_save;
  c.n_burn = n_burn;
  c.seed = seed;
  if (prior == "gaussian") c.prior = PriorKind::Gaussian;
  else if (prior != "horseshoe") throw ValidationError("prior must be \"horseshoe\" or \"gaussian\"");
  return c;
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

DecisionProblem in_sample_problem(const PosteriorDraws& draws, const LongitudinalDataset& data) {
  const auto design = PredictionDesign::in_sample(data, PredictionMode::ExistingSubject);
  return DecisionProblem(summarize_weights(draws, design), data.X);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Subset selection for linear mixed models";
  m.attr("__version__") = LMMSUBSET_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<LongitudinalDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("y"), py::arg("X"), py::arg("group_sizes"),
           py::arg("column_names") = std::vector<std::string>{}, py::arg("has_intercept") = true)
      .def_readonly("y", &LongitudinalDataset::y)
      .def_readonly("X", &LongitudinalDataset::X)
      .def_readonly("group_sizes", &LongitudinalDataset::group_sizes)
      .def_readonly("column_names", &LongitudinalDataset::column_names)
      .def_property_readonly("subjects", &LongitudinalDataset::subjects)
      .def("to_csv", &dataset_to_csv)
      .def("schema", [](const LongitudinalDataset& d) { return to_python(canonical_schema(d).to_json()); });

  m.def("load_dataset", [](const std::string& csv, const std::string& schema_json, bool intercept) {
    return load_dataset(csv, Schema::from_json(nlohmann::json::parse(schema_json)), intercept);
  }, py::arg("path"), py::arg("schema_json"), py::arg("include_intercept") = true);

  py::class_<PosteriorDraws>(m, "PosteriorDraws")
      .def_readonly("beta", &PosteriorDraws::beta)
      .def_readonly("u", &PosteriorDraws::u)
      .def_readonly("sigma2_eps", &PosteriorDraws::sigma2_eps)
      .def_readonly("sigma2_u", &PosteriorDraws::sigma2_u)
      .def_readonly("y_tilde", &PosteriorDraws::y_tilde)
      .def_property_readonly("draws", &PosteriorDraws::draws);

  m.def("weight_block", &weight_block_random_intercept, py::arg("sigma2_eps"), py::arg("sigma2_u"), py::arg("m"));

  m.def("simulate_dataset", [](int n, int p, int m_rep, int p_star, double rho, double snr, std::uint64_t seed) {
    SimDesign d;
    d.n = n;
    d.p = p;
    d.m = m_rep;
    d.p_star = p_star;
    d.rho_star = rho;
    d.snr = snr;
    d.seed = seed;
    SimInstance inst = generate(d);
    return py::make_tuple(inst.data, inst.truth.beta_star, inst.truth.active_set);
  }, py::arg("n") = 75, py::arg("p") = 15, py::arg("m") = 4, py::arg("p_star") = 5, py::arg("rho") = 0.25,
     py::arg("snr") = 1.0, py::arg("seed") = 0);

  m.def("fit", [](const LongitudinalDataset& data, int n_save, int n_burn, std::uint64_t seed,
                  const std::string& prior, int threads) {
    py::gil_scoped_release release;
    return lmmsubset::fit(data, model_config(n_save, n_burn, seed, prior), seed, threads).draws;
  }, py::arg("data"), py::arg("n_save") = 10000, py::arg("n_burn") = 5000, py::arg("seed") = 0,
     py::arg("prior") = "horseshoe", py::arg("threads") = 1);

  m.def("optimal_coefficients", [](const PosteriorDraws& draws, const LongitudinalDataset& data,
                                   const std::vector<int>& subset, double level) {
    const DecisionProblem problem = in_sample_problem(draws, data);
    const auto coef = problem.optimal(subset);
    const auto ci = projected_intervals(coef, problem.project(subset, draws.y_tilde), level);
    py::dict out;
    out["delta_hat"] = coef.delta_hat;
    out["expected_loss"] = coef.expected_loss;
    out["lower"] = ci.lower;
    out["upper"] = ci.upper;
    return out;
  }, py::arg("draws"), py::arg("data"), py::arg("subset"), py::arg("level") = 0.9);

  m.def("search", [](const PosteriorDraws& draws, const LongitudinalDataset& data, int s_max, int s_k) {
    SearchConfig sc = SearchConfig::defaults(data.cols(), data.has_intercept);
    if (s_max > 0) sc.s_max = s_max;
    sc.s_k = s_k;
    const DecisionProblem problem = in_sample_problem(draws, data);
    const CandidateList c = search_candidates(draws, problem, sc);
    return to_python(candidates_to_json(c, prescreen(draws, sc.s_max, sc.forced_in), data.column_names));
  }, py::arg("draws"), py::arg("data"), py::arg("s_max") = 0, py::arg("s_k") = 15);

  m.def("select", [](const LongitudinalDataset& data, const PosteriorDraws& draws,
                     const std::vector<std::vector<int>>& subsets, int K, double eta, double epsilon,
                     std::uint64_t seed, int n_save, int n_burn, const std::string& prior, int threads) {
    CrossValidationConfig cvc;
    cvc.K = K;
    cvc.seed = seed;
    cvc.model = model_config(n_save, n_burn, seed, prior);
    cvc.threads = threads;
    nlohmann::json doc;
    {
      py::gil_scoped_release release;
      const CrossValidation cv = cross_validate(data, cvc);
      const auto evaluations = evaluate_subsets(subsets, cv, threads);
      const AcceptableFamily fam = build_family(evaluations, data.cols(), eta, epsilon);
      const DecisionProblem problem = in_sample_problem(draws, data);
      doc = family_to_json({fam, evaluations, problem, draws, data.column_names, 0.9, K, seed});
    }
    return to_python(doc);
  }, py::arg("data"), py::arg("draws"), py::arg("subsets"), py::arg("K") = 10, py::arg("eta") = 0.0,
     py::arg("epsilon") = 0.10, py::arg("seed") = 0, py::arg("n_save") = 10000, py::arg("n_burn") = 5000,
     py::arg("prior") = "horseshoe", py::arg("threads") = 1);

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int rc = cli::run(args, out, err);
    return py::make_tuple(rc, out.str(), err.str());
  }, py::arg("args"));
}
