#include "lmmsubset/report.hpp"

#include <algorithm>
#include <sstream>

#include "lmmsubset/dataset.hpp"
#include "lmmsubset/errors.hpp"
#include "lmmsubset/stats.hpp"

namespace lmmsubset {

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<std::string> names_of(const std::vector<int>& subset, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (int j : subset) out.push_back(j < static_cast<int>(names.size()) ? names[j] : std::to_string(j));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<int>& v, char sep) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += sep;
    out += std::to_string(v[k]);
  }
  return out;
}

}  // namespace

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Candidates
// ---------------------------------------------------------------------------

nlohmann::json candidates_to_json(const CandidateList& candidates, const std::vector<int>& screened,
                                  const std::vector<std::string>& column_names) {
  nlohmann::json sizes = nlohmann::json::array();
  for (std::size_t k = 0; k < candidates.by_size.size(); ++k) {
    if (candidates.by_size[k].empty()) continue;
    nlohmann::json subsets = nlohmann::json::array();
    for (const auto& c : candidates.by_size[k])
      subsets.push_back({{"subset", c.subset},
                         {"names", names_of(c.subset, column_names)},
                         {"rss", c.expected_loss},
                         {"delta_hat", vec_json(c.delta_hat)}});
    sizes.push_back({{"size", k}, {"subsets", subsets}});
  }
  const auto& s = candidates.stats;
  return {{"column_names", column_names},
          {"screened", screened},
          {"total", candidates.total()},
          {"stats",
           {{"nodes_visited", s.nodes_visited},
            {"subtrees_pruned", s.subtrees_pruned},
            {"monotonicity_violations", s.monotonicity_violations},
            {"subsets_total", s.subsets_total},
            {"pruned_fraction", s.pruned_fraction()}}},
          {"sizes", sizes}};
}

std::vector<std::vector<int>> candidate_subsets(const nlohmann::json& doc) {
  std::vector<std::vector<int>> out;
  if (!doc.contains("sizes") || !doc["sizes"].is_array())
    throw ValidationError("candidates file: missing \"sizes\" array");
  for (const auto& level : doc["sizes"])
    for (const auto& c : level.at("subsets")) out.push_back(c.at("subset").get<std::vector<int>>());
  if (out.empty()) throw ValidationError("candidates file: no subsets");
  return out;
}

// ---------------------------------------------------------------------------
// Family
// ---------------------------------------------------------------------------

nlohmann::json intervals_to_json(const MethodSummary& m, const std::vector<std::string>& names,
                                 double level) {
  nlohmann::json coefs = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.estimate.size(); ++j)
    coefs.push_back({{"index", j},
                     {"name", j < static_cast<Eigen::Index>(names.size()) ? names[j] : std::to_string(j)},
                     {"estimate", m.estimate(j)},
                     {"lower", m.lower(j)},
                     {"upper", m.upper(j)}});
  return {{"method", m.method}, {"selected", m.selected}, {"level", level}, {"coefficients", coefs}};
}

nlohmann::json family_to_json(const FamilyReportInput& in) {
  const AcceptableFamily& fam = in.family;
  const auto& names = in.column_names;
  const SubsetEvaluation* best = nullptr;
  for (const auto& ev : in.evaluations)
    if (ev.subset == fam.s_min) best = &ev;
  if (!best) throw ValidationError("family report: S_min missing from evaluations");

  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : fam.members) {
    const MethodSummary ms = subset_summary("member", m.subset, in.problem, in.draws, in.level);
    nlohmann::json lower = vec_json(ms.lower), upper = vec_json(ms.upper);
    members.push_back({{"subset", m.subset},
                       {"names", names_of(m.subset, names)},
                       {"size", m.subset.size()},
                       {"acceptance_probability", m.acceptance_probability},
                       {"empirical_loss", m.empirical_loss},
                       {"predictive_loss_mean", m.predictive_loss_mean},
                       {"delta_hat", vec_json(ms.estimate)},
                       {"interval_lower", lower},
                       {"interval_upper", upper}});
  }

  // Per-candidate percent-increase summaries for the loss-vs-size plot.
  nlohmann::json candidates = nlohmann::json::array();
  const double ref_emp = std::max(best->empirical_loss, kLossFloor);
  for (const auto& ev : in.evaluations) {
    std::vector<double> d(static_cast<std::size_t>(ev.predictive_loss_draws.size()));
    for (std::size_t t = 0; t < d.size(); ++t) {
      const double ref = best->predictive_loss_draws(static_cast<Eigen::Index>(t));
      d[t] = 100.0 * (ev.predictive_loss_draws(static_cast<Eigen::Index>(t)) - ref) / std::max(ref, kLossFloor);
    }
    std::sort(d.begin(), d.end());
    const Acceptance acc = acceptance_probability(ev, *best, fam.eta);
    candidates.push_back({{"subset", ev.subset},
                          {"size", ev.subset.size()},
                          {"empirical_loss", ev.empirical_loss},
                          {"empirical_increase", 100.0 * (ev.empirical_loss - best->empirical_loss) / ref_emp},
                          {"predictive_loss_mean", ev.predictive_loss_draws.mean()},
                          {"increase_mean", stats::mean(d)},
                          {"increase_q10", stats::quantile_sorted(d, 0.10)},
                          {"increase_q90", stats::quantile_sorted(d, 0.90)},
                          {"increase_lower_bound", stats::quantile_sorted(d, fam.epsilon)},
                          {"acceptance_probability", acc.probability},
                          {"accepted", fam.contains(ev.subset)}});
  }

  nlohmann::json vi = nlohmann::json::array();
  for (Eigen::Index j = 0; j < fam.vi.size(); ++j)
    vi.push_back({{"index", j},
                  {"name", j < static_cast<Eigen::Index>(names.size()) ? names[j] : std::to_string(j)},
                  {"vi", fam.vi(j)}});

  const MethodSummary m = posterior_summary(in.draws, in.level);
  const MethodSummary smin = subset_summary("S_min", fam.s_min, in.problem, in.draws, in.level);
  const MethodSummary ssmall = subset_summary("S_small", fam.s_small, in.problem, in.draws, in.level);

  return {{"eta", fam.eta},
          {"epsilon", fam.epsilon},
          {"K", in.K},
          {"seed", in.seed},
          {"column_names", names},
          {"s_min", fam.s_min},
          {"s_small", fam.s_small},
          {"s_min_names", names_of(fam.s_min, names)},
          {"s_small_names", names_of(fam.s_small, names)},
          {"floored_draws", fam.floored_draws},
          {"degenerate_denominator", fam.floored_draws > 0},
          {"vi", vi},
          {"members", members},
          {"candidates", candidates},
          {"intervals",
           {intervals_to_json(m, names, in.level), intervals_to_json(smin, names, in.level),
            intervals_to_json(ssmall, names, in.level)}}};
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

std::string loss_table_csv(const nlohmann::json& family) {
  std::ostringstream os;
  os << "size,subset,empirical_increase,increase_mean,central80_lower,central80_upper,"
        "one_sided_lower,acceptance_probability,accepted,is_s_min,is_s_small\n";
  const auto s_min = family.at("s_min").get<std::vector<int>>();
  const auto s_small = family.at("s_small").get<std::vector<int>>();
  for (const auto& c : family.at("candidates")) {
    const auto subset = c.at("subset").get<std::vector<int>>();
    os << c.at("size").get<int>() << ',' << join(subset, ' ') << ','
       << format_double(c.at("empirical_increase").get<double>()) << ','
       << format_double(c.at("increase_mean").get<double>()) << ','
       << format_double(c.at("increase_q10").get<double>()) << ','
       << format_double(c.at("increase_q90").get<double>()) << ','
       << format_double(c.at("increase_lower_bound").get<double>()) << ','
       << format_double(c.at("acceptance_probability").get<double>()) << ','
       << (c.at("accepted").get<bool>() ? 1 : 0) << ',' << (subset == s_min ? 1 : 0) << ','
       << (subset == s_small ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string vi_table_csv(const nlohmann::json& family) {
  std::ostringstream os;
  os << "index,name,vi\n";
  for (const auto& v : family.at("vi"))
    os << v.at("index").get<int>() << ',' << csv_field(v.at("name").get<std::string>()) << ','
       << format_double(v.at("vi").get<double>()) << '\n';
  return os.str();
}

std::string coefficient_table_csv(const nlohmann::json& family) {
  std::ostringstream os;
  os << "method,index,name,estimate,lower,upper,level\n";
  for (const auto& block : family.at("intervals")) {
    const std::string method = block.at("method").get<std::string>();
    const double level = block.at("level").get<double>();
    for (const auto& c : block.at("coefficients"))
      os << method << ',' << c.at("index").get<int>() << ','
         << csv_field(c.at("name").get<std::string>()) << ','
         << format_double(c.at("estimate").get<double>()) << ','
         << format_double(c.at("lower").get<double>()) << ','
         << format_double(c.at("upper").get<double>()) << ',' << format_double(level) << '\n';
  }
  return os.str();
}

}  // namespace lmmsubset
