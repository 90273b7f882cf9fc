#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "lmmsubset/cli.hpp"
#include "lmmsubset/dataset.hpp"
#include "lmmsubset/sim.hpp"

using namespace lmmsubset;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int call(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return rc;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lmmsubset-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Every key listed as required at the top level of a schema is present.
void check_required(const json& doc, const std::string& schema_file) {
  const json schema = json::parse(slurp(fs::path(LMMSUBSET_SCHEMA_DIR) / schema_file));
  for (const auto& key : schema.value("required", json::array())) CHECK(doc.contains(key.get<std::string>()));
}

}  // namespace

TEST_CASE("version and usage errors") {
  std::string out, err;
  CHECK(call({"--version"}, &out) == 0);
  CHECK(out.find("lmmsubset 0.3.0") != std::string::npos);
  CHECK(call({"fit", "--bogus"}, &out, &err) == 1);
  CHECK(call({"frobnicate"}, &out, &err) == 1);
  CHECK(call({"fit", "--data", "/nonexistent.csv", "--schema", "/nonexistent.json", "--out", "/tmp/x"}, &out, &err) == 1);
  CHECK_FALSE(err.empty());
}

TEST_CASE("installed binary reports exit codes") {
  const std::string bin = LMMSUBSET_CLI_PATH;
  CHECK(std::system((bin + " --version > /dev/null").c_str()) == 0);
  const int rc = std::system((bin + " search --unknown-flag > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 1);
}

TEST_CASE("simulate is deterministic and independent of thread count") {
  const auto dir = scratch("sim");
  const std::vector<std::string> base{"simulate", "--n", "75", "--p", "8", "--reps", "1", "--draws", "1000",
                                      "--burn", "300", "--K", "3", "--seed", "42"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", (dir / "a.csv").string()});
  b.insert(b.begin(), {"--threads", "2"});
  b.insert(b.end(), {"--out", (dir / "b.csv").string()});
  REQUIRE(call(a) == 0);
  REQUIRE(call(b) == 0);
  const std::string ta = slurp(dir / "a.csv");
  CHECK(ta == slurp(dir / "b.csv"));
  CHECK(ta.rfind("rep,method,size,loss,tpr,tnr,width,coverage\n", 0) == 0);
  CHECK(fs::exists(dir / "a.csv.manifest.json"));
  check_required(json::parse(slurp(dir / "a.csv.manifest.json")), "run_manifest.schema.json");
}

TEST_CASE("fit, search, select, coefficients and report end to end") {
  const auto dir = scratch("e2e");
  SimDesign d;
  d.n = 60;
  d.p = 6;
  d.p_star = 3;
  d.snr = 2.0;
  d.seed = 11;
  const auto inst = generate(d);
  save_dataset(inst.data, dir / "data.csv");
  {
    std::ofstream s(dir / "schema.json");
    s << canonical_schema(inst.data).to_json().dump(2);
  }
  const std::string draws = (dir / "fit").string();
  REQUIRE(call({"fit", "--data", (dir / "data.csv").string(), "--schema", (dir / "schema.json").string(),
                "--draws", "1500", "--burn", "500", "--seed", "3", "--out", draws}) == 0);
  const json manifest = json::parse(slurp(fs::path(draws) / "manifest.json"));
  CHECK(manifest.at("status") == "complete");
  check_required(manifest, "manifest.schema.json");

  const std::string cands = (dir / "candidates.json").string();
  REQUIRE(call({"search", "--draws", draws, "--sk", "3", "--out", cands}) == 0);
  const json cj = json::parse(slurp(cands));
  check_required(cj, "candidates.schema.json");
  CHECK(cj.at("total").get<int>() > 0);

  const std::string fam = (dir / "family.json").string();
  REQUIRE(call({"select", "--data", (dir / "data.csv").string(), "--candidates", cands, "--K", "3", "--eta", "1",
                "--epsilon", "0.1", "--seed", "5", "--out", fam}) == 0);
  const json fj = json::parse(slurp(fam));
  check_required(fj, "family.schema.json");
  CHECK(fj.at("s_small").size() <= fj.at("s_min").size());
  CHECK(fj.at("members").size() >= 1);

  std::string out;
  REQUIRE(call({"coefficients", "--draws", draws, "--subset", "0,1,2", "--level", "0.8"}, &out) == 0);
  const json coef = json::parse(out);
  check_required(coef, "coefficients.schema.json");

  const auto rep = dir / "report";
  REQUIRE(call({"report", "--family", fam, "--out", rep.string()}) == 0);
  CHECK(fs::exists(rep / "loss.csv"));
  CHECK(fs::exists(rep / "vi.csv"));
  CHECK(fs::exists(rep / "coefficients.csv"));
  CHECK(slurp(rep / "vi.csv").rfind("index,name,vi", 0) == 0);

  // A modified data file is rejected.
  {
    std::ofstream s(dir / "data.csv", std::ios::app);
    s << "999,1.0";
    for (int j = 0; j < d.p; ++j) s << ",0";
    s << "\n";
  }
  CHECK(call({"select", "--data", (dir / "data.csv").string(), "--candidates", cands, "--K", "3",
              "--out", (dir / "f2.json").string()}) == 1);
}
