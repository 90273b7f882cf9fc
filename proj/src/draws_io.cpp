#include "lmmsubset/draws_io.hpp"

#include <bit>
#include <cstring>

#include "lmmsubset/digest.hpp"
#include "lmmsubset/errors.hpp"

namespace lmmsubset {

static_assert(std::endian::native == std::endian::little, "draw files assume little-endian hosts");

void write_matrix_bin(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  std::string bytes(static_cast<std::size_t>(rm.size()) * sizeof(double), '\0');
  if (rm.size() > 0) std::memcpy(bytes.data(), rm.data(), bytes.size());
  write_file_atomic(path, bytes);
}

Eigen::MatrixXd read_matrix_bin(const std::filesystem::path& path, int rows, int cols) {
  const std::string bytes = read_file(path);
  const std::size_t expected = static_cast<std::size_t>(rows) * cols * sizeof(double);
  if (bytes.size() != expected)
    throw ValidationError("draw file " + path.string() + " has " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  if (expected > 0) std::memcpy(rm.data(), bytes.data(), expected);
  return rm;
}

void save_draws(const std::filesystem::path& dir, const PosteriorDraws& draws,
                const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = extra;
  manifest["T"] = draws.draws();
  manifest["p"] = draws.p();
  manifest["n"] = draws.n();
  manifest["format"] = "float64-le-rowmajor";
  manifest["diagnostics"] = draws.diagnostics.to_json();
  auto block = [&](const std::string& name, const Eigen::MatrixXd& m) {
    const std::string file = name + ".bin";
    write_matrix_bin(dir / file, m);
    manifest["blocks"][name] = {{"file", file},
                                {"rows", m.rows()},
                                {"cols", m.cols()},
                                {"sha256", sha256_file(dir / file)}};
  };
  // Manifest first, so a partially written directory is recognizable.
  write_file_atomic(dir / "manifest.json", manifest.dump(2));
  block("beta", draws.beta);
  block("u", draws.u);
  block("sigma2_eps", draws.sigma2_eps);
  block("sigma2_u", draws.sigma2_u);
  write_file_atomic(dir / "manifest.json", manifest.dump(2));
}

PosteriorDraws load_draws(const std::filesystem::path& dir, nlohmann::json* manifest_out) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("draws manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!manifest.contains("blocks")) throw ValidationError("draws manifest has no blocks");
  auto block = [&](const std::string& name) {
    const auto& b = manifest.at("blocks").at(name);
    const auto path = dir / b.at("file").get<std::string>();
    if (b.contains("sha256") && sha256_file(path) != b.at("sha256").get<std::string>())
      throw ValidationError("draw file " + path.string() + " does not match its manifest digest");
    return read_matrix_bin(path, b.at("rows").get<int>(), b.at("cols").get<int>());
  };
  PosteriorDraws d;
  d.beta = block("beta");
  d.u = block("u");
  d.sigma2_eps = block("sigma2_eps").col(0);
  d.sigma2_u = block("sigma2_u").col(0);
  if (manifest.contains("diagnostics")) {
    const auto& dj = manifest["diagnostics"];
    const auto ess = dj.value("ess_beta", std::vector<double>{});
    d.diagnostics.ess_beta = Eigen::Map<const Eigen::VectorXd>(ess.data(), static_cast<int>(ess.size()));
    d.diagnostics.ess_sigma2_eps = dj.value("ess_sigma2_eps", 0.0);
    d.diagnostics.ess_sigma2_u = dj.value("ess_sigma2_u", 0.0);
  }
  d.validate();
  if (manifest_out) *manifest_out = std::move(manifest);
  return d;
}

}  // namespace lmmsubset
