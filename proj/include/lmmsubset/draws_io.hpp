#pragma once

#include <filesystem>

#include "json.hpp"
#include "lmmsubset/posterior.hpp"

namespace lmmsubset {

// Draw directory layout:
//   manifest.json      {T, p, n, seed, config, blocks: {name: {file, rows, cols}}, ...}
//   beta.bin, u.bin, sigma2_eps.bin, sigma2_u.bin
//                      row-major little-endian float64, one row per draw
// y_tilde is not stored; it is regenerated from the stored blocks and the
// predictive seed recorded in the manifest.

void write_matrix_bin(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_bin(const std::filesystem::path& path, int rows, int cols);

/// Writes the parameter blocks and a manifest. `extra` is merged into the
/// manifest (config, digests, command line, ...).
void save_draws(const std::filesystem::path& dir, const PosteriorDraws& draws,
                const nlohmann::json& extra);

/// Loads parameter blocks (without y_tilde) and returns the manifest.
PosteriorDraws load_draws(const std::filesystem::path& dir, nlohmann::json* manifest = nullptr);

}  // namespace lmmsubset
