#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lmmsubset::cli {

// Runs one subcommand; args exclude the program name. Exit codes: 0 success,
// 1 validation or usage error, 2 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args);

}  // namespace lmmsubset::cli
