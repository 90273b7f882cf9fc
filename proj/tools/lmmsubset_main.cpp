#include <string>
#include <vector>

#include "lmmsubset/cli.hpp"

int main(int argc, char** argv) {
  return lmmsubset::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
