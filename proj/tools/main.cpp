#include <vector>

#include "cli_lib.hpp"

int main(int argc, char** argv) {
  return esgvi::cli::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
