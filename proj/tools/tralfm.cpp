#include <iostream>
#include <string>
#include <vector>

#include "tralfm/cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return tralfm::cli::dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
