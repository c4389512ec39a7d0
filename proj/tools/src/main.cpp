#include <iostream>

#include "polarsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return polarsim::cli::dispatch(args, std::cout, std::cerr);
}
