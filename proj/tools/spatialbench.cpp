#include <iostream>
#include <string>
#include <vector>

#include "spatial/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spatial::run_cli(args, std::cout, std::cerr);
}
