#include <iostream>
#include <string>
#include <vector>

#include "rrmar/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rrmar::run_cli(args, std::cout, std::cerr);
}
