#include <iostream>
#include <string>
#include <vector>

#include "cedecomp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return cedecomp::run_cli(args, std::cout, std::cerr);
}
