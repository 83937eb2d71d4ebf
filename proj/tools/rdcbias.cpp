#include <iostream>
#include <string>
#include <vector>

#include "rdcbias/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rdcbias::run_cli(args, std::cout, std::cerr);
}
