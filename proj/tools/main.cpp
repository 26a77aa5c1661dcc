#include <iostream>
#include <vector>

#include "echolab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return echolab::pipeline::run_cli(args, std::cout, std::cerr);
}
