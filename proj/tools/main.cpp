#include <iostream>
#include <string>
#include <vector>

#include "dvsdrive/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dvsdrive::run_cli(args, std::cout, std::cerr);
}
