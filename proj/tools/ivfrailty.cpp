#include <iostream>
#include <string>
#include <vector>

#include "ivfrailty/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ivfrailty::run_cli(args, std::cout, std::cerr);
}
