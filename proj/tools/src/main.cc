#include <iostream>

#include "rclm_cli/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rclm::cli::run(args, std::cout, std::cerr);
}
