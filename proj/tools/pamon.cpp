#include <csignal>
#include <iostream>

#include "pamon/cli.hpp"

int main(int argc, char** argv) {
  // Write errors on a closed pipe surface as stream failures instead.
  std::signal(SIGPIPE, SIG_IGN);
  return pamon::run_cli(argc, argv, std::cout, std::cerr);
}
