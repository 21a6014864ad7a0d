#include <iostream>

#include "mists_cli/cli.hpp"

int main(int argc, char** argv) {
  return mists::cli::run(argc, argv, std::cout, std::cerr);
}
