#include <iostream>

#include "biomstat_cli.hpp"

int main(int argc, char** argv) {
  return biomstat::cli::run_cli(argc, argv, std::cout, std::cerr);
}
