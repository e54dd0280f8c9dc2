#include <iostream>

#include "sim2real/cli.hpp"

int main(int argc, char** argv) {
  return sim2real::run_cli(argc, argv, std::cout, std::cerr);
}
