#include <iostream>
#include <string>
#include <vector>

#include "dctgen/cli.hpp"

int main(int argc, char** argv) {
  return dctgen::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
