#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  return diffnaps::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
