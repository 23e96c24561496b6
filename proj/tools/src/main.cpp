#include <iostream>

#include "v2v_cli/cli.hpp"

int main(int argc, char** argv) {
  return v2v::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
