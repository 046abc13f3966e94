#include <iostream>

#include "s3a/cli.hpp"

int main(int argc, char** argv) {
  return s3a::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
