#include <iostream>

#include "stabcp/cli.hpp"

int main(int argc, char** argv) {
  return stabcp::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
