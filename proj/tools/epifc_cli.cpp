#include <iostream>

#include "epifc/commands.hpp"

int main(int argc, char** argv) {
  epifc::tune_allocator();
  return epifc::run_cli(argc, argv, std::cout, std::cerr);
}
