#include <iostream>
#include <string>
#include <vector>

#include "owc/cli/app.hpp"
#include "owc/heap.hpp"

int main(int argc, char** argv) {
  owc::retain_freed_memory();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return owc::cli::run(args, std::cout, std::cerr);
}
