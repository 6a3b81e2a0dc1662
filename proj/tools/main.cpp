#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  mvad::cli::tune_allocator();
  return mvad::cli::run(std::vector<std::string>(argv, argv + argc));
}
