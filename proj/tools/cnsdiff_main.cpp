#include <string>
#include <vector>

#include "cnsdiff/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cnsdiff::run_command(args);
}
