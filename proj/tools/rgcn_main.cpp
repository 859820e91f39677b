#include <string>
#include <vector>

#include "rgcn/cli.hpp"

int main(int argc, char** argv) {
  return rgcn::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
