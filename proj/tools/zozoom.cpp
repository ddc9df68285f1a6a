#include <string>
#include <vector>

#include "zozoom/cli.hpp"

int main(int argc, char **argv) {
  return zozoom::run_cli(std::vector<std::string>(argv, argv + argc));
}
