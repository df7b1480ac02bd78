#include "cyclelab/cli.hpp"

int main(int argc, char** argv) {
  return cyclelab::run_cli(std::vector<std::string>(argv, argv + argc));
}
