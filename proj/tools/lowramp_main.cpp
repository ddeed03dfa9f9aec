#include "lowramp/cli.hpp"

int main(int argc, char** argv) {
  return lowramp::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
