#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "harness/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::map<std::string, std::string> env;
  if (const char* seed = std::getenv("HARNESS_SEED")) env["HARNESS_SEED"] = seed;
  return harness::dispatch(args, env, std::cout, std::cerr);
}
