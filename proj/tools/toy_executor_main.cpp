#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "iterforge/toy/executors.hpp"

int main(int argc, char** argv) {
  std::filesystem::path workspace = std::filesystem::current_path();
  if (const char* env = std::getenv("ITERFORGE_WORKSPACE"); env && *env) workspace = env;
  if (argc > 1) workspace = argv[1];
  return iterforge::toy::run_toy_executor(workspace);
}
