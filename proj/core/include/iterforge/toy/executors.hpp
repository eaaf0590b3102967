#pragma once

#include <filesystem>

namespace iterforge::toy {

// Reference executors speaking the workspace protocol. Each reads
// <workspace>/in, writes <workspace>/out and returns the process exit code.
//
// Params (in/config.json "params"):
//   dim       feature dimension, default 8
//   strategy  mine only: "uncertainty" (default) or "random"
//   seed      mine only, random strategy seed, default 0
int toy_train(const std::filesystem::path& workspace);
int toy_mine(const std::filesystem::path& workspace);
int toy_infer(const std::filesystem::path& workspace);

// Dispatches on the "kind" of in/config.json.
int run_toy_executor(const std::filesystem::path& workspace);

// Writes a package directory (manifest.json) whose entry runs |binary|.
void write_toy_package(const std::filesystem::path& package_dir,
                       const std::filesystem::path& binary, const std::string& name = "toy",
                       const std::string& version = "1.0.0");

}  // namespace iterforge::toy
