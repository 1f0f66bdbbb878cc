#pragma once

#include <string>
#include <vector>

namespace texanom::cli {

enum ExitCode : int { ok = 0, usage_error = 2, runtime_error = 3 };

// Entry point shared by the executable and in-process tests. args[0] is the
// program name. Subcommands: train, score, calibrate, evaluate, reconstruct.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace texanom::cli
