#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace asdcap::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kProvider = 3,
};

/// Entry point of the `asdcap` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace asdcap::cli
