#ifndef ZOZOOM_CLI_HPP
#define ZOZOOM_CLI_HPP

#include <string>
#include <vector>

#include "zozoom/tensor.hpp"

namespace zozoom {

/// Exit codes shared by every subcommand.
inline constexpr int kExitSuccess = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNoSuccess = 2;

/// Entry point of the `zozoom` tool. args[0] is the program name.
int run_cli(const std::vector<std::string> &args);

/// Parses "HxWxC" (or "HxW", channels 1).
Shape parse_shape(const std::string &s);

} // namespace zozoom

#endif // ZOZOOM_CLI_HPP
