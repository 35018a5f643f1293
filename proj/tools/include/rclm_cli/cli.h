#ifndef RCLM_CLI_CLI_H_
#define RCLM_CLI_CLI_H_

#include <ostream>
#include <string>
#include <vector>

namespace rclm::cli {

// Runs one subcommand. args excludes the program name. Results go to `out`,
// diagnostics and usage text to `err`. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rclm::cli

#endif  // RCLM_CLI_CLI_H_
