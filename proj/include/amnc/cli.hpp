#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace amnc {

/// Flat `key = value` file, `#` starts a comment. ConfigError on malformed lines.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);

/// Entry point of the amncut tool. Returns 0 on success, 1 when the command
/// itself failed (bad data, I/O, failed checks) and 2 for usage errors.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amnc
