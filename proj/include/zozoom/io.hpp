#ifndef ZOZOOM_IO_HPP
#define ZOZOOM_IO_HPP

#include <filesystem>
#include <string>

#include "json.hpp"

namespace zozoom {

nlohmann::json read_json_file(const std::filesystem::path &path);

// Writes j.dump() followed by a newline. Output is a pure function of j.
void write_json_file(const std::filesystem::path &path,
                     const nlohmann::json &j);

void write_text_file(const std::filesystem::path &path,
                     const std::string &text);

} // namespace zozoom

#endif // ZOZOOM_IO_HPP
