#include "zozoom/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zozoom {

nlohmann::json read_json_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error &e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " +
                             e.what());
  }
}

void write_json_file(const std::filesystem::path &path,
                     const nlohmann::json &j) {
  write_text_file(path, j.dump() + "\n");
}

void write_text_file(const std::filesystem::path &path,
                     const std::string &text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

} // namespace zozoom
