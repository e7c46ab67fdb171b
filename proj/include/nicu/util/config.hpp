#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nicu::util {

// "key = value" lines, '#' comments, blank lines ignored. Keys may use '_' or
// '-' and are returned in flag form ("queue_capacity" -> "queue-capacity").
inline std::vector<std::pair<std::string, std::string>> parse_config(const std::string& text,
                                                                      const std::string& origin) {
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t start = 0;
  int lineno = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(where + ": empty key");
    std::replace(key.begin(), key.end(), '_', '-');
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.string());
}

// Appends "--key=value" for every config entry whose flag is not already on
// the command line, so explicit flags win.
inline std::vector<std::string> merge_config(std::vector<std::string> args,
                                             const std::vector<std::pair<std::string, std::string>>& cfg) {
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg) {
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) extra.push_back(flag + "=" + value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace nicu::util
