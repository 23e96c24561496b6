#pragma once

// key=value text records used for configuration blocks stored in checkpoints.

#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace v2v::detail {

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed config line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::size_t get_size(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : static_cast<std::size_t>(std::stoull(it->second));
}

inline double get_double(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : std::stod(it->second);
}

inline std::string get_string(const std::map<std::string, std::string>& kv, const std::string& key,
                              std::string fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace v2v::detail
