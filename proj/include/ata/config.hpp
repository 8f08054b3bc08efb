#pragma once

#include <map>
#include <string>
#include <vector>

namespace ata::io {

// Flat key=value configuration with '#' comments. Every key is registered
// with a default and a doc string; unknown keys are rejected with the full
// list of valid keys.
class Config {
 public:
  struct KeySpec {
    std::string key;
    std::string def;
    std::string doc;
  };

  static const std::vector<KeySpec>& registry();
  static Config defaults();
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);

  const std::string& raw(const std::string& key) const;
  std::string str(const std::string& key) const { return raw(key); }
  long integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  // Fully resolved listing, loadable by from_text.
  std::string echo() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ata::io
