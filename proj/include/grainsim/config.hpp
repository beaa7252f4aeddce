#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grainsim/errors.hpp"
#include "grainsim/math.hpp"

namespace grainsim {

// Scene/task files use a small sectioned key/value text format:
//
//   # comment
//   [task]
//   horizon = 120
//   gravity = [0, -9.8, 0]
//   [tool.primitive]        # sections may repeat; order is preserved
//   type = box
//
// Numbers are plain doubles, arrays are bracketed comma lists, booleans
// are true/false, everything else is a bare string. Lengths are meters
// and angles are degrees in files (radians internally).

struct ConfigValue {
  std::string raw;
  int line = 0;
  std::string key;

  double as_double() const;
  int as_int() const;
  bool as_bool() const;
  const std::string& as_string() const { return raw; }
  std::vector<double> as_doubles() const;
  Vec3 as_vec3() const;
};

struct ConfigSection {
  std::string path;  // dotted, e.g. "tool.primitive"
  int line = 0;
  std::vector<ConfigValue> entries;

  const ConfigValue* find(const std::string& key) const;
  const ConfigValue& at(const std::string& key) const;
  double get_double(const std::string& key, std::optional<double> def = {}) const;
  int get_int(const std::string& key, std::optional<int> def = {}) const;
  bool get_bool(const std::string& key, bool def) const;
  std::string get_string(const std::string& key, std::optional<std::string> def = {}) const;
  Vec3 get_vec3(const std::string& key, std::optional<Vec3> def = {}) const;
  std::vector<double> get_doubles(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }
};

struct ConfigDoc {
  std::string source_name;
  std::vector<ConfigSection> sections;

  std::vector<const ConfigSection*> all(const std::string& path) const;
  const ConfigSection* find(const std::string& path) const;  // last match or null
  const ConfigSection& at(const std::string& path) const;

  /// Overlay another document: matching sections get keys replaced or
  /// appended; unmatched sections are appended whole.
  void merge(const ConfigDoc& overrides);
};

ConfigDoc parse_config(const std::string& text, const std::string& source_name = "<config>");
ConfigDoc parse_config_file(const std::string& path);

}  // namespace grainsim
