#include "grainsim/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace grainsim {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& src, int line, const std::string& msg) {
  std::ostringstream os;
  os << src << ":" << line << ": " << msg;
  throw ConfigError(os.str());
}

double parse_double(const ConfigValue& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v.raw, &used);
    if (used != v.raw.size()) throw std::invalid_argument("");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("field '" + v.key + "' (line " + std::to_string(v.line) +
                      "): expected a number, got '" + v.raw + "'");
  }
}

}  // namespace

double ConfigValue::as_double() const { return parse_double(*this); }

int ConfigValue::as_int() const {
  const double d = parse_double(*this);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw ConfigError("field '" + key + "' (line " + std::to_string(line) +
                      "): expected an integer, got '" + raw + "'");
  return i;
}

bool ConfigValue::as_bool() const {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ConfigError("field '" + key + "' (line " + std::to_string(line) +
                    "): expected true/false, got '" + raw + "'");
}

std::vector<double> ConfigValue::as_doubles() const {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
    throw ConfigError("field '" + key + "' (line " + std::to_string(line) +
                      "): expected a bracketed array, got '" + raw + "'");
  std::vector<double> out;
  std::string body = raw.substr(1, raw.size() - 2);
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    ConfigValue v{item, line, key};
    out.push_back(parse_double(v));
  }
  return out;
}

Vec3 ConfigValue::as_vec3() const {
  const auto v = as_doubles();
  if (v.size() != 3)
    throw ConfigError("field '" + key + "' (line " + std::to_string(line) +
                      "): expected 3 components, got " + std::to_string(v.size()));
  return Vec3(v[0], v[1], v[2]);
}

const ConfigValue* ConfigSection::find(const std::string& key) const {
  const ConfigValue* hit = nullptr;
  for (const auto& e : entries)
    if (e.key == key) hit = &e;  // last assignment wins
  return hit;
}

const ConfigValue& ConfigSection::at(const std::string& key) const {
  if (const ConfigValue* v = find(key)) return *v;
  throw ConfigError("section [" + path + "] (line " + std::to_string(line) +
                    "): missing required field '" + key + "'");
}

double ConfigSection::get_double(const std::string& key, std::optional<double> def) const {
  const ConfigValue* v = find(key);
  if (!v) {
    if (def) return *def;
    return at(key).as_double();
  }
  return v->as_double();
}

int ConfigSection::get_int(const std::string& key, std::optional<int> def) const {
  const ConfigValue* v = find(key);
  if (!v) {
    if (def) return *def;
    return at(key).as_int();
  }
  return v->as_int();
}

bool ConfigSection::get_bool(const std::string& key, bool def) const {
  const ConfigValue* v = find(key);
  return v ? v->as_bool() : def;
}

std::string ConfigSection::get_string(const std::string& key,
                                      std::optional<std::string> def) const {
  const ConfigValue* v = find(key);
  if (!v) {
    if (def) return *def;
    return at(key).as_string();
  }
  return v->as_string();
}

Vec3 ConfigSection::get_vec3(const std::string& key, std::optional<Vec3> def) const {
  const ConfigValue* v = find(key);
  if (!v) {
    if (def) return *def;
    return at(key).as_vec3();
  }
  return v->as_vec3();
}

std::vector<double> ConfigSection::get_doubles(const std::string& key) const {
  return at(key).as_doubles();
}

std::vector<const ConfigSection*> ConfigDoc::all(const std::string& path) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections)
    if (s.path == path) out.push_back(&s);
  return out;
}

const ConfigSection* ConfigDoc::find(const std::string& path) const {
  const ConfigSection* hit = nullptr;
  for (const auto& s : sections)
    if (s.path == path) hit = &s;
  return hit;
}

const ConfigSection& ConfigDoc::at(const std::string& path) const {
  if (const ConfigSection* s = find(path)) return *s;
  throw ConfigError(source_name + ": missing required section [" + path + "]");
}

void ConfigDoc::merge(const ConfigDoc& overrides) {
  for (const auto& os : overrides.sections) {
    ConfigSection* target = nullptr;
    for (auto& s : sections)
      if (s.path == os.path) target = &s;
    if (!target) {
      sections.push_back(os);
      continue;
    }
    for (const auto& e : os.entries) {
      bool replaced = false;
      for (auto& t : target->entries)
        if (t.key == e.key) {
          t.raw = e.raw;
          replaced = true;
        }
      if (!replaced) target->entries.push_back(e);
    }
  }
}

ConfigDoc parse_config(const std::string& text, const std::string& source_name) {
  ConfigDoc doc;
  doc.source_name = source_name;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  ConfigSection* cur = nullptr;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(source_name, lineno, "unterminated section header");
      ConfigSection s;
      s.path = trim(line.substr(1, line.size() - 2));
      if (s.path.empty()) fail(source_name, lineno, "empty section name");
      s.line = lineno;
      doc.sections.push_back(std::move(s));
      cur = &doc.sections.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(source_name, lineno, "expected 'key = value' or '[section]'");
    if (!cur) fail(source_name, lineno, "key/value outside any section");
    ConfigValue v;
    v.key = trim(line.substr(0, eq));
    v.raw = trim(line.substr(eq + 1));
    v.line = lineno;
    if (v.key.empty()) fail(source_name, lineno, "empty key");
    cur->entries.push_back(std::move(v));
  }
  return doc;
}

ConfigDoc parse_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace grainsim
