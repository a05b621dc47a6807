#include "fader/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fader {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
  // Shortest decimal form that round-trips through parse_double.
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v || (std::isnan(back) && std::isnan(v))) return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || *end != '\0') throw ConfigError("not a real number: '" + s + "'");
  return v;
}

int64_t parse_int(const std::string& s) {
  const std::string t = trim(s);
  int64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError("not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError("not a boolean: '" + s + "'");
}

KvDoc KvDoc::parse(const std::string& text) {
  KvDoc doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments outside of values containing '#'? keep it simple:
    // a '#' starts a comment only at line start or after whitespace.
    size_t hash = line.find('#');
    if (hash != std::string::npos && (hash == 0 || line[hash - 1] == ' ' || line[hash - 1] == '\t'))
      line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      doc.sections_[section];  // allow empty sections
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside any [section]");
    auto& sec = doc.sections_[section];
    if (sec.count(key))
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + section + "." + key + "'");
    sec[key] = value;
  }
  return doc;
}

KvDoc KvDoc::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KvDoc::serialize() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [name, sec] : sections_) {
    if (!first) os << "\n";
    first = false;
    os << "[" << name << "]\n";
    for (const auto& [k, v] : sec) os << k << " = " << v << "\n";
  }
  return os.str();
}

void KvDoc::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write: " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed: " + path.string());
}

bool KvDoc::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.count(key) > 0;
}

bool KvDoc::has_section(const std::string& section) const { return sections_.count(section) > 0; }

void KvDoc::set(const std::string& section, const std::string& key, const std::string& value) {
  sections_[section][key] = value;
}
void KvDoc::set_int(const std::string& section, const std::string& key, int64_t value) {
  set(section, key, std::to_string(value));
}
void KvDoc::set_double(const std::string& section, const std::string& key, double value) {
  set(section, key, format_double(value));
}
void KvDoc::set_bool(const std::string& section, const std::string& key, bool value) {
  set(section, key, value ? "true" : "false");
}

std::string KvDoc::get(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  if (it == sections_.end() || !it->second.count(key))
    throw ConfigError("missing key '" + section + "." + key + "'");
  return it->second.at(key);
}

std::string KvDoc::get_or(const std::string& section, const std::string& key,
                          const std::string& dflt) const {
  return has(section, key) ? get(section, key) : dflt;
}

int64_t KvDoc::get_int(const std::string& section, const std::string& key) const {
  return parse_int(get(section, key));
}
double KvDoc::get_double(const std::string& section, const std::string& key) const {
  return parse_double(get(section, key));
}
bool KvDoc::get_bool(const std::string& section, const std::string& key) const {
  return parse_bool(get(section, key));
}

}  // namespace fader
