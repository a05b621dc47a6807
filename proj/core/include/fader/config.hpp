#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fader/errors.hpp"

namespace fader {

// Sectioned UTF-8 key-value document:
//
//   [section]
//   key = value        # comment
//
// Serialization is canonical (sections and keys sorted), so equal documents
// produce byte-identical text. This one format backs run configs, dataset
// manifests, eval reports and checkpoint config blocks.
class KvDoc {
 public:
  using Section = std::map<std::string, std::string>;

  static KvDoc parse(const std::string& text);
  static KvDoc load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  void set_int(const std::string& section, const std::string& key, int64_t value);
  void set_double(const std::string& section, const std::string& key, double value);
  void set_bool(const std::string& section, const std::string& key, bool value);

  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key, const std::string& dflt) const;
  int64_t get_int(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key) const;
  bool get_bool(const std::string& section, const std::string& key) const;

  const std::map<std::string, Section>& sections() const { return sections_; }

  bool operator==(const KvDoc& o) const { return sections_ == o.sections_; }

 private:
  std::map<std::string, Section> sections_;
};

// Round-trips doubles exactly (shortest representation that parses back to
// the same value), keeping serialized documents deterministic.
std::string format_double(double v);
double parse_double(const std::string& s);
int64_t parse_int(const std::string& s);
bool parse_bool(const std::string& s);

}  // namespace fader
