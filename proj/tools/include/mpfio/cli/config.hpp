#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mpfio/error.hpp"

namespace mpfio::cli {

/// Bad or missing config field. line is 0 when the field is absent.
class ConfigError : public Error {
 public:
  ConfigError(std::string source, int line, std::string field, const std::string& message);

  const std::string& source() const { return source_; }
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string source_;
  int line_;
  std::string field_;
};

/// Flat `key = value` text. `[section]` headers prefix the keys that follow
/// with `section.`; `#` starts a comment. Keys are unique after prefixing.
class Config {
 public:
  static Config parse(std::string_view text, std::string source = "<config>");
  static Config load(const std::string& path);

  const std::string& source() const { return source_; }
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  int line(const std::string& key) const;
  std::vector<std::string> keys() const;

  void set(const std::string& key, std::string value);

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string source_;
  std::map<std::string, Entry> entries_;
};

/// Lookup through a chain of scopes: for key "grid.points" and scopes
/// {"h1l1_sweep@coarse", "h1l1_sweep"} it tries "h1l1_sweep@coarse.grid.points",
/// "h1l1_sweep.grid.points", then "grid.points". Every key read is recorded
/// so that unread fields can be reported.
class View {
 public:
  View(const Config& config, std::vector<std::string> scopes, std::set<std::string>* used = nullptr);

  const Config& config() const { return *config_; }
  bool has(const std::string& key) const;
  /// Fully qualified key that a lookup resolves to (empty if absent).
  std::string where(const std::string& key) const;

  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  long long integer(const std::string& key) const;
  long long integer(const std::string& key, long long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const;
  std::vector<int> integers(const std::string& key) const;
  std::vector<int> integers(const std::string& key, std::vector<int> fallback) const;

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;

 private:
  std::vector<std::string> candidates(const std::string& key) const;

  const Config* config_;
  std::vector<std::string> scopes_;
  std::set<std::string>* used_;
};

std::vector<std::string> split_list(std::string_view text);
std::string trim(std::string_view text);

}  // namespace mpfio::cli
