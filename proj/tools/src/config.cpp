#include "mpfio/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace mpfio::cli {

namespace {

std::string format(const std::string& source, int line, const std::string& field, const std::string& message) {
  std::string where = source;
  if (line > 0) where += ":" + std::to_string(line);
  return where + ": field '" + field + "': " + message;
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '@' || c == '-')) return false;
  return key.find("..") == std::string::npos;
}

}  // namespace

ConfigError::ConfigError(std::string source, int line, std::string field, const std::string& message)
    : Error(format(source, line, field, message)),
      source_(std::move(source)),
      line_(line),
      field_(std::move(field)) {}

std::string trim(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  return std::string(text.substr(b, e - b));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = text.find(',', start);
    auto item = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Config Config::parse(std::string_view text, std::string source) {
  Config c;
  c.source_ = std::move(source);
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    auto hash = raw.find('#');
    std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(c.source_, lineno, line, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!section.empty() && !valid_key(section)) throw ConfigError(c.source_, lineno, section, "bad section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(c.source_, lineno, line, "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    if (!valid_key(key)) throw ConfigError(c.source_, lineno, key, "bad key");
    if (value.empty()) throw ConfigError(c.source_, lineno, key, "empty value");
    if (c.has(key))
      throw ConfigError(c.source_, lineno, key, "duplicate key (first set on line " + std::to_string(c.line(key)) + ")");
    c.entries_[key] = {value, lineno};
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "<file>", "cannot read config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

const std::string& Config::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "missing");
  return it->second.value;
}

int Config::line(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void Config::set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

void Config::fail(const std::string& key, const std::string& message) const {
  throw ConfigError(source_, line(key), key, message);
}

// ---------------------------------------------------------------- View

View::View(const Config& config, std::vector<std::string> scopes, std::set<std::string>* used)
    : config_(&config), scopes_(std::move(scopes)), used_(used) {}

std::vector<std::string> View::candidates(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& s : scopes_)
    if (!s.empty()) out.push_back(s + "." + key);
  out.push_back(key);
  return out;
}

std::string View::where(const std::string& key) const {
  auto cs = candidates(key);
  std::string hit;
  for (const auto& c : cs)
    if (config_->has(c)) {
      if (used_) used_->insert(c);
      if (hit.empty()) hit = c;
    }
  return hit;
}

bool View::has(const std::string& key) const { return !where(key).empty(); }

void View::fail(const std::string& key, const std::string& message) const {
  auto w = where(key);
  config_->fail(w.empty() ? key : w, message);
}

std::string View::text(const std::string& key) const {
  auto w = where(key);
  if (w.empty()) config_->fail(key, "missing");
  return config_->raw(w);
}

std::string View::text(const std::string& key, const std::string& fallback) const {
  auto w = where(key);
  return w.empty() ? fallback : config_->raw(w);
}

double View::number(const std::string& key) const {
  auto s = text(key);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected a number, got '" + s + "'");
  return v;
}

double View::number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

long long View::integer(const std::string& key) const {
  auto s = text(key);
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected an integer, got '" + s + "'");
  return v;
}

long long View::integer(const std::string& key, long long fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool View::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  auto s = text(key);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  fail(key, "expected true or false, got '" + s + "'");
}

std::vector<std::string> View::list(const std::string& key) const {
  auto items = split_list(text(key));
  if (items.empty()) fail(key, "empty list");
  return items;
}

std::vector<double> View::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : list(key)) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected numbers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<double> View::numbers(const std::string& key, std::vector<double> fallback) const {
  return has(key) ? numbers(key) : fallback;
}

std::vector<int> View::integers(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : list(key)) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key, "expected integers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<int> View::integers(const std::string& key, std::vector<int> fallback) const {
  return has(key) ? integers(key) : fallback;
}

}  // namespace mpfio::cli
