#include "socnav/kv_file.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "socnav/error.hpp"
#include "socnav/world.hpp"

namespace socnav {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool parse_double_token(std::string_view tok, double& out) {
  tok = trim(tok);
  if (tok.empty()) return false;
  std::string buf(tok);
  char* end = nullptr;
  errno = 0;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size() && errno != ERANGE && std::isfinite(out);
}

bool parse_int_token(std::string_view tok, std::int64_t& out) {
  tok = trim(tok);
  if (tok.empty()) return false;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Splits "(a,b,c) (d,e,f)" into the inner comma-separated groups.
bool split_tuples(std::string_view s, std::vector<std::vector<std::string_view>>& out) {
  out.clear();
  std::size_t i = 0;
  while (true) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i == s.size()) return true;
    if (s[i] != '(') return false;
    const auto close = s.find(')', i);
    if (close == std::string_view::npos) return false;
    std::vector<std::string_view> parts;
    std::string_view inner = s.substr(i + 1, close - i - 1);
    std::size_t start = 0;
    while (true) {
      const auto comma = inner.find(',', start);
      parts.push_back(inner.substr(start, comma == std::string_view::npos ? inner.size() - start
                                                                          : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    out.push_back(std::move(parts));
    i = close + 1;
  }
}

}  // namespace

KvDocument KvDocument::parse(std::string_view text, const std::string& source) {
  KvDocument doc(source);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                                          : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(source, line_no, "expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    doc.entries_.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return doc;
}

KvDocument KvDocument::load(const std::string& path) {
  return parse(read_text_file(path), path);
}

void KvDocument::add(std::string key, std::string value) {
  entries_.push_back({std::move(key), std::move(value), 0});
}

void KvDocument::add(std::string key, double value) {
  add(std::move(key), format_double(value));
}

const KvDocument::Entry* KvDocument::find(std::string_view key) const {
  const Entry* found = nullptr;
  for (const auto& e : entries_) {
    if (e.key == key) found = &e;  // last occurrence wins
  }
  return found;
}

bool KvDocument::has(std::string_view key) const { return find(key) != nullptr; }

std::vector<const KvDocument::Entry*> KvDocument::get_all(std::string_view key) const {
  std::vector<const Entry*> out;
  for (const auto& e : entries_) {
    if (e.key == key) out.push_back(&e);
  }
  return out;
}

std::string KvDocument::get_string(std::string_view key, const std::string& fallback) const {
  const auto* e = find(key);
  return e ? e->value : fallback;
}

std::string KvDocument::require_string(std::string_view key) const {
  const auto* e = find(key);
  if (!e) throw ConfigError(source_ + ": missing key '" + std::string(key) + "'");
  return e->value;
}

double KvDocument::get_double(std::string_view key, double fallback) const {
  const auto* e = find(key);
  return e ? parse_double(*e) : fallback;
}

double KvDocument::require_double(std::string_view key) const {
  const auto* e = find(key);
  if (!e) throw ConfigError(source_ + ": missing key '" + std::string(key) + "'");
  return parse_double(*e);
}

std::int64_t KvDocument::get_int(std::string_view key, std::int64_t fallback) const {
  const auto* e = find(key);
  return e ? parse_int(*e) : fallback;
}

bool KvDocument::get_bool(std::string_view key, bool fallback) const {
  const auto* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  throw ParseError(source_, e->line, "expected boolean for '" + e->key + "'");
}

void KvDocument::reject_unknown(std::initializer_list<std::string_view> known) const {
  for (const auto& e : entries_) {
    if (std::find(known.begin(), known.end(), e.key) == known.end()) {
      throw ConfigError(source_ + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
  }
}

std::string KvDocument::to_string() const {
  std::string out;
  for (const auto& e : entries_) {
    out += e.key;
    out += " = ";
    out += e.value;
    out += '\n';
  }
  return out;
}

void KvDocument::save(const std::string& path) const { write_text_file(path, to_string()); }

double KvDocument::parse_double(const Entry& e) const {
  double v = 0.0;
  if (!parse_double_token(e.value, v)) {
    throw ParseError(source_, e.line, "expected a finite number for '" + e.key + "'");
  }
  return v;
}

std::int64_t KvDocument::parse_int(const Entry& e) const {
  std::int64_t v = 0;
  if (!parse_int_token(e.value, v)) {
    throw ParseError(source_, e.line, "expected an integer for '" + e.key + "'");
  }
  return v;
}

std::vector<Vec2> KvDocument::parse_points(const Entry& e) const {
  std::vector<std::vector<std::string_view>> tuples;
  if (!split_tuples(e.value, tuples)) {
    throw ParseError(source_, e.line, "expected a list of (x,y) points for '" + e.key + "'");
  }
  std::vector<Vec2> pts;
  for (const auto& t : tuples) {
    Vec2 p;
    if (t.size() != 2 || !parse_double_token(t[0], p.x) || !parse_double_token(t[1], p.y)) {
      throw ParseError(source_, e.line, "malformed point in '" + e.key + "'");
    }
    pts.push_back(p);
  }
  return pts;
}

std::vector<std::vector<std::int64_t>> KvDocument::parse_int_tuples(const Entry& e) const {
  std::vector<std::vector<std::string_view>> tuples;
  if (!split_tuples(e.value, tuples)) {
    throw ParseError(source_, e.line, "expected a list of integer tuples for '" + e.key + "'");
  }
  std::vector<std::vector<std::int64_t>> out;
  for (const auto& t : tuples) {
    std::vector<std::int64_t> row;
    for (auto tok : t) {
      std::int64_t v = 0;
      if (!parse_int_token(tok, v)) {
        throw ParseError(source_, e.line, "malformed integer tuple in '" + e.key + "'");
      }
      row.push_back(v);
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::int64_t> KvDocument::parse_int_list(const Entry& e) const {
  std::vector<std::int64_t> out;
  std::istringstream in(e.value);
  std::string tok;
  while (in >> tok) {
    std::int64_t v = 0;
    if (!parse_int_token(tok, v)) {
      throw ParseError(source_, e.line, "malformed integer list in '" + e.key + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": file not found or unreadable");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError(path + ": write failed");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

std::uint64_t file_digest(const std::string& path) { return fnv1a64(read_text_file(path)); }

}  // namespace socnav
