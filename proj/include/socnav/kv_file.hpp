#pragma once

// Line-oriented `key = value` documents shared by map files, parameter files,
// camera/model/train/eval configs and run manifests.
//
//   # comment
//   name = hotel
//   walkable = (0,0) (20,0) (20,20) (0,20)
//   obstacle = (5,5) (7,5) (7,7) (5,7)
//
// Keys may repeat; `get_all` returns every occurrence in file order.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace socnav {

struct Vec2;

class KvDocument {
 public:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };

  KvDocument() = default;
  explicit KvDocument(std::string source) : source_(std::move(source)) {}

  static KvDocument parse(std::string_view text, const std::string& source);
  static KvDocument load(const std::string& path);

  const std::string& source() const { return source_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void add(std::string key, std::string value);
  void add(std::string key, double value);

  bool has(std::string_view key) const;
  const Entry* find(std::string_view key) const;
  std::vector<const Entry*> get_all(std::string_view key) const;

  std::string get_string(std::string_view key, const std::string& fallback) const;
  std::string require_string(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  double require_double(std::string_view key) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  // Throws ConfigError naming the first key not in `known` (typo guard).
  void reject_unknown(std::initializer_list<std::string_view> known) const;

  // Canonical text form; byte-stable for a given entry sequence.
  std::string to_string() const;
  void save(const std::string& path) const;

  // Value-level parsers; errors carry the entry's source line.
  double parse_double(const Entry& e) const;
  std::int64_t parse_int(const Entry& e) const;
  std::vector<Vec2> parse_points(const Entry& e) const;
  std::vector<std::vector<std::int64_t>> parse_int_tuples(const Entry& e) const;
  std::vector<std::int64_t> parse_int_list(const Entry& e) const;

 private:
  std::string source_;
  std::vector<Entry> entries_;
};

// Shortest round-trip decimal form of a double ("%.17g").
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

// 64-bit FNV-1a, used for config/file digests in manifests and checkpoints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex_digest(std::uint64_t digest);
std::uint64_t file_digest(const std::string& path);

}  // namespace socnav
