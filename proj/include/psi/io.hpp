#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psi/geometry.hpp"
#include "psi/image.hpp"

namespace psi {

void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);

// Flat little-endian int16 array with a JSON sidecar (<name>.i16 +
// <name>.json holding {"shape": [...], "dtype": "int16le"}).
void write_i16_array(const std::filesystem::path& base_no_ext,
                     const std::vector<int16_t>& data,
                     const std::vector<int>& shape);
struct I16Array {
  std::vector<int16_t> data;
  std::vector<int> shape;
};
I16Array read_i16_array(const std::filesystem::path& base_no_ext);

// Flat key=value text config. Lines are `key=value`; blank lines and lines
// starting with '#' are skipped. Readers reject keys outside their schema.
class KvConfig {
public:
  KvConfig() = default;
  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_text(const std::string& text);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;  // throws ConfigError
  std::string get_or(const std::string& key, const std::string& def) const;
  long get_int(const std::string& key, long def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return kv_; }

  // Throws ConfigError listing any key not in `allowed`.
  void require_known_keys(const std::vector<std::string>& allowed) const;

  std::string to_text() const;
  void write_file(const std::filesystem::path& path) const;

private:
  std::map<std::string, std::string> kv_;
};

std::vector<Vec2> parse_vec2_list(const std::string& s);  // "x:y,x:y,..."
std::string format_vec2_list(const std::vector<Vec2>& v);
std::vector<int> parse_int_list(const std::string& s);
std::vector<Rgb> parse_palette(const std::string& s);  // "rrggbb,..."
std::string format_palette(const std::vector<Rgb>& p);

// Append-only JSONL metrics stream: {metric, value, split, step, seed,
// extra}.
class MetricsWriter {
public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const std::string& metric, double value,
             const std::string& split = "", int step = -1, int64_t seed = -1,
             const nlohmann::json& extra = {});

private:
  std::filesystem::path path_;
};

nlohmann::json read_jsonl(const std::filesystem::path& path);

// Visualizations.
RgbImage flow_to_rgb(const Grid<Vec2>& u, const Grid<uint8_t>* valid,
                     double max_mag);
RgbImage depth_to_gray(const Grid<double>& z, const Grid<uint8_t>* valid);
RgbImage mask_overlay(const RgbImage& base, const Image& mask01);
// Nearest-neighbor upscale for readable outputs.
RgbImage upscale(const RgbImage& img, int factor);

}  // namespace psi
