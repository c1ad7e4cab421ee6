#include "psi/io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "psi/detail/binary.hpp"

namespace psi {

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  auto os = detail::open_out(path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  detail::write_bytes(os, img.px.data(), img.px.size());
  if (!os) throw IoError("write failed: " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw IoError("not a P6 ppm: " + path.string());
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (maxval != 255) throw IoError("unsupported ppm maxval");
  is.get();  // single whitespace after the header
  RgbImage img(w, h);
  detail::read_bytes(is, img.px.data(), img.px.size());
  return img;
}

void write_i16_array(const std::filesystem::path& base_no_ext,
                     const std::vector<int16_t>& data,
                     const std::vector<int>& shape) {
  size_t expect = 1;
  for (int d : shape) expect *= static_cast<size_t>(d);
  if (expect != data.size()) throw ShapeError("i16 array shape mismatch");
  auto os = detail::open_out(base_no_ext.string() + ".i16");
  detail::write_bytes(os, data.data(), data.size() * sizeof(int16_t));
  nlohmann::json j{{"shape", shape}, {"dtype", "int16le"}};
  std::ofstream js(base_no_ext.string() + ".json");
  js << j.dump(2) << "\n";
  if (!js) throw IoError("sidecar write failed");
}

I16Array read_i16_array(const std::filesystem::path& base_no_ext) {
  std::ifstream js(base_no_ext.string() + ".json");
  if (!js) throw IoError("missing sidecar: " + base_no_ext.string());
  nlohmann::json j = nlohmann::json::parse(js);
  if (j.at("dtype").get<std::string>() != "int16le")
    throw IoError("unsupported dtype in sidecar");
  I16Array out;
  out.shape = j.at("shape").get<std::vector<int>>();
  size_t n = 1;
  for (int d : out.shape) n *= static_cast<size_t>(d);
  out.data.resize(n);
  auto is = detail::open_in(base_no_ext.string() + ".i16");
  detail::read_bytes(is, out.data.data(), n * sizeof(int16_t));
  return out;
}

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

KvConfig KvConfig::parse_text(const std::string& text) {
  KvConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        " is not key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty config key");
    if (cfg.kv_.count(key)) throw ConfigError("duplicate config key: " + key);
    cfg.kv_[key] = value;
  }
  return cfg;
}

bool KvConfig::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string KvConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing config key: " + key);
  return it->second;
}

std::string KvConfig::get_or(const std::string& key,
                             const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

long KvConfig::get_int(const std::string& key, long def) const {
  if (!has(key)) return def;
  try {
    return std::stol(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer");
  }
}

double KvConfig::get_double(const std::string& key, double def) const {
  if (!has(key)) return def;
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number");
  }
}

bool KvConfig::get_bool(const std::string& key, bool def) const {
  if (!has(key)) return def;
  std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + " is not a boolean");
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t def) const {
  if (!has(key)) return def;
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an unsigned integer");
  }
}

void KvConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

void KvConfig::require_known_keys(
    const std::vector<std::string>& allowed) const {
  for (const auto& [k, v] : kv_) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown config key: " + k);
  }
}

std::string KvConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : kv_) out += k + "=" + v + "\n";
  return out;
}

void KvConfig::write_file(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config: " + path.string());
  os << to_text();
}

std::vector<Vec2> parse_vec2_list(const std::string& s) {
  std::vector<Vec2> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("vector entry is not x:y — " + item);
    out.push_back(Vec2{std::stoi(item.substr(0, colon)),
                       std::stoi(item.substr(colon + 1))});
  }
  return out;
}

std::string format_vec2_list(const std::vector<Vec2>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i].x) + ":" + std::to_string(v[i].y);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

std::vector<Rgb> parse_palette(const std::string& s) {
  std::vector<Rgb> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    if (item.size() != 6) throw ConfigError("palette entry must be rrggbb");
    auto hex = [&](int i) {
      return static_cast<uint8_t>(std::stoi(item.substr(i, 2), nullptr, 16));
    };
    out.push_back(Rgb{hex(0), hex(2), hex(4)});
  }
  return out;
}

std::string format_palette(const std::vector<Rgb>& p) {
  std::string out;
  char buf[8];
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) out += ",";
    std::snprintf(buf, sizeof buf, "%02x%02x%02x", p[i].r, p[i].g, p[i].b);
    out += buf;
  }
  return out;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path) {}

void MetricsWriter::write(const std::string& metric, double value,
                          const std::string& split, int step, int64_t seed,
                          const nlohmann::json& extra) {
  nlohmann::json j{{"metric", metric}, {"value", value}};
  if (!split.empty()) j["split"] = split;
  if (step >= 0) j["step"] = step;
  if (seed >= 0) j["seed"] = seed;
  if (!extra.is_null() && !extra.empty()) j["extra"] = extra;
  std::ofstream os(path_, std::ios::app);
  if (!os) throw IoError("cannot append metrics: " + path_.string());
  os << j.dump() << "\n";
}

nlohmann::json read_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read: " + path.string());
  nlohmann::json arr = nlohmann::json::array();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    arr.push_back(nlohmann::json::parse(line));
  }
  return arr;
}

RgbImage flow_to_rgb(const Grid<Vec2>& u, const Grid<uint8_t>* valid,
                     double max_mag) {
  RgbImage out(u.cols, u.rows);
  if (max_mag <= 0.0) max_mag = 1.0;
  for (int r = 0; r < u.rows; ++r) {
    for (int c = 0; c < u.cols; ++c) {
      if (valid && !valid->at(r, c)) {
        out.set(c, r, {32, 32, 32});
        continue;
      }
      Vec2 v = u.at(r, c);
      double mag = std::min(1.0, std::sqrt(static_cast<double>(v.norm2_sq())) /
                                     max_mag);
      double ang = std::atan2(static_cast<double>(v.y),
                              static_cast<double>(v.x));  // [-pi, pi]
      double hue = (ang + std::numbers::pi) / (2.0 * std::numbers::pi) * 6.0;
      int sector = static_cast<int>(hue) % 6;
      double f = hue - std::floor(hue);
      auto ch = [&](double x) { return static_cast<uint8_t>(255.0 * x); };
      double p = 1.0 - mag, q = 1.0 - mag * f, t = 1.0 - mag * (1.0 - f);
      double rr, gg, bb;
      switch (sector) {
        case 0: rr = 1, gg = t, bb = p; break;
        case 1: rr = q, gg = 1, bb = p; break;
        case 2: rr = p, gg = 1, bb = t; break;
        case 3: rr = p, gg = q, bb = 1; break;
        case 4: rr = t, gg = p, bb = 1; break;
        default: rr = 1, gg = p, bb = q; break;
      }
      out.set(c, r, {ch(rr), ch(gg), ch(bb)});
    }
  }
  return out;
}

RgbImage depth_to_gray(const Grid<double>& z, const Grid<uint8_t>* valid) {
  double zmin = 1e300, zmax = -1e300;
  for (int r = 0; r < z.rows; ++r)
    for (int c = 0; c < z.cols; ++c) {
      if (valid && !valid->at(r, c)) continue;
      zmin = std::min(zmin, z.at(r, c));
      zmax = std::max(zmax, z.at(r, c));
    }
  RgbImage out(z.cols, z.rows);
  for (int r = 0; r < z.rows; ++r)
    for (int c = 0; c < z.cols; ++c) {
      if (valid && !valid->at(r, c)) {
        out.set(c, r, {255, 0, 0});
        continue;
      }
      double t = zmax > zmin ? (z.at(r, c) - zmin) / (zmax - zmin) : 0.5;
      auto g = static_cast<uint8_t>(255.0 * (1.0 - t));  // near = bright
      out.set(c, r, {g, g, g});
    }
  return out;
}

RgbImage mask_overlay(const RgbImage& base, const Image& mask01) {
  if (base.width != mask01.width || base.height != mask01.height)
    throw ShapeError("overlay size mismatch");
  RgbImage out = base;
  for (int y = 0; y < base.height; ++y)
    for (int x = 0; x < base.width; ++x) {
      if (!mask01.at(x, y)) continue;
      Rgb c = out.at(x, y);
      out.set(x, y, {static_cast<uint8_t>((c.r + 255) / 2),
                     static_cast<uint8_t>(c.g / 2),
                     static_cast<uint8_t>(c.b / 2)});
    }
  return out;
}

RgbImage upscale(const RgbImage& img, int factor) {
  RgbImage out(img.width * factor, img.height * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.set(x, y, img.at(x / factor, y / factor));
  return out;
}

}  // namespace psi
