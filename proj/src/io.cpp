#include "spectra/io.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace spectra {

namespace {

void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(std::string("truncated ") + what);
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32le(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32le(out, bits);
}

float read_f32le(std::istream& in, const char* what) {
  const std::uint32_t bits = read_u32le(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_cube(const std::string& path, const Image& cube) {
  require_channels(cube, kBands, "save_cube");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write cube file: " + path);
  out.write("HSC1", 4);
  write_u32le(out, static_cast<std::uint32_t>(cube.height));
  write_u32le(out, static_cast<std::uint32_t>(cube.width));
  write_u32le(out, static_cast<std::uint32_t>(cube.channels));
  for (double v : cube.data) write_f32le(out, static_cast<float>(v));
  if (!out) throw IoError("failed writing cube file: " + path);
}

Image load_cube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cube file: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HSC1", 4) != 0) {
    throw FormatError("cube file magic must be HSC1: " + path);
  }
  const std::uint32_t h = read_u32le(in, "cube header");
  const std::uint32_t w = read_u32le(in, "cube header");
  const std::uint32_t bands = read_u32le(in, "cube header");
  if (bands != static_cast<std::uint32_t>(kBands)) {
    throw FormatError("cube file bands field must be 31, got " +
                      std::to_string(bands));
  }
  if (h == 0 || w == 0 || h > 1 << 20 || w > 1 << 20) {
    throw FormatError("cube file has implausible dimensions");
  }
  Image cube(kBands, static_cast<int>(h), static_cast<int>(w));
  for (double& v : cube.data) {
    v = static_cast<double>(read_f32le(in, "cube payload"));
    if (!std::isfinite(v) || v < 0.0) {
      throw FormatError("cube file reflectance must be finite and >= 0");
    }
  }
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError("cube file has trailing bytes: " + path);
  }
  return cube;
}

void save_pfm(const std::string& path, const Image& rgb) {
  require_channels(rgb, 3, "save_pfm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PFM: " + path);
  out << "PF\n" << rgb.width << " " << rgb.height << "\n-1.0\n";
  // rows bottom-to-top, pixels interleaved
  for (int y = rgb.height - 1; y >= 0; --y) {
    for (int x = 0; x < rgb.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        write_f32le(out, static_cast<float>(rgb.at(c, y, x)));
      }
    }
  }
  if (!out) throw IoError("failed writing PFM: " + path);
}

Image load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PFM: " + path);
  std::string magic;
  in >> magic;
  if (magic != "PF") throw FormatError("PFM magic must be PF: " + path);
  int w = 0, h = 0;
  double scale = 0.0;
  in >> w >> h >> scale;
  if (!in || w <= 0 || h <= 0) throw FormatError("PFM header malformed");
  if (scale >= 0.0) {
    throw FormatError("PFM must be little-endian (negative scale)");
  }
  in.get();  // single whitespace after the scale
  Image rgb(3, h, w);
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        rgb.at(c, y, x) = static_cast<double>(read_f32le(in, "PFM payload"));
      }
    }
  }
  return rgb;
}

void save_ppm_preview(const std::string& path, const Image& rgb) {
  require_channels(rgb, 3, "save_ppm_preview");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PPM: " + path);
  out << "P6\n" << rgb.width << " " << rgb.height << "\n255\n";
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(c, y, x), 0.0, 1.0);
        const unsigned char byte =
            static_cast<unsigned char>(std::lround(v * 255.0));
        out.write(reinterpret_cast<const char*>(&byte), 1);
      }
    }
  }
  if (!out) throw IoError("failed writing PPM: " + path);
}

void save_pgm(const std::string& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PGM: " + path);
  out << "P5\n" << labels.width << " " << labels.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.labels.data()),
            static_cast<std::streamsize>(labels.labels.size()));
  if (!out) throw IoError("failed writing PGM: " + path);
}

LabelMap load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PGM: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw FormatError("PGM magic must be P5: " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0) throw FormatError("PGM header malformed");
  if (maxval != 255) throw FormatError("PGM maxval must be 255");
  in.get();
  LabelMap lm(h, w);
  if (!in.read(reinterpret_cast<char*>(lm.labels.data()),
               static_cast<std::streamsize>(lm.labels.size()))) {
    throw FormatError("PGM payload truncated: " + path);
  }
  return lm;
}

// ---- config ----

RunConfig default_config() { return RunConfig{}; }

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw FormatError("config key '" + key + "' needs a number, got '" + v +
                      "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d)) {
    throw FormatError("config key '" + key + "' needs an integer");
  }
  return static_cast<int>(d);
}

}  // namespace

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) +
                        " is not key=value: '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "w_band") cfg.w_band = parse_double(key, value);
    else if (key == "w_rgb") cfg.w_rgb = parse_double(key, value);
    else if (key == "w_spectral") cfg.w_spectral = parse_double(key, value);
    else if (key == "w_domain") cfg.w_domain = parse_double(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
    else if (key == "momentum") cfg.momentum = parse_double(key, value);
    else if (key == "steps") cfg.steps = parse_int(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_double(key, value));
    else if (key == "mrae_epsilon") cfg.mrae_epsilon = parse_double(key, value);
    else if (key == "hidden_width") cfg.hidden_width = parse_int(key, value);
    else if (key == "sigma") cfg.sigma = parse_double(key, value);
    else if (key == "nu") cfg.nu = parse_double(key, value);
    else if (key == "mu") cfg.mu = parse_double(key, value);
    else if (key == "jpeg_quality") cfg.jpeg_quality = parse_int(key, value);
    else if (key == "mode") {
      if (value != "sample" && value != "differentiable") {
        throw FormatError("config key 'mode' must be sample or differentiable");
      }
      cfg.mode = value;
    }
    else if (key == "n_filters") cfg.n_filters = parse_int(key, value);
    else if (key == "seg_hidden") cfg.seg_hidden = parse_int(key, value);
    else if (key == "seg_steps") cfg.seg_steps = parse_int(key, value);
    else if (key == "seg_learning_rate") cfg.seg_learning_rate = parse_double(key, value);
    else if (key == "seg_momentum") cfg.seg_momentum = parse_double(key, value);
    else if (key == "classes") cfg.classes = parse_int(key, value);
    else {
      throw FormatError("unknown config key '" + key + "' at line " +
                        std::to_string(line_no));
    }
  }
  if (cfg.sigma < 0.0 || cfg.nu <= 0.0 || cfg.mu <= 0.0) {
    throw FormatError("config: sigma must be >= 0, nu and mu > 0");
  }
  if (cfg.jpeg_quality < 1 || cfg.jpeg_quality > 100) {
    throw FormatError("config: jpeg_quality must be in [1, 100]");
  }
  if (cfg.mrae_epsilon <= 0.0) {
    throw FormatError("config: mrae_epsilon must be > 0");
  }
  return cfg;
}

}  // namespace spectra
