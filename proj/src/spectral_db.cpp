#include "spectra/spectral_db.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "spectra/parallel.h"

namespace spectra {

std::vector<double> shape_matrix(std::span<const double> s) {
  const std::size_t n = s.size();
  if (n == 0) throw ShapeError("shape_matrix: empty spectrum");
  for (double v : s) {
    if (!std::isfinite(v)) throw ValueError("shape_matrix: non-finite value");
  }
  std::vector<double> m(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      m[a * n + b] = std::abs(s[a] - s[b]);
    }
  }
  return m;
}

void SpectralDb::build_shapes() {
  shapes.clear();
  shapes.reserve(entries.size());
  for (const auto& e : entries) shapes.push_back(shape_matrix(e.spectrum));
}

namespace {

double shape_distance_sq(std::span<const double> a,
                         std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

MatchResult match_impl(std::span<const double> query_shape,
                       const SpectralDb& db) {
  MatchResult best;
  double best_sq = 0.0;
  for (std::size_t k = 0; k < db.shapes.size(); ++k) {
    if (db.shapes[k].size() != query_shape.size()) {
      throw ShapeError("match: shape matrix size mismatch at entry " +
                       std::to_string(k));
    }
    const double d = shape_distance_sq(query_shape, db.shapes[k]);
    if (best.index < 0 || d < best_sq) {
      best_sq = d;
      best.index = static_cast<int>(k);
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

}  // namespace

MatchResult match(std::span<const double> query_shape, const SpectralDb& db) {
  if (db.entries.empty()) throw ValueError("match: empty spectral database");
  if (db.shapes.size() != db.entries.size()) {
    throw ValueError("match: call build_shapes() after loading entries");
  }
  return match_impl(query_shape, db);
}

ObservationMap attach_observations(const Image& cube, const SpectralDb& db) {
  if (db.entries.empty()) {
    throw ValueError("attach_observations: empty spectral database");
  }
  if (db.shapes.size() != db.entries.size()) {
    throw ValueError("attach_observations: db shapes not built");
  }
  for (const auto& e : db.entries) {
    if (e.spectrum.size() != static_cast<std::size_t>(cube.channels)) {
      throw ShapeError("attach_observations: db spectra band count mismatch");
    }
  }
  const std::int64_t npx = static_cast<std::int64_t>(cube.plane());
  ObservationMap out;
  out.observations = Image(3, cube.height, cube.width);
  out.index.assign(static_cast<std::size_t>(npx), -1);
  out.distance.assign(static_cast<std::size_t>(npx), 0.0);
  parallel_for(npx, [&](std::int64_t p) {
    const std::size_t pi = static_cast<std::size_t>(p);
    std::vector<double> spec(static_cast<std::size_t>(cube.channels));
    for (int b = 0; b < cube.channels; ++b) {
      spec[static_cast<std::size_t>(b)] =
          cube.data[static_cast<std::size_t>(b) * cube.plane() + pi];
    }
    const std::vector<double> q = shape_matrix(spec);
    const MatchResult mr = match_impl(q, db);
    const SpectralDbEntry& e = db.entries[static_cast<std::size_t>(mr.index)];
    out.index[pi] = mr.index;
    out.distance[pi] = mr.distance;
    out.observations.data[0 * cube.plane() + pi] = e.photopic;
    out.observations.data[1 * cube.plane() + pi] = e.specularity;
    out.observations.data[2 * cube.plane() + pi] = e.roughness;
  });
  return out;
}

double weighted_reflectance(std::span<const double> spectrum,
                            std::span<const double> weighting_curve) {
  if (spectrum.size() != weighting_curve.size()) {
    throw ShapeError("weighted_reflectance: length mismatch");
  }
  double wsum = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double w = weighting_curve[i];
    if (!(w >= 0.0)) {
      throw ValueError("weighted_reflectance: weights must be >= 0");
    }
    wsum += w;
    acc += w * spectrum[i];
  }
  if (wsum <= 0.0) {
    throw ValueError("weighted_reflectance: weighting curve is all zero");
  }
  return acc / wsum;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_field(const std::string& cell, const char* field, int row) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError("spectral db row " + std::to_string(row) + ": field '" +
                      field + "' is not a number: '" + cell + "'");
  }
}

}  // namespace

SpectralDb load_spectral_db(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spectral db: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("spectral db is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string expect = "id,label,specularity,roughness,photopic,melanopic";
  for (int b = 0; b < kBands; ++b) {
    expect += ",r" + std::to_string(static_cast<int>(band_wavelength(b)));
  }
  if (line != expect) {
    throw FormatError("spectral db header mismatch; expected '" + expect +
                      "'");
  }
  SpectralDb db;
  int row = 1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 6 + static_cast<std::size_t>(kBands)) {
      throw FormatError("spectral db row " + std::to_string(row) + " has " +
                        std::to_string(cells.size()) + " fields, expected " +
                        std::to_string(6 + kBands));
    }
    SpectralDbEntry e;
    e.id = cells[0];
    e.label = static_cast<int>(parse_field(cells[1], "label", row));
    e.specularity = parse_field(cells[2], "specularity", row);
    e.roughness = parse_field(cells[3], "roughness", row);
    e.photopic = parse_field(cells[4], "photopic", row);
    e.melanopic = parse_field(cells[5], "melanopic", row);
    if (e.specularity < 0.0 || e.specularity > 1.0) {
      throw FormatError("spectral db row " + std::to_string(row) +
                        ": field 'specularity' outside [0,1]");
    }
    if (e.roughness < 0.0 || e.roughness > 1.0) {
      throw FormatError("spectral db row " + std::to_string(row) +
                        ": field 'roughness' outside [0,1]");
    }
    if (e.photopic < 0.0 || e.melanopic < 0.0) {
      throw FormatError("spectral db row " + std::to_string(row) +
                        ": reflectance fields must be >= 0");
    }
    e.spectrum.resize(static_cast<std::size_t>(kBands));
    for (int b = 0; b < kBands; ++b) {
      const double v = parse_field(cells[6 + static_cast<std::size_t>(b)],
                                   "reflectance", row);
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw FormatError("spectral db row " + std::to_string(row) +
                          ": reflectance at " +
                          std::to_string(band_wavelength(b)) +
                          " nm must be finite and >= 0");
      }
      e.spectrum[static_cast<std::size_t>(b)] = v;
    }
    db.entries.push_back(std::move(e));
    ++row;
  }
  db.build_shapes();
  return db;
}

void save_spectral_db(const std::string& path, const SpectralDb& db) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write spectral db: " + path);
  out << "id,label,specularity,roughness,photopic,melanopic";
  for (int b = 0; b < kBands; ++b) {
    out << ",r" << static_cast<int>(band_wavelength(b));
  }
  out << "\n";
  char buf[64];
  for (const auto& e : db.entries) {
    out << e.id << "," << e.label;
    for (double v : {e.specularity, e.roughness, e.photopic, e.melanopic}) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    for (double v : e.spectrum) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing spectral db: " + path);
}

std::vector<double> load_weighting_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weighting curve: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("weighting curve is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "wavelength,weight") {
    throw FormatError("weighting curve header must be 'wavelength,weight'");
  }
  std::vector<double> ws, curve;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) {
      throw FormatError("weighting curve row " + std::to_string(row + 1) +
                        " must have 2 fields");
    }
    ws.push_back(parse_field(cells[0], "wavelength", row + 1));
    curve.push_back(parse_field(cells[1], "weight", row + 1));
    ++row;
  }
  require_band_grid(ws);
  for (double v : curve) {
    if (!(v >= 0.0)) {
      throw FormatError("weighting curve weights must be >= 0");
    }
  }
  return curve;
}

void save_weighting_curve(const std::string& path,
                          std::span<const double> curve) {
  if (curve.size() != static_cast<std::size_t>(kBands)) {
    throw ShapeError("save_weighting_curve: need 31 weights");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write weighting curve: " + path);
  out << "wavelength,weight\n";
  char buf[64];
  for (int b = 0; b < kBands; ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", band_wavelength(b),
                  curve[static_cast<std::size_t>(b)]);
    out << buf;
  }
}

}  // namespace spectra
