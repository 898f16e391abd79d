#include "streetappeal/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "streetappeal/errors.hpp"

namespace streetappeal::io {

using nlohmann::json;

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ValidationError("CSV lacks column '" + std::string(name) + "'");
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_record = [&] {
    fields.push_back(std::move(field));
    field.clear();
    const bool blank = fields.size() == 1 && fields.front().empty();
    if (!blank) {
      if (table.header.empty() && table.rows.empty()) {
        table.header = std::move(fields);
      } else {
        table.rows.push_back({record_line, std::move(fields)});
      }
    }
    fields.clear();
    any = false;
  };

  char c;
  while (in.get(c)) {
    if (!any) record_line = line;
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"': in_quotes = true; break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        break;
      case '\r': break;
      case '\n':
        end_record();
        ++line;
        break;
      default: field += c;
    }
  }
  if (in_quotes) throw ValidationError("unterminated quoted field starting on line " + std::to_string(record_line));
  if (any) end_record();
  return table;
}

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  try {
    return read_csv(in);
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string csv_line(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_field(fields[i]);
  }
  return out + '\n';
}

std::string fmt(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_file(const std::filesystem::path& file) { return sha256_hex(read_text(file)); }

void write_text(const std::filesystem::path& file, std::string_view content) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), std::streamsize(content.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

namespace {

json parse_json_file(const std::filesystem::path& file) {
  json doc = json::parse(read_text(file), nullptr, false);
  if (doc.is_discarded()) throw ValidationError(file.string() + ": invalid JSON");
  return doc;
}

std::string feature_id(const json& feature, std::size_t index, const char* prefix) {
  if (feature.contains("id")) {
    const auto& id = feature["id"];
    return id.is_string() ? id.get<std::string>() : id.dump();
  }
  if (feature.contains("properties") && feature["properties"].is_object() && feature["properties"].contains("id")) {
    const auto& id = feature["properties"]["id"];
    return id.is_string() ? id.get<std::string>() : id.dump();
  }
  return prefix + std::to_string(index);
}

geo::LonLat position(const json& coords, const std::filesystem::path& file) {
  if (!coords.is_array() || coords.size() < 2 || !coords[0].is_number() || !coords[1].is_number()) {
    throw ValidationError(file.string() + ": malformed coordinate");
  }
  geo::LonLat p{coords[0].get<double>(), coords[1].get<double>()};
  if (!geo::valid_wgs84(p)) throw ValidationError(file.string() + ": coordinate outside WGS84 range");
  return p;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ValidationError(what + ": not a number '" + s + "'");
  return v;
}

}  // namespace

geo::StreetNetwork read_network_geojson(const std::filesystem::path& file) {
  const json doc = parse_json_file(file);
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw ValidationError(file.string() + ": expected a GeoJSON FeatureCollection");
  }
  geo::StreetNetwork net;
  std::size_t index = 0;
  for (const auto& f : doc["features"]) {
    const auto& g = f.at("geometry");
    const std::string type = g.value("type", "");
    auto add_line = [&](const json& coords, const std::string& id) {
      geo::Polyline line;
      line.id = id;
      for (const auto& c : coords) line.vertices.push_back(position(c, file));
      net.segments.push_back(std::move(line));
    };
    if (type == "LineString") {
      add_line(g.at("coordinates"), feature_id(f, index, "s"));
    } else if (type == "MultiLineString") {
      const std::string base = feature_id(f, index, "s");
      std::size_t part = 0;
      for (const auto& coords : g.at("coordinates")) add_line(coords, base + "." + std::to_string(part++));
    } else {
      throw ValidationError(file.string() + ": feature " + std::to_string(index) + " is not a LineString");
    }
    ++index;
  }
  return net;
}

std::vector<geo::Landmark> read_landmarks(const std::filesystem::path& file) {
  std::vector<geo::Landmark> out;
  const auto ext = file.extension().string();
  if (ext == ".csv") {
    const CsvTable t = read_csv(file);
    const auto ci = t.column("id"), clon = t.column("lon"), clat = t.column("lat");
    for (const auto& row : t.rows) {
      if (row.fields.size() != t.header.size()) {
        throw ValidationError(file.string() + ":" + std::to_string(row.line) + ": wrong field count");
      }
      const std::string where = file.string() + ":" + std::to_string(row.line);
      geo::Landmark l{row.fields[ci], parse_double(row.fields[clon], where), parse_double(row.fields[clat], where)};
      if (!geo::valid_wgs84({l.lon, l.lat})) throw ValidationError(where + ": coordinate outside WGS84 range");
      out.push_back(std::move(l));
    }
    return out;
  }
  const json doc = parse_json_file(file);
  std::size_t index = 0;
  for (const auto& f : doc.at("features")) {
    const auto& g = f.at("geometry");
    if (g.value("type", "") != "Point") {
      throw ValidationError(file.string() + ": landmark " + std::to_string(index) + " is not a Point");
    }
    const auto p = position(g.at("coordinates"), file);
    out.push_back({feature_id(f, index, "l"), p.lon, p.lat});
    ++index;
  }
  return out;
}

std::vector<geo::SamplePoint> read_points_csv(const std::filesystem::path& file) {
  const CsvTable t = read_csv(file);
  const auto ci = t.column("id"), clon = t.column("lon"), clat = t.column("lat"), cs = t.column("source");
  std::vector<geo::SamplePoint> out;
  for (const auto& row : t.rows) {
    const std::string where = file.string() + ":" + std::to_string(row.line);
    if (row.fields.size() != t.header.size()) throw ValidationError(where + ": wrong field count");
    geo::SamplePoint p;
    p.id = row.fields[ci];
    p.lon = parse_double(row.fields[clon], where);
    p.lat = parse_double(row.fields[clat], where);
    p.source = geo::point_source_from_string(row.fields[cs]);
    out.push_back(std::move(p));
  }
  return out;
}

std::string points_csv(std::span<const geo::SamplePoint> points) {
  std::string out = "id,lon,lat,source\n";
  for (const auto& p : points) {
    const std::string fields[] = {p.id, fmt(p.lon, 15), fmt(p.lat, 15), geo::to_string(p.source)};
    out += csv_line(fields);
  }
  return out;
}

std::string points_geojson(std::span<const geo::SamplePoint> points) {
  json features = json::array();
  for (const auto& p : points) {
    json props = {{"id", p.id}, {"source", geo::to_string(p.source)}};
    if (p.captured) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02d", p.captured->year, p.captured->month);
      props["captured"] = buf;
    }
    features.push_back({{"type", "Feature"},
                        {"id", p.id},
                        {"geometry", {{"type", "Point"}, {"coordinates", {p.lon, p.lat}}}},
                        {"properties", props}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump(1) + "\n";
}

}  // namespace streetappeal::io
