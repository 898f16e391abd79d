#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streetappeal/geo.hpp"

namespace streetappeal::io {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  /// Index of a header column; throws ValidationError when absent.
  std::size_t column(std::string_view name) const;
};

/// RFC 4180 style reader: quoted fields, doubled quotes, CRLF tolerated.
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& file);

std::string csv_field(std::string_view s);
std::string csv_line(std::span<const std::string> fields);

/// Shortest "%.*g" rendering that round-trips at the given precision; -0 prints as 0.
std::string fmt(double v, int precision = 12);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& file);

std::string read_text(const std::filesystem::path& file);
/// Writes through a temporary file and renames, so readers never see partial output.
void write_text(const std::filesystem::path& file, std::string_view content);

geo::StreetNetwork read_network_geojson(const std::filesystem::path& file);
/// GeoJSON points or CSV id,lon,lat, chosen by extension.
std::vector<geo::Landmark> read_landmarks(const std::filesystem::path& file);

std::vector<geo::SamplePoint> read_points_csv(const std::filesystem::path& file);
std::string points_csv(std::span<const geo::SamplePoint> points);
std::string points_geojson(std::span<const geo::SamplePoint> points);

}  // namespace streetappeal::io
