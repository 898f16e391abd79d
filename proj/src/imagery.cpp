#include "streetappeal/imagery.hpp"

#include <algorithm>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <jpeglib.h>
#include <png.h>

#include "streetappeal/errors.hpp"
#include "streetappeal/http.hpp"

namespace streetappeal::imagery {

Raster::Raster(int w, int h, std::array<std::uint8_t, 3> fill) : width(w), height(h) {
  rgb.resize(std::size_t(w) * std::size_t(h) * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = fill[0];
    rgb[i + 1] = fill[1];
    rgb[i + 2] = fill[2];
  }
}

std::vector<TileSpec> tile_requests(const geo::SamplePoint& p) {
  std::vector<TileSpec> specs;
  specs.reserve(kHeadings.size());
  for (int heading : kHeadings) {
    TileSpec s;
    s.point_id = p.id;
    s.heading = heading;
    specs.push_back(std::move(s));
  }
  return specs;
}

Panorama compose_panorama(std::string point_id, std::span<const HeadingTile> tiles) {
  std::array<const Raster*, kHeadings.size()> ordered{};
  for (const auto& t : tiles) {
    const auto it = std::find(kHeadings.begin(), kHeadings.end(), t.heading);
    if (it == kHeadings.end()) {
      throw ValidationError(point_id + ": unexpected heading " + std::to_string(t.heading));
    }
    auto& slot = ordered[std::size_t(it - kHeadings.begin())];
    if (slot != nullptr) {
      throw ValidationError(point_id + ": duplicate heading " + std::to_string(t.heading));
    }
    if (t.raster.width != kTileSize || t.raster.height != kTileSize) {
      throw ValidationError(point_id + ": tile at heading " + std::to_string(t.heading) + " is " +
                            std::to_string(t.raster.width) + "x" + std::to_string(t.raster.height) +
                            ", expected 640x640");
    }
    slot = &t.raster;
  }
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (ordered[i] == nullptr) {
      throw ValidationError(point_id + ": missing heading " + std::to_string(kHeadings[i]));
    }
  }

  Panorama pan{std::move(point_id), Raster(kTileSize * int(kHeadings.size()), kTileSize)};
  const std::size_t row_bytes = std::size_t(kTileSize) * 3;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    for (int y = 0; y < kTileSize; ++y) {
      std::copy_n(ordered[i]->pixel(0, y), row_bytes, pan.image.pixel(int(i) * kTileSize, y));
    }
  }
  return pan;
}

LuminosityRecord mean_luminosity(const Panorama& pan) {
  if (pan.image.pixel_count() == 0) throw ValidationError(pan.point_id + ": empty panorama");
  // Channel sums and the weighted numerator stay exact in double for any realistic image size.
  const Eigen::Vector3d sums = pan.image.channels().cast<double>().rowwise().sum();
  const double numerator = 2126.0 * sums.x() + 7152.0 * sums.y() + 722.0 * sums.z();
  return {pan.point_id, numerator / (10000.0 * double(pan.image.pixel_count()))};
}

namespace {

bool is_png(std::span<const std::uint8_t> b) {
  return b.size() >= 8 && png_sig_cmp(b.data(), 0, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ValidationError(std::string("PNG decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Raster out;
  out.width = int(image.width);
  out.height = int(image.height);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw ValidationError("PNG decode failed: " + msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Raster decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  Raster out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ValidationError(std::string("JPEG decode failed: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = int(cinfo.output_width);
  out.height = int(cinfo.output_height);
  out.rgb.resize(out.pixel_count() * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + std::size_t(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Raster decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) return decode_jpeg(bytes);
  throw ValidationError("unrecognized image format");
}

Raster read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(raster.width);
  image.height = png_uint_32(raster.height);
  image.format = PNG_FORMAT_RGB;
  image.flags = PNG_IMAGE_FLAG_FAST;
  // Worst-case bound, so the image is compressed once.
  png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(image);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.rgb.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode_png(raster);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

Raster LocalTileSource::fetch(const TileSpec& spec) {
  const std::string stem = spec.point_id + "_" + std::to_string(spec.heading);
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    const auto path = dir_ / (stem + ext);
    if (std::filesystem::exists(path)) return read_image(path);
  }
  throw ValidationError("missing tile " + (dir_ / (stem + ".png")).string());
}

RemoteTileSource::RemoteTileSource(std::string endpoint, std::string api_key,
                                   std::vector<geo::SamplePoint> points)
    : api_key_(std::move(api_key)), points_(std::move(points)) {
  std::tie(scheme_host_, path_) = http::split_url(endpoint);
  std::sort(points_.begin(), points_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

std::string RemoteTileSource::request_target(const TileSpec& spec, const geo::LonLat& where) const {
  char location[64];
  std::snprintf(location, sizeof location, "%.7f,%.7f", where.lat, where.lon);
  std::ostringstream q;
  q << path_ << (path_.find('?') == std::string::npos ? '?' : '&') << "size=" << spec.width << 'x'
    << spec.height << "&location=" << location << "&heading=" << spec.heading
    << "&fov=" << spec.fov << "&pitch=" << spec.pitch;
  if (!api_key_.empty()) q << "&key=" << api_key_;
  return q.str();
}

Raster RemoteTileSource::fetch(const TileSpec& spec) {
  const auto it = std::lower_bound(points_.begin(), points_.end(), spec.point_id,
                                   [](const geo::SamplePoint& p, const std::string& id) { return p.id < id; });
  if (it == points_.end() || it->id != spec.point_id) {
    throw ValidationError("no location known for point " + spec.point_id);
  }
  auto transport = http::make_transport(std::chrono::seconds(60));
  const auto res = transport->get(scheme_host_ + request_target(spec, it->position()), {});
  if (res.status == 401 || res.status == 403) throw AuthError("imagery API rejected credentials");
  if (res.status != 200) {
    throw Error("tile request for " + spec.point_id + "@" + std::to_string(spec.heading) + " failed: " +
                (res.status == 0 ? res.transport_error : "HTTP " + std::to_string(res.status)));
  }
  const auto* data = reinterpret_cast<const std::uint8_t*>(res.body.data());
  return decode_image({data, res.body.size()});
}

Panorama fetch_panorama(TileSource& source, const geo::SamplePoint& p) {
  std::vector<HeadingTile> tiles;
  for (const auto& spec : tile_requests(p)) tiles.push_back({spec.heading, source.fetch(spec)});
  return compose_panorama(p.id, tiles);
}

}  // namespace streetappeal::imagery
