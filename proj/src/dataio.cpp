#include "texanom/dataio.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "texanom/rng.hpp"

namespace texanom::dataio {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t quantize(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

bool has_ext(const fs::path& p, std::initializer_list<const char*> exts) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return std::any_of(exts.begin(), exts.end(), [&](const char* x) { return e == x; });
}

// Raw 8-bit samples with 1 (gray) or 3 (RGB) channels.
struct RawImage {
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<std::uint8_t> bytes;
};

RawImage read_png(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image " + path.string());
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, 8, f.get()) != 8 || png_sig_cmp(sig.data(), 0, 8))
    throw FormatError(path.string() + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  RawImage raw;
  std::vector<png_bytep> rows;
  std::string failure;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": corrupt PNG data");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) failure = "bit depth 16 (only 8-bit images are supported)";
  if (!failure.empty()) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": unsupported " + failure);
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_set_strip_16(png);
  png_read_update_info(png, info);

  raw.rows = static_cast<int>(png_get_image_height(png, info));
  raw.cols = static_cast<int>(png_get_image_width(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bytes.resize(static_cast<std::size_t>(raw.rows) * raw.cols * raw.channels);
  rows.resize(raw.rows);
  for (int r = 0; r < raw.rows; ++r)
    rows[r] = raw.bytes.data() + static_cast<std::size_t>(r) * raw.cols * raw.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (raw.channels != 1 && raw.channels != 3)
    throw FormatError(path.string() + ": unsupported channel count " + std::to_string(raw.channels));
  return raw;
}

void write_png(const fs::path& path, int rows, int cols, const std::uint8_t* bytes) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(cols), static_cast<png_uint_32>(rows), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < rows; ++r)
    png_write_row(png, const_cast<png_bytep>(bytes + static_cast<std::size_t>(r) * cols));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Binary P5/P6 with maxval 255.
RawImage read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(ch);
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw FormatError(path.string() + ": unsupported PNM magic '" + magic + "'");
  RawImage raw;
  try {
    raw.cols = std::stoi(token());
    raw.rows = std::stoi(token());
    const int maxval = std::stoi(token());
    if (maxval != 255)
      throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval) +
                        " (only 8-bit images are supported)");
  } catch (const std::invalid_argument&) {
    throw FormatError(path.string() + ": malformed PNM header");
  }
  if (raw.rows <= 0 || raw.cols <= 0) throw FormatError(path.string() + ": empty image");
  raw.channels = magic == "P5" ? 1 : 3;
  raw.bytes.resize(static_cast<std::size_t>(raw.rows) * raw.cols * raw.channels);
  in.read(reinterpret_cast<char*>(raw.bytes.data()), static_cast<std::streamsize>(raw.bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.bytes.size()))
    throw FormatError(path.string() + ": truncated pixel data");
  return raw;
}

RawImage read_raw(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("image not found: " + path.string());
  if (has_ext(path, {".png"})) return read_png(path);
  if (has_ext(path, {".pgm", ".ppm", ".pnm"})) return read_pnm(path);
  throw FormatError(path.string() + ": unsupported file extension '" + path.extension().string() + "'");
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (in.gcount() != 4) throw FormatError("truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

GrayImage load_image(const fs::path& path) {
  const RawImage raw = read_raw(path);
  GrayImage img(raw.rows, raw.cols);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (raw.channels == 1) {
      img[i] = raw.bytes[i] / 255.0;
    } else {
      const std::uint8_t* p = raw.bytes.data() + 3 * i;
      img[i] = std::clamp(rgb_to_gray(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0), 0.0, 1.0);
    }
  }
  return img;
}

AnomalyMask load_mask(const fs::path& path) {
  const GrayImage g = load_image(path);
  AnomalyMask m(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i] >= 0.5 ? 1 : 0;
  return m;
}

void save_image(const GrayImage& image, const fs::path& path) {
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = quantize(image[i]);
  if (has_ext(path, {".pgm"})) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
    return;
  }
  write_png(path, image.rows(), image.cols(), bytes.data());
}

void save_mask_png(const AnomalyMask& mask, const fs::path& path) {
  std::vector<std::uint8_t> bytes(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask[i] ? 255 : 0;
  write_png(path, mask.rows(), mask.cols(), bytes.data());
}

void check_unit_range(const RealGrid& image, const std::string& what) {
  for (double v : image.values())
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError(what + ": value outside [0,1]");
}

void DatasetIndex::validate() const {
  auto need = [](const fs::path& p) {
    if (!fs::exists(p)) throw ConfigError("dataset file does not exist: " + p.string());
  };
  for (const auto& p : train_normal) need(p);
  std::set<fs::path> val;
  for (const auto& v : validation_defective) {
    need(v.image);
    if (!v.mask) throw ConfigError("validation image lacks a ground-truth mask: " + v.image.string());
    need(*v.mask);
    val.insert(fs::weakly_canonical(v.image));
  }
  for (const auto& t : test) {
    need(t.image);
    if (t.mask) need(*t.mask);
    if (val.count(fs::weakly_canonical(t.image)))
      throw ConfigError("image appears in both validation and test: " + t.image.string());
  }
}

namespace {

bool is_image_file(const fs::path& p) { return has_ext(p, {".png", ".pgm", ".ppm", ".pnm"}); }

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DatasetIndex index_mvtec(const fs::path& root, const std::vector<std::string>& validation) {
  if (!fs::is_directory(root)) throw ConfigError("dataset.root is not a directory: " + root.string());
  DatasetIndex index;
  index.train_normal = sorted_images(root / "train" / "good");
  if (index.train_normal.empty())
    throw ConfigError("dataset.root has no training images under train/good: " + root.string());

  std::set<fs::path> val_set;
  for (const auto& v : validation) val_set.insert(fs::weakly_canonical(root / v));

  std::vector<fs::path> defect_dirs;
  if (fs::is_directory(root / "test"))
    for (const auto& e : fs::directory_iterator(root / "test"))
      if (e.is_directory()) defect_dirs.push_back(e.path());
  std::sort(defect_dirs.begin(), defect_dirs.end());

  for (const auto& dir : defect_dirs) {
    const std::string defect = dir.filename().string();
    for (const auto& img : sorted_images(dir)) {
      LabeledImage item{img, std::nullopt};
      const fs::path mask = root / "ground_truth" / defect / (img.stem().string() + "_mask.png");
      if (fs::exists(mask)) item.mask = mask;
      if (val_set.erase(fs::weakly_canonical(img)))
        index.validation_defective.push_back(item);
      else
        index.test.push_back(item);
    }
  }
  if (!val_set.empty())
    throw ConfigError("dataset.validation names an image not found under test/: " + val_set.begin()->string());
  index.validate();
  return index;
}

std::vector<PatchLocation> sample_locations(const std::vector<GrayImage>& images, const PatchSampler& sampler,
                                            const std::vector<std::string>& names) {
  if (sampler.patch_size < 1) throw ConfigError("patch_size must be positive");
  std::vector<PatchLocation> out;
  if (sampler.count == 0) return out;
  if (images.empty()) throw ConfigError("no training images to sample patches from");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows() < sampler.patch_size || images[i].cols() < sampler.patch_size) {
      const std::string name = i < names.size() ? names[i] : "training image #" + std::to_string(i);
      throw ConfigError(name + " (" + std::to_string(images[i].rows()) + "x" + std::to_string(images[i].cols()) +
                        ") is smaller than patch_size " + std::to_string(sampler.patch_size));
    }
  }
  Rng rng(derive_seed(sampler.rng_seed, "sampling"));
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  out.reserve(sampler.count);
  for (std::size_t k = 0; k < sampler.count; ++k) {
    const std::size_t i = pick(rng);
    std::uniform_int_distribution<int> row(0, images[i].rows() - sampler.patch_size);
    std::uniform_int_distribution<int> col(0, images[i].cols() - sampler.patch_size);
    const int r = row(rng);
    out.push_back({i, r, col(rng)});
  }
  return out;
}

std::vector<GrayImage> sample_patches(const std::vector<GrayImage>& images, const PatchSampler& sampler) {
  std::vector<GrayImage> out;
  for (const auto& loc : sample_locations(images, sampler))
    out.push_back(crop(images[loc.image], loc.row, loc.col, sampler.patch_size, sampler.patch_size));
  return out;
}

std::vector<GrayImage> sample_patches(const DatasetIndex& index, const PatchSampler& sampler) {
  std::vector<GrayImage> images;
  std::vector<std::string> names;
  for (const auto& p : index.train_normal) {
    images.push_back(load_image(p));
    names.push_back(p.string());
  }
  std::vector<GrayImage> out;
  for (const auto& loc : sample_locations(images, sampler, names))
    out.push_back(crop(images[loc.image], loc.row, loc.col, sampler.patch_size, sampler.patch_size));
  return out;
}

void write_anomaly_map_raw(const AnomalyMap& map, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write anomaly map " + path.string());
  out.write("TAM1", 4);
  put_u32(out, static_cast<std::uint32_t>(map.rows()));
  put_u32(out, static_cast<std::uint32_t>(map.cols()));
  for (double v : map.values()) {
    if (!std::isfinite(v)) throw ContractError("anomaly map contains a non-finite score");
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw IoError("failed writing anomaly map " + path.string());
}

AnomalyMap read_anomaly_map(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open anomaly map " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || std::memcmp(magic.data(), "TAM1", 4) != 0)
    throw FormatError(path.string() + ": bad magic (expected TAM1)");
  const std::uint32_t rows = get_u32(in);
  const std::uint32_t cols = get_u32(in);
  AnomalyMap map(static_cast<int>(rows), static_cast<int>(cols));
  for (std::size_t i = 0; i < map.size(); ++i) {
    try {
      map[i] = std::bit_cast<float>(get_u32(in));
    } catch (const FormatError&) {
      throw FormatError(path.string() + ": truncated score data");
    }
  }
  return map;
}

Grid<std::uint8_t> preview_bytes(const AnomalyMap& map) {
  Grid<std::uint8_t> out(map.rows(), map.cols(), 0);
  if (map.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.values().begin(), map.values().end());
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < map.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (map[i] - *lo) / range));
  return out;
}

fs::path write_anomaly_map(const AnomalyMap& map, const fs::path& path) {
  write_anomaly_map_raw(map, path);
  fs::path preview = path;
  preview.replace_extension(".png");
  if (preview == path) preview.replace_filename(path.stem().string() + "_preview.png");
  const auto bytes = preview_bytes(map);
  write_png(preview, bytes.rows(), bytes.cols(), bytes.data());
  return preview;
}

}  // namespace texanom::dataio
