#include <doctest.h>
#include <png.h>

#include <cstdio>
#include <fstream>

#include "support.hpp"
#include "texanom/dataio.hpp"

using namespace texanom;
using namespace texanom::dataio;
using texanom::testing::random_grid;
using texanom::testing::scratch_dir;

namespace {

void write_pnm(const fs::path& p, const char* magic, int rows, int cols, int maxval, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << magic << "\n# comment\n" << cols << " " << rows << "\n" << maxval << "\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_png_raw(const fs::path& p, int rows, int cols, int color_type, int depth, const std::vector<unsigned char>& bytes) {
  FILE* f = std::fopen(p.string().c_str(), "wb");
  REQUIRE(f);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, cols, rows, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = bytes.size() / rows;
  for (int r = 0; r < rows; ++r) png_write_row(png, const_cast<unsigned char*>(bytes.data() + r * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

}  // namespace

TEST_CASE("gray conversion") {
  CHECK(rgb_to_gray(1, 1, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rgb_to_gray(1, 0, 0) == 0.299);
  CHECK(rgb_to_gray(0, 0, 0) == 0.0);
  Rng rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const double g = rgb_to_gray(u(rng), u(rng), u(rng));
    CHECK(g >= 0.0);
    CHECK(g <= 1.0);
  }
}

TEST_CASE("image decoding") {
  const auto dir = scratch_dir("dataio_load");
  write_png_raw(dir / "g.png", 2, 2, PNG_COLOR_TYPE_GRAY, 8, {0, 255, 128, 64});
  const auto g = load_image(dir / "g.png");
  CHECK(g.storage() == std::vector<double>{0.0, 1.0, 128 / 255.0, 64 / 255.0});

  write_pnm(dir / "g.pgm", "P5", 2, 2, 255, {0, 255, 128, 64});
  CHECK(load_image(dir / "g.pgm") == g);

  write_png_raw(dir / "z.png", 3, 4, PNG_COLOR_TYPE_GRAY, 8, std::vector<unsigned char>(12, 0));
  const auto zeros = load_image(dir / "z.png");
  for (double v : zeros.values()) CHECK(v == 0.0);

  write_png_raw(dir / "rgb.png", 1, 2, PNG_COLOR_TYPE_RGB, 8, {255, 255, 255, 255, 0, 0});
  const auto rgb = load_image(dir / "rgb.png");
  CHECK(rgb[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rgb[1] == doctest::Approx(0.299).epsilon(1e-15));
  write_pnm(dir / "rgb.ppm", "P6", 1, 2, 255, {255, 255, 255, 255, 0, 0});
  CHECK(load_image(dir / "rgb.ppm")[1] == doctest::Approx(0.299).epsilon(1e-15));

  write_png_raw(dir / "deep.png", 2, 2, PNG_COLOR_TYPE_GRAY, 16, std::vector<unsigned char>(8, 7));
  CHECK_THROWS_WITH_AS(load_image(dir / "deep.png"), doctest::Contains("bit depth"), FormatError);
  write_pnm(dir / "deep.pgm", "P5", 2, 2, 65535, std::vector<unsigned char>(8, 7));
  CHECK_THROWS_WITH_AS(load_image(dir / "deep.pgm"), doctest::Contains("maxval"), FormatError);
  {
    std::ofstream out(dir / "junk.png", std::ios::binary);
    out << "definitely not a png";
  }
  CHECK_THROWS_AS(load_image(dir / "junk.png"), FormatError);
  CHECK_THROWS_AS(load_image(dir / "nope.png"), IoError);
  write_pnm(dir / "short.pgm", "P5", 4, 4, 255, {1, 2, 3});
  CHECK_THROWS_AS(load_image(dir / "short.pgm"), FormatError);
}

TEST_CASE("8-bit round trip") {
  const auto dir = scratch_dir("dataio_rt");
  const auto img = random_grid(13, 17, 4);
  for (const char* name : {"a.png", "a.pgm"}) {
    save_image(img, dir / name);
    const auto back = load_image(dir / name);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::fabs(back[i] - img[i]) <= 1.0 / 510 + 1e-15);
  }
  AnomalyMask m(5, 6, 0);
  m(1, 2) = m(4, 5) = 1;
  save_mask_png(m, dir / "m.png");
  CHECK(load_mask(dir / "m.png") == m);
  CHECK(load_image(dir / "m.png")(1, 2) == 1.0);
}

TEST_CASE("anomaly map files") {
  const auto dir = scratch_dir("dataio_map");
  AnomalyMap map = random_grid(16, 16, 9);
  for (auto& v : map.values()) v = static_cast<float>(v);
  const auto preview = write_anomaly_map(map, dir / "m.tam");
  CHECK(read_anomaly_map(dir / "m.tam") == map);
  CHECK(fs::exists(preview));

  std::ifstream in(dir / "m.tam", std::ios::binary);
  char hdr[12];
  in.read(hdr, 12);
  CHECK(std::string(hdr, 4) == "TAM1");
  CHECK(static_cast<unsigned char>(hdr[4]) == 16);
  CHECK(fs::file_size(dir / "m.tam") == 12u + 16u * 16u * 4u);

  const auto flat = preview_bytes(AnomalyMap(4, 4, 0.3));
  for (auto v : flat.values()) CHECK(v == flat[0]);

  AnomalyMap spike(5, 5, 0.1);
  spike(2, 3) = 0.9;
  const auto pb = preview_bytes(spike);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) CHECK((pb(r, c) == 255) == (r == 2 && c == 3));

  AnomalyMap bad(2, 2, 0.0);
  bad[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(write_anomaly_map_raw(bad, dir / "bad.tam"), ContractError);
  CHECK_THROWS_AS(write_anomaly_map_raw(map, dir / "no" / "such" / "dir" / "x.tam"), IoError);
  fs::resize_file(dir / "m.tam", 40);
  CHECK_THROWS_AS(read_anomaly_map(dir / "m.tam"), FormatError);
}

TEST_CASE("patch sampling") {
  const auto img = random_grid(256, 256, 1);
  PatchSampler s{256, 5, 3};
  for (const auto& p : sample_patches(std::vector<GrayImage>{img}, s)) CHECK(p == img);
  s.count = 0;
  CHECK(sample_patches(std::vector<GrayImage>{img}, s).empty());

  // Top-left corners of a 260x260 image with 256 patches lie on a 5x5 grid.
  const std::vector<GrayImage> big{random_grid(260, 260, 2)};
  PatchSampler u{256, 10000, 42};
  const auto locs = sample_locations(big, u);
  CHECK(locs.size() == 10000u);
  std::vector<int> counts(25, 0);
  for (const auto& l : locs) {
    REQUIRE(l.row >= 0);
    REQUIRE(l.row <= 4);
    REQUIRE(l.col <= 4);
    ++counts[l.row * 5 + l.col];
  }
  double chi2 = 0;
  for (int c : counts) chi2 += (c - 400.0) * (c - 400.0) / 400.0;
  MESSAGE("chi-square = " << chi2);
  CHECK(chi2 < 42.98);  // 0.99 quantile of chi-square with 24 degrees of freedom
  CHECK(sample_locations(big, u) == locs);

  const std::vector<GrayImage> mixed{random_grid(40, 50, 1), random_grid(64, 33, 2)};
  PatchSampler m{32, 500, 7};
  for (const auto& l : sample_locations(mixed, m)) {
    CHECK(l.row + 32 <= mixed[l.image].rows());
    CHECK(l.col + 32 <= mixed[l.image].cols());
  }
  const std::vector<GrayImage> small{random_grid(40, 20, 1)};
  CHECK_THROWS_WITH_AS(sample_locations(small, m, {"tiny.png"}), doctest::Contains("tiny.png"), ConfigError);
}

TEST_CASE("dataset index") {
  const auto root = scratch_dir("dataio_index");
  fs::create_directories(root / "train" / "good");
  fs::create_directories(root / "test" / "good");
  fs::create_directories(root / "test" / "crack");
  fs::create_directories(root / "ground_truth" / "crack");
  const auto img = random_grid(8, 8, 1);
  for (const char* p : {"train/good/000.png", "train/good/001.png", "test/good/000.png", "test/crack/000.png",
                        "test/crack/001.png"})
    save_image(img, root / p);
  save_mask_png(AnomalyMask(8, 8, 1), root / "ground_truth/crack/000_mask.png");
  save_mask_png(AnomalyMask(8, 8, 1), root / "ground_truth/crack/001_mask.png");

  const auto idx = index_mvtec(root, {"test/crack/001.png"});
  CHECK(idx.train_normal.size() == 2u);
  CHECK(idx.validation_defective.size() == 1u);
  CHECK(idx.test.size() == 2u);
  CHECK(idx.validation_defective[0].mask.has_value());
  CHECK_THROWS_AS(index_mvtec(root, {"test/crack/007.png"}), ConfigError);
  CHECK_THROWS_AS(index_mvtec(root / "missing"), ConfigError);

  auto overlap = idx;
  overlap.test.push_back(overlap.validation_defective[0]);
  CHECK_THROWS_AS(overlap.validate(), ConfigError);

  PatchSampler s{8, 20, 1};
  CHECK(sample_patches(idx, s).size() == 20u);
}
