#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "psi/checkpoint.hpp"
#include "psi/io.hpp"

using namespace psi;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path p;
  TempDir() : p(fs::temp_directory_path() /
                ("psi_io_" + std::to_string(::getpid()))) {
    fs::create_directories(p);
  }
  ~TempDir() { fs::remove_all(p); }
};

}  // namespace

TEST_CASE("ppm images survive a disk round trip") {
  TempDir tmp;
  RgbImage img(5, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x)
      img.set(x, y, {static_cast<uint8_t>(x * 50), static_cast<uint8_t>(y * 80),
                     static_cast<uint8_t>(x + y)});
  fs::path f = tmp.p / "img.ppm";
  write_ppm(f, img);
  CHECK(read_ppm(f) == img);

  // Header: binary P6, explicit size, 8-bit maxval.
  std::ifstream is(f);
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  CHECK(magic == "P6");
  CHECK(w == 5);
  CHECK(h == 3);
  CHECK(maxval == 255);

  std::ofstream(tmp.p / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_ppm(tmp.p / "bad.ppm"), IoError);
  CHECK_THROWS_AS(read_ppm(tmp.p / "absent.ppm"), IoError);
}

TEST_CASE("i16 arrays carry their shape in a json sidecar") {
  TempDir tmp;
  std::vector<int16_t> data{3, -1, 0, 32767, -32768, 7};
  write_i16_array(tmp.p / "arr", data, {2, 3});

  I16Array back = read_i16_array(tmp.p / "arr");
  CHECK(back.data == data);
  CHECK(back.shape == std::vector<int>{2, 3});

  std::ifstream js(tmp.p / "arr.json");
  nlohmann::json j = nlohmann::json::parse(js);
  CHECK(j.at("dtype") == "int16le");
  CHECK(j.at("shape") == nlohmann::json::array({2, 3}));

  CHECK_THROWS_AS(write_i16_array(tmp.p / "bad", data, {2, 2}), ShapeError);
  CHECK_THROWS_AS(read_i16_array(tmp.p / "absent"), IoError);
  // A sidecar promising more data than the payload holds is an I/O error.
  write_i16_array(tmp.p / "short", data, {2, 3});
  std::ofstream(tmp.p / "short.json")
      << R"({"shape": [4, 3], "dtype": "int16le"})" << "\n";
  CHECK_THROWS_AS(read_i16_array(tmp.p / "short"), IoError);
}

TEST_CASE("key=value configs parse comments, blanks and nothing else") {
  KvConfig cfg = KvConfig::parse_text(
      "# leading comment\n"
      "\n"
      "  alpha = 3 \n"
      "beta=hello world\n"
      "gamma=\n");
  CHECK(cfg.get_int("alpha", -1) == 3);
  CHECK(cfg.get("beta") == "hello world");
  CHECK(cfg.get("gamma").empty());
  CHECK(cfg.get_or("missing", "fallback") == "fallback");
  CHECK(!cfg.has("missing"));
  CHECK_THROWS_AS(cfg.get("missing"), ConfigError);

  CHECK_THROWS_AS(KvConfig::parse_text("not a pair\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_text("=value\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_text("a=1\na=2\n"), ConfigError);

  CHECK_THROWS_AS(cfg.get_int("beta", 0), ConfigError);
  CHECK_THROWS_AS(cfg.get_double("beta", 0.0), ConfigError);
  CHECK_THROWS_AS(cfg.get_bool("beta", false), ConfigError);
  KvConfig flags = KvConfig::parse_text("a=true\nb=1\nc=false\nd=0\n");
  CHECK(flags.get_bool("a", false));
  CHECK(flags.get_bool("b", false));
  CHECK(!flags.get_bool("c", true));
  CHECK(!flags.get_bool("d", true));

  cfg.require_known_keys({"alpha", "beta", "gamma"});
  CHECK_THROWS_AS(cfg.require_known_keys({"alpha"}), ConfigError);

  // to_text round-trips through the parser.
  KvConfig again = KvConfig::parse_text(cfg.to_text());
  CHECK(again.entries() == cfg.entries());
}

TEST_CASE("list and palette literals parse both ways") {
  CHECK(parse_vec2_list("2:0,-2:0,0:1") ==
        std::vector<Vec2>{{2, 0}, {-2, 0}, {0, 1}});
  CHECK(parse_vec2_list("").empty());
  CHECK_THROWS_AS(parse_vec2_list("2;0"), ConfigError);
  CHECK(format_vec2_list({{2, 0}, {-2, 0}}) == "2:0,-2:0");
  CHECK(parse_vec2_list(format_vec2_list({{1, -3}, {0, 0}})) ==
        std::vector<Vec2>{{1, -3}, {0, 0}});

  CHECK(parse_int_list("1,2,-4") == std::vector<int>{1, 2, -4});

  std::vector<Rgb> pal{{16, 16, 16}, {230, 25, 75}};
  CHECK(parse_palette(format_palette(pal)) == pal);
  CHECK(parse_palette("ff00ff")[0] == Rgb{255, 0, 255});
  CHECK_THROWS_AS(parse_palette("ff00"), ConfigError);
}

TEST_CASE("metrics append as one json object per line") {
  TempDir tmp;
  fs::path f = tmp.p / "metrics.jsonl";
  MetricsWriter w(f);
  w.write("loss", 0.5, "train", 10, 42);
  w.write("accuracy", 0.875);
  w.write("iou", 1.0, "val", 3, 7, {{"sprite", 0}});

  nlohmann::json arr = read_jsonl(f);
  REQUIRE(arr.size() == 3);
  CHECK(arr[0]["metric"] == "loss");
  CHECK(arr[0]["value"] == 0.5);
  CHECK(arr[0]["split"] == "train");
  CHECK(arr[0]["step"] == 10);
  CHECK(arr[0]["seed"] == 42);
  // Optional fields stay absent rather than defaulted.
  CHECK(!arr[1].contains("split"));
  CHECK(!arr[1].contains("step"));
  CHECK(!arr[1].contains("seed"));
  CHECK(arr[2]["extra"]["sprite"] == 0);

  // Writers append; a second writer on the same path extends the stream.
  MetricsWriter w2(f);
  w2.write("loss", 0.25, "train", 11, 42);
  CHECK(read_jsonl(f).size() == 4);

  CHECK_THROWS_AS(read_jsonl(tmp.p / "absent.jsonl"), IoError);
}

TEST_CASE("loss curves round-trip through csv") {
  TempDir tmp;
  std::vector<TrainLogPoint> curve{{1, 0.001f, 6.25f},
                                   {2, 0.002f, 5.5f},
                                   {3, 0.003f, 4.125f}};
  fs::path f = tmp.p / "loss.csv";
  save_loss_csv(f, curve);
  std::vector<TrainLogPoint> back = load_loss_csv(f);
  REQUIRE(back.size() == curve.size());
  for (size_t i = 0; i < curve.size(); ++i) {
    CHECK(back[i].step == curve[i].step);
    CHECK(back[i].lr == curve[i].lr);
    CHECK(back[i].loss == curve[i].loss);
  }
}

TEST_CASE("diagnostic renderings keep shape and mark the masked") {
  Grid<Vec2> u(2, 3, Vec2{0, 0});
  u.at(0, 1) = {2, 0};
  u.at(1, 2) = {0, -2};
  Grid<uint8_t> valid(2, 3, 1);
  valid.at(1, 0) = 0;

  RgbImage fl = flow_to_rgb(u, &valid, 2.0);
  CHECK(fl.width == 3);
  CHECK(fl.height == 2);
  CHECK(fl.at(0, 1) == Rgb{32, 32, 32});            // masked
  CHECK(fl.at(1, 0) != fl.at(2, 1));                // directions separate
  CHECK(flow_to_rgb(u, nullptr, 2.0).at(0, 1) != Rgb{32, 32, 32});

  Grid<double> z(2, 2, 1.0);
  z.at(0, 0) = 4.0;
  Grid<uint8_t> zv(2, 2, 1);
  zv.at(1, 1) = 0;
  RgbImage dg = depth_to_gray(z, &zv);
  CHECK(dg.at(1, 1) == Rgb{255, 0, 0});             // masked
  CHECK(dg.at(0, 0).r < dg.at(1, 0).r);             // near is brighter

  RgbImage base(2, 2);
  base.set(0, 0, {100, 100, 100});
  Image mask(2, 2, 0);
  mask.at(0, 0) = 1;
  RgbImage ov = mask_overlay(base, mask);
  CHECK(ov.at(0, 0) == Rgb{177, 50, 50});
  CHECK(ov.at(1, 1) == base.at(1, 1));
  CHECK_THROWS_AS(mask_overlay(base, Image(3, 3, 0)), ShapeError);

  RgbImage up = upscale(base, 3);
  CHECK(up.width == 6);
  CHECK(up.height == 6);
  CHECK(up.at(2, 2) == base.at(0, 0));
  CHECK(up.at(3, 3) == base.at(1, 1));
}
