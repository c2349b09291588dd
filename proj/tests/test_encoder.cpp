#include <catch2/catch_amalgamated.hpp>

#include "wifinet/encoder.hpp"
#include "wifinet/rng.hpp"
#include "support.hpp"

using namespace wifinet;
using testsupport::TempDir;
using testsupport::make_sample;

namespace {

Dataset train_with(std::vector<std::vector<std::pair<std::string, int>>> samples) {
  Dataset ds;
  ds.kind = DatasetKind::train;
  ds.positions[0] = {0, 0};
  double ts = 0;
  for (auto& readings : samples)
    ds.samples.push_back(make_sample(std::move(readings), 0, Vec2{0, 0}, ts++));
  return ds;
}

}  // namespace

TEST_CASE("first-appearance order across and within samples") {
  const Dataset ds = train_with({{{"B", -50}, {"A", -60}}, {{"A", -55}, {"C", -70}}});
  const ApDirectory dir = build_directory(ds);
  CHECK(dir.order == std::vector<std::string>{"B", "A", "C"});
  CHECK(dir.n_ap() == 3);
  CHECK(dir.side == 2);
}

TEST_CASE("side is the minimal square") {
  SECTION("113 APs give an 11x11 image") {
    std::vector<std::vector<std::pair<std::string, int>>> rows(1);
    for (int i = 0; i < 113; ++i) rows[0].push_back({"AP" + std::to_string(i), -50});
    const ApDirectory dir = build_directory(train_with(std::move(rows)));
    CHECK(dir.n_ap() == 113);
    CHECK(dir.side == 11);
  }
  SECTION("perfect square: 4 APs give side 2") {
    const ApDirectory dir =
        build_directory(train_with({{{"A", -40}, {"B", -41}, {"C", -42}, {"D", -43}}}));
    CHECK(dir.side == 2);
  }
  SECTION("minimality property") {
    auto rng = make_rng(3);
    for (int rep = 0; rep < 50; ++rep) {
      const int n = std::uniform_int_distribution<int>(1, 300)(rng);
      const int side = image_side_for(n);
      CHECK(side * side >= n);
      CHECK((side - 1) * (side - 1) < n);
    }
  }
}

TEST_CASE("build_directory rejects bad input") {
  Dataset empty;
  empty.kind = DatasetKind::train;
  CHECK_THROWS_AS(build_directory(empty), std::invalid_argument);

  Dataset wrong_kind = train_with({{{"A", -40}}});
  wrong_kind.kind = DatasetKind::test_known;
  CHECK_THROWS_AS(build_directory(wrong_kind), std::invalid_argument);
}

TEST_CASE("encode maps RSS to rss+200 and leaves gaps at 0") {
  SECTION("floor RSS maps to 101 on a 1x1 image") {
    const ApDirectory dir = build_directory(train_with({{{"AP0", -99}}}));
    REQUIRE(dir.side == 1);
    const auto img = encode_sample(make_sample({{"AP0", -99}}), dir);
    CHECK(img.pixels == std::vector<std::uint8_t>{101});
  }
  SECTION("empty scan gives all zeros") {
    const ApDirectory dir = build_directory(train_with({{{"A", -40}, {"B", -50}}}));
    const auto img = encode_sample(RssSample{}, dir);
    CHECK(img.pixels == std::vector<std::uint8_t>(4, 0));
  }
  SECTION("unknown AP dropped, unseen AP zero, padding zero") {
    const ApDirectory dir = build_directory(train_with({{{"A", -40}, {"B", -50}}}));
    REQUIRE(dir.side == 2);
    const auto img = encode_sample(make_sample({{"A", -50}, {"Z", -40}}), dir);
    CHECK(img.pixels == std::vector<std::uint8_t>{150, 0, 0, 0});
  }
  SECTION("label copied from the sample") {
    const ApDirectory dir = build_directory(train_with({{{"A", -40}}}));
    const auto img = encode_sample(make_sample({{"A", -40}}, 7, Vec2{1, 2}), dir);
    CHECK(img.label == 7);
  }
}

TEST_CASE("pixel range property: {0} union [101, 170]") {
  auto rng = make_rng(11);
  std::vector<std::vector<std::pair<std::string, int>>> rows(1);
  for (int i = 0; i < 30; ++i) rows[0].push_back({"AP" + std::to_string(i), -50});
  const ApDirectory dir = build_directory(train_with(std::move(rows)));

  std::uniform_int_distribution<int> rss(kRssFloorDbm, kRssCeilDbm);
  std::uniform_real_distribution<double> keep(0, 1);
  for (int rep = 0; rep < 200; ++rep) {
    RssSample s;
    for (int i = 0; i < 30; ++i)
      if (keep(rng) > 0.4) s.readings.push_back({"AP" + std::to_string(i), rss(rng)});
    const auto img = encode_sample(s, dir);
    for (std::uint8_t p : img.pixels)
      CHECK((p == 0 || (p >= 101 && p <= 170)));
    // padding stays zero
    for (int k = dir.n_ap(); k < dir.side * dir.side; ++k) CHECK(img.pixels[k] == 0);
  }
}

TEST_CASE("boundary intensities: -99 -> 101 and -30 -> 170") {
  const ApDirectory dir = build_directory(train_with({{{"A", -40}, {"B", -50}}}));
  const auto img = encode_sample(make_sample({{"A", -99}, {"B", -30}}), dir);
  CHECK(img.pixels[0] == 101);
  CHECK(img.pixels[1] == 170);
}

TEST_CASE("directory build is deterministic") {
  std::vector<std::vector<std::pair<std::string, int>>> rows = {
      {{"X", -40}, {"Y", -45}}, {{"Z", -50}}, {{"Y", -60}, {"W", -65}}};
  const ApDirectory a = build_directory(train_with(rows));
  const ApDirectory b = build_directory(train_with(rows));
  CHECK(a.order == b.order);
  CHECK(a.side == b.side);
}

TEST_CASE("adjacent APs share a row except at row boundaries") {
  std::vector<std::vector<std::pair<std::string, int>>> rows(1);
  for (int i = 0; i < 9; ++i) rows[0].push_back({"AP" + std::to_string(i), -50});
  const ApDirectory dir = build_directory(train_with(std::move(rows)));
  REQUIRE(dir.side == 3);
  for (int k = 0; k + 1 < dir.n_ap(); ++k) {
    const int row_k = k / dir.side, col_k = k % dir.side;
    const int row_n = (k + 1) / dir.side, col_n = (k + 1) % dir.side;
    if (col_k + 1 < dir.side) {
      CHECK(row_k == row_n);
      CHECK(col_n == col_k + 1);
    } else {
      CHECK(row_n == row_k + 1);
      CHECK(col_n == 0);
    }
  }
}

TEST_CASE("encode_dataset is the element-wise map") {
  const Dataset train = train_with({{{"A", -40}, {"B", -50}, {"C", -60}}});
  const ApDirectory dir = build_directory(train);

  SECTION("empty list") {
    Dataset empty;
    empty.kind = DatasetKind::test_unknown;
    CHECK(encode_dataset(empty, dir).empty());
  }
  SECTION("singleton") {
    Dataset one;
    one.kind = DatasetKind::test_unknown;
    one.samples.push_back(make_sample({{"B", -77}}, std::nullopt, Vec2{0, 0}, 1.0));
    const auto imgs = encode_dataset(one, dir);
    REQUIRE(imgs.size() == 1);
    CHECK(imgs[0] == encode_sample(one.samples[0], dir));
  }
  SECTION("20 random samples, element-wise oracle") {
    auto rng = make_rng(5);
    Dataset ds;
    ds.kind = DatasetKind::test_unknown;
    std::uniform_int_distribution<int> rss(kRssFloorDbm, kRssCeilDbm);
    for (int i = 0; i < 20; ++i) {
      RssSample s;
      s.location = Vec2{0, 0};
      s.timestamp = i;
      if (rss(rng) % 2) s.readings.push_back({"A", rss(rng)});
      s.readings.push_back({"C", rss(rng)});
      ds.samples.push_back(std::move(s));
    }
    const auto imgs = encode_dataset(ds, dir);
    REQUIRE(imgs.size() == ds.samples.size());
    for (std::size_t i = 0; i < imgs.size(); ++i)
      CHECK(imgs[i] == encode_sample(ds.samples[i], dir));
  }
}

TEST_CASE("PGM export") {
  TempDir tmp("pgm");
  SECTION("all-zero 2x2 image") {
    FingerprintImage img;
    img.side = 2;
    img.pixels = {0, 0, 0, 0};
    export_pgm(img, tmp.file("z.pgm"));
    const auto back = import_pgm(tmp.file("z.pgm"));
    CHECK(back.pixels == img.pixels);
  }
  SECTION("values dumped row-major") {
    FingerprintImage img;
    img.side = 2;
    img.pixels = {101, 170, 0, 0};
    export_pgm(img, tmp.file("v.pgm"));
    std::ifstream in(tmp.file("v.pgm"));
    std::string magic;
    int w, h, maxval, a, b, c, d;
    in >> magic >> w >> h >> maxval >> a >> b >> c >> d;
    CHECK(magic == "P2");
    CHECK(maxval == 255);
    CHECK(std::vector<int>{a, b, c, d} == std::vector<int>{101, 170, 0, 0});
  }
  SECTION("export/reload round-trip on random images") {
    auto rng = make_rng(13);
    std::uniform_int_distribution<int> px(0, 1);
    std::uniform_int_distribution<int> val(101, 170);
    for (int rep = 0; rep < 25; ++rep) {
      FingerprintImage img;
      img.side = std::uniform_int_distribution<int>(1, 12)(rng);
      img.pixels.resize(static_cast<std::size_t>(img.side) * img.side);
      for (auto& p : img.pixels) p = px(rng) ? static_cast<std::uint8_t>(val(rng)) : 0;
      export_pgm(img, tmp.file("r.pgm"));
      CHECK(import_pgm(tmp.file("r.pgm")).pixels == img.pixels);
    }
  }
  SECTION("unwritable path") {
    FingerprintImage img;
    img.side = 1;
    img.pixels = {0};
    CHECK_THROWS_AS(export_pgm(img, "/nonexistent-dir/x.pgm"), std::runtime_error);
  }
}

TEST_CASE("directory JSON round-trip") {
  const Dataset train = train_with({{{"B", -50}, {"A", -60}, {"C", -70}}});
  const ApDirectory dir = build_directory(train);
  const ApDirectory back = directory_from_json(directory_to_json(dir));
  CHECK(back.order == dir.order);
  CHECK(back.side == dir.side);
  CHECK(back.index.at("A") == dir.index.at("A"));
}
