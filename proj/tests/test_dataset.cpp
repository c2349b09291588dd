#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "wifinet/dataset.hpp"
#include "wifinet/rng.hpp"
#include "support.hpp"

using namespace wifinet;
using testsupport::TempDir;
using testsupport::make_sample;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

Dataset random_dataset(std::mt19937_64& rng, int n_positions, int n_aps, int scans) {
  Dataset ds;
  ds.kind = DatasetKind::train;
  std::vector<std::string> aps;
  for (int a = 0; a < n_aps; ++a) aps.push_back("AA:BB:CC:00:00:" + std::to_string(a));

  std::uniform_int_distribution<int> rss(kRssFloorDbm, kRssCeilDbm);
  std::uniform_real_distribution<double> coord(0.0, 50.0);

  for (int p = 0; p < n_positions; ++p) ds.positions[p] = {coord(rng), 1.0 + p};

  double ts = 0;
  for (int p = 0; p < n_positions; ++p) {
    for (int k = 0; k < scans; ++k) {
      RssSample s;
      s.position_id = p;
      s.location = ds.positions[p];
      s.timestamp = ts++;
      for (const auto& ap : aps)
        if (std::uniform_real_distribution<double>(0, 1)(rng) > 0.3)
          s.readings.push_back({ap, rss(rng)});
      if (s.readings.empty()) s.readings.push_back({aps[0], rss(rng)});
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("single-row file parses to one sample") {
  TempDir tmp("ds1");
  write_file(tmp.file("a.csv"),
             "timestamp,position_id,x,y,readings\n"
             "1000,0,0.0,0.0,AA:BB:-50\n");
  const Dataset ds = parse_dataset(tmp.file("a.csv"), DatasetKind::train);
  REQUIRE(ds.samples.size() == 1);
  const auto& s = ds.samples[0];
  CHECK(s.timestamp == 1000.0);
  CHECK(s.position_id == 0);
  CHECK(s.location == Vec2{0.0, 0.0});
  REQUIRE(s.readings.size() == 1);
  CHECK(s.readings[0].ap_id == "AA:BB");
  CHECK(s.readings[0].rss_dbm == -50);
  CHECK(ds.positions.at(0) == Vec2{0.0, 0.0});
}

TEST_CASE("AP ids keep embedded and trailing colons verbatim") {
  TempDir tmp("ds_colon");
  write_file(tmp.file("a.csv"),
             "timestamp,position_id,x,y,readings\n"
             "1,0,0,0,AA:BB::-50;11:22:33:44:55:66:-80\n");
  const Dataset ds = parse_dataset(tmp.file("a.csv"), DatasetKind::train);
  REQUIRE(ds.samples[0].readings.size() == 2);
  CHECK(ds.samples[0].readings[0].ap_id == "AA:BB:");
  CHECK(ds.samples[0].readings[0].rss_dbm == -50);
  CHECK(ds.samples[0].readings[1].ap_id == "11:22:33:44:55:66");
  CHECK(ds.samples[0].readings[1].rss_dbm == -80);
}

TEST_CASE("out-of-range RSS names the line") {
  TempDir tmp("ds2");
  write_file(tmp.file("a.csv"),
             "timestamp,position_id,x,y,readings\n"
             "1,0,0,0,AP1:-50\n"
             "2,0,0,0,AP1:-120\n");
  try {
    parse_dataset(tmp.file("a.csv"), DatasetKind::train);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("-120") != std::string::npos);
  }
}

TEST_CASE("parse error cases") {
  TempDir tmp("ds3");
  const std::string header = "timestamp,position_id,x,y,readings\n";

  SECTION("train sample missing position_id") {
    write_file(tmp.file("a.csv"), header + "1,,0,0,AP1:-50\n");
    CHECK_THROWS_AS(parse_dataset(tmp.file("a.csv"), DatasetKind::train), ParseError);
  }
  SECTION("duplicate AP within a sample") {
    write_file(tmp.file("a.csv"), header + "1,0,0,0,AP1:-50;AP1:-60\n");
    CHECK_THROWS_WITH(parse_dataset(tmp.file("a.csv"), DatasetKind::train),
                      Catch::Matchers::ContainsSubstring("duplicate AP"));
  }
  SECTION("duplicate (timestamp, position, ap) triple across rows") {
    write_file(tmp.file("a.csv"), header + "1,0,0,0,AP1:-50\n1,0,0,0,AP1:-55\n");
    CHECK_THROWS_WITH(parse_dataset(tmp.file("a.csv"), DatasetKind::train),
                      Catch::Matchers::ContainsSubstring("triple"));
  }
  SECTION("malformed row reports its line number") {
    write_file(tmp.file("a.csv"), header + "1,0,0,0,AP1:-50\nnot-a-row\n");
    try {
      parse_dataset(tmp.file("a.csv"), DatasetKind::train);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SECTION("bad header") {
    write_file(tmp.file("a.csv"), "nope\n1,0,0,0,AP1:-50\n");
    CHECK_THROWS_AS(parse_dataset(tmp.file("a.csv"), DatasetKind::train), ParseError);
  }
  SECTION("position with conflicting coordinates") {
    write_file(tmp.file("a.csv"), header + "1,0,0,0,AP1:-50\n2,0,1,1,AP1:-50\n");
    CHECK_THROWS_AS(parse_dataset(tmp.file("a.csv"), DatasetKind::train), ParseError);
  }
}

TEST_CASE("serialize rejects invalid datasets") {
  TempDir tmp("ds4");
  SECTION("empty readings") {
    Dataset ds;
    ds.kind = DatasetKind::test_unknown;
    ds.samples.push_back(make_sample({}, std::nullopt, Vec2{0, 0}, 1.0));
    CHECK_THROWS_AS(serialize_dataset(ds, tmp.file("x.csv")), std::invalid_argument);
  }
  SECTION("unwritable path") {
    Dataset ds;
    ds.kind = DatasetKind::test_unknown;
    ds.samples.push_back(make_sample({{"AP1", -50}}, std::nullopt, Vec2{0, 0}, 1.0));
    CHECK_THROWS_AS(serialize_dataset(ds, "/nonexistent-dir/x.csv"), std::runtime_error);
  }
}

TEST_CASE("one sample serialises to header plus one row") {
  TempDir tmp("ds5");
  Dataset ds;
  ds.kind = DatasetKind::train;
  ds.positions[0] = {1.5, 2.5};
  ds.samples.push_back(make_sample({{"AP1", -42}}, 0, Vec2{1.5, 2.5}, 7.0));
  serialize_dataset(ds, tmp.file("one.csv"));

  std::ifstream in(tmp.file("one.csv"));
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  const bool has_third = static_cast<bool>(std::getline(in, l3));
  CHECK(l1 == "timestamp,position_id,x,y,readings");
  CHECK(l2 == "7,0,1.5,2.5,AP1:-42");
  CHECK_FALSE(has_third);
}

TEST_CASE("hand-built 3-position 2-AP dataset round-trips") {
  TempDir tmp("ds6");
  Dataset ds;
  ds.kind = DatasetKind::train;
  ds.positions = {{0, {0, 0}}, {1, {3, 0}}, {2, {0, 4}}};
  double ts = 0;
  for (int p = 0; p < 3; ++p) {
    ds.samples.push_back(
        make_sample({{"AP1", -40 - p}, {"AP2", -60 - p}}, p, ds.positions[p], ts++));
  }
  serialize_dataset(ds, tmp.file("rt.csv"));
  const Dataset back = parse_dataset(tmp.file("rt.csv"), DatasetKind::train);
  CHECK(back == ds);
}

TEST_CASE("serialize/parse round-trip on random datasets") {
  TempDir tmp("ds7");
  auto rng = make_rng(20240811);
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset ds = random_dataset(rng, 4, 6, 5);  // 100+ samples over the reps
    serialize_dataset(ds, tmp.file("r.csv"));
    const Dataset back = parse_dataset(tmp.file("r.csv"), DatasetKind::train);
    REQUIRE(back == ds);
  }
}

TEST_CASE("trajectory kind requires timestamps and order") {
  TempDir tmp("ds8");
  const std::string header = "timestamp,position_id,x,y,readings\n";
  SECTION("unordered timestamps rejected") {
    write_file(tmp.file("a.csv"), header + "5,,0,0,AP1:-50\n1,,1,1,AP1:-51\n");
    CHECK_THROWS_AS(parse_dataset(tmp.file("a.csv"), DatasetKind::test_trajectory),
                    std::invalid_argument);
  }
  SECTION("missing timestamp rejected") {
    write_file(tmp.file("a.csv"), header + ",,0,0,AP1:-50\n");
    CHECK_THROWS_AS(parse_dataset(tmp.file("a.csv"), DatasetKind::test_trajectory),
                    std::invalid_argument);
  }
  SECTION("ordered trajectory accepted without labels") {
    write_file(tmp.file("a.csv"), header + "1,,0,0,AP1:-50\n2,,1,1,AP1:-51\n");
    const Dataset ds = parse_dataset(tmp.file("a.csv"), DatasetKind::test_trajectory);
    CHECK(ds.samples.size() == 2);
    CHECK_FALSE(ds.samples[0].position_id.has_value());
  }
}

TEST_CASE("spacing stats: symmetric pair") {
  const SpacingStats st = spacing_stats(std::vector<Vec2>{{0, 0}, {3, 0}});
  CHECK(st.min_m == Catch::Approx(3.0));
  CHECK(st.mean_m == Catch::Approx(3.0));
  CHECK(st.max_m == Catch::Approx(3.0));
}

TEST_CASE("spacing stats: 1-D line 0, 3, 10") {
  // nearest-neighbour distances by hand: 3 (from 0), 3 (from 3), 7 (from 10)
  const SpacingStats st = spacing_stats(std::vector<Vec2>{{0, 0}, {3, 0}, {10, 0}});
  CHECK(st.min_m == Catch::Approx(3.0));
  CHECK(st.max_m == Catch::Approx(7.0));
  CHECK(st.mean_m == Catch::Approx((3.0 + 3.0 + 7.0) / 3.0));
}

TEST_CASE("spacing stats are permutation-invariant") {
  auto rng = make_rng(99);
  std::vector<Vec2> pts;
  std::uniform_real_distribution<double> u(0, 20);
  for (int i = 0; i < 12; ++i) pts.push_back({u(rng), u(rng)});

  const SpacingStats a = spacing_stats(pts);
  std::shuffle(pts.begin(), pts.end(), rng);
  const SpacingStats b = spacing_stats(pts);
  CHECK(a.min_m == b.min_m);
  CHECK(a.mean_m == Catch::Approx(b.mean_m).epsilon(1e-12));
  CHECK(a.max_m == b.max_m);
}

TEST_CASE("spacing stats need two positions") {
  CHECK_THROWS_AS(spacing_stats(std::vector<Vec2>{{0, 0}}), std::invalid_argument);
}

TEST_CASE("accepted datasets never contain out-of-range RSS") {
  auto rng = make_rng(7);
  TempDir tmp("ds9");
  const Dataset ds = random_dataset(rng, 3, 5, 4);
  serialize_dataset(ds, tmp.file("ok.csv"));
  const Dataset back = parse_dataset(tmp.file("ok.csv"), DatasetKind::train);
  for (const auto& s : back.samples)
    for (const auto& r : s.readings) {
      CHECK(r.rss_dbm >= kRssFloorDbm);
      CHECK(r.rss_dbm <= kRssCeilDbm);
    }
}
