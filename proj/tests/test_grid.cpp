#include <cmath>
#include <random>

#include "doctest.h"
#include "tcr/bytes.hpp"
#include "tcr/error.hpp"
#include "tcr/grd_io.hpp"
#include "tcr/grid.hpp"

using namespace tcr;

TEST_SUITE("grid") {
  TEST_CASE("canonical channel indices") {
    CHECK(channel_index(ChannelId::Z850) == 0);
    CHECK(channel_index(ChannelId::MSL) == 17);
    CHECK(channel_index(ChannelId::WS10M) == 20);
    CHECK(canonical_channels().size() == 21);
    for (int i = 0; i < kNumChannels; ++i) {
      const ChannelId id = channel_from_index(i);
      CHECK(channel_index(id) == i);
      CHECK(channel_index(channel_name(id)) == i);
    }
    CHECK_THROWS_WITH_AS(channel_index("Q850"), doctest::Contains("Q850"), std::invalid_argument);
  }

  TEST_CASE("haversine oracle values") {
    const double R = 6371.0;
    CHECK(haversine_km({0, 0}, {0, 1}) == doctest::Approx(2 * M_PI * R / 360).epsilon(1e-12));
    CHECK(std::abs(haversine_km({0, 0}, {0, 1}) - 111.195) < 1e-3);
    CHECK(std::abs(haversine_km({0, 0}, {90, 0}) - 10007.543) < 1e-3);
    CHECK(haversine_km({12.5, 140.25}, {12.5, 140.25}) == 0.0);
  }

  TEST_CASE("haversine symmetry and triangle inequality") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> lat(-89.0, 89.0), lon(-180.0, 179.9);
    for (int k = 0; k < 1000; ++k) {
      LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
      CHECK(haversine_km(a, b) == haversine_km(b, a));
      CHECK(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6);
    }
  }

  TEST_CASE("geo window node convention") {
    const GeoWindow g = GeoWindow::centered({20.0, 140.0}, 10.0, 64, 64);
    CHECK(g.dlat == doctest::Approx(0.15625));
    CHECK(g.lat_of_row(32) == doctest::Approx(20.0));
    CHECK(g.lon_of_col(32) == doctest::Approx(140.0));
    CHECK(g.lat_of_row(0) > g.lat_of_row(1));
    CHECK(g.lon_of_col(0) < g.lon_of_col(1));
    CHECK(g.extent_lat() == doctest::Approx(10.0));
  }

  static FieldStack ramp_stack(int h, int w) {
    FieldStack s = FieldStack::canonical(GeoWindow::centered({15.0, 130.0}, 10.0 * h / 64.0, h, w), 1000, 0);
    for (int c = 0; c < s.num_channels(); ++c)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) s.at(c, i, j) = static_cast<float>(c * 1000 + i * w + j);
    return s;
  }

  TEST_CASE("crop_window identity, interior and edge replication") {
    const FieldStack s = ramp_stack(16, 16);
    const auto full = crop_window(s, {s.geo().lat_center, s.geo().lon_center}, s.geo().extent_lat());
    CHECK_FALSE(full.padded);
    CHECK(full.stack.data() == s.data());

    const LatLon c{s.geo().lat_of_row(8), s.geo().lon_of_col(8)};
    const auto inner = crop_window(s, c, 4 * s.geo().dlat);
    CHECK_FALSE(inner.padded);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(inner.stack.at(3, i, j) == s.at(3, 6 + i, 6 + j));

    // Window of 4 cells centered on column 1 starts at column -1.
    const auto west = crop_window(s, {s.geo().lat_of_row(8), s.geo().lon_of_col(1)}, 4 * s.geo().dlat);
    CHECK(west.padded);
    for (int i = 0; i < 4; ++i) {
      CHECK(west.stack.at(0, i, 0) == s.at(0, 6 + i, 0));
      CHECK(west.stack.at(0, i, 1) == s.at(0, 6 + i, 0));
    }
    const auto again = crop_window(west.stack, {west.stack.geo().lat_center, west.stack.geo().lon_center},
                                   4 * s.geo().dlat);
    CHECK(again.stack.data() == west.stack.data());
    CHECK_THROWS_AS(crop_window(s, c, 100.0), std::invalid_argument);
  }

  TEST_CASE("bilinear_resample examples and convexity") {
    const std::vector<float> f{0, 1, 0, 1};
    const auto r = bilinear_resample(f, 2, 2, 2, 3);
    CHECK(r[1] == doctest::Approx(0.5));
    CHECK(r[4] == doctest::Approx(0.5));
    CHECK(bilinear_resample(f, 2, 2, 2, 2) == f);
    const std::vector<float> c(12, 3.25f);
    for (float v : bilinear_resample(c, 3, 4, 7, 5)) CHECK(v == 3.25f);
    CHECK_THROWS_AS(bilinear_resample(f, 2, 2, 1, 3), std::invalid_argument);

    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(-5, 5);
    std::vector<float> g(30);
    for (auto& v : g) v = u(rng);
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    for (float v : bilinear_resample(g, 5, 6, 13, 9)) {
      CHECK(v >= *lo);
      CHECK(v <= *hi);
    }
  }

  TEST_CASE("grd container round trip and header layout") {
    FieldStack s = ramp_stack(8, 8);
    s.set_lead_hours(48);
    const auto bytes = encode_grd(s);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "3DTC");
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    const FieldStack back = decode_grd(bytes);
    CHECK(back.data() == s.data());
    CHECK(back.lead_hours() == 48);
    CHECK(back.valid_time() == 1000);
    CHECK(back.geo() == s.geo());
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_grd(bad), DataError);
    bad = bytes;
    bad.resize(bad.size() - 3);
    CHECK_THROWS_AS(decode_grd(bad), DataError);
  }

  TEST_CASE("field stack rejects non-finite values") {
    FieldStack s = ramp_stack(8, 8);
    s.at(2, 3, 4) = std::nanf("");
    CHECK_THROWS_AS(s.validate_finite(), NumericalError);
  }

  TEST_CASE("track validation uses the translation bound") {
    CycloneTrack t;
    t.fixes.push_back({0, 20.0, 140.0, 30.0, 97000.0, false});
    t.fixes.push_back({21600, 20.0, 140.5, 30.0, 97000.0, false});
    CHECK_NOTHROW(t.validate());
    t.fixes.push_back({43200, 20.0, 149.0, 30.0, 97000.0, false});
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  }
}
