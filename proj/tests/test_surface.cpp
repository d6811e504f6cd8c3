// Copyright 2026 mortens authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "mortens/hmd.hpp"
#include "mortens/surface.hpp"

using namespace mortens;
using namespace mortens::mortality;
using Catch::Approx;

namespace {

std::vector<int> iota_vec(int first, int last) {
  std::vector<int> v;
  for (int i = first; i <= last; ++i) v.push_back(i);
  return v;
}

const char* kHmdFixture =
    "Italy, Death rates (period 1x1)\n"
    "\n"
    "  Year          Age             Female            Male           Total\n"
    "  1940           0             0.100000        0.120000        0.110000\n"
    "  1940           1             0.010000        0.012000        0.011000\n"
    "  1940           2             0.005000        0.006000        0.005500\n"
    "  1940           3             0.004000        0.004500        0.004250\n"
    "  1940           4             0.003000        0.003500        0.003250\n"
    "  1940          110+           0.600000        0.700000        0.650000\n"
    "  1941           0             0.090000        0.110000        0.100000\n"
    "  1941           1             .               0.011000        0.011000\n"
    "  1941           2             0.005100        0.006100        0.005600\n"
    "  1941           3             0.004100        0.004600        0.004350\n"
    "  1941           4             0.003100        0.003600        0.003350\n"
    "  1941          110+           0.600000        0.700000        0.650000\n"
    "  1942           0             0.080000        0.100000        0.090000\n"
    "  1942           1             0.020000        0.010000        0.015000\n"
    "  1942           2             0.005200        0.006200        0.005700\n"
    "  1942           3             0.004200        0.004700        0.004450\n"
    "  1942           4             0.003200        0.003700        0.003450\n"
    "  1942          110+           0.600000        0.700000        0.650000\n";

}  // namespace

TEST_CASE("synthetic surfaces are deterministic and parameterized") {
  SynthSpec spec;
  spec.ages = iota_vec(0, 10);
  spec.years = iota_vec(2000, 2030);
  spec.a.assign(11, -4.0);
  spec.b.assign(11, 1.0 / 11.0);
  spec.drift = -1.0;
  spec.seed = 31;

  const auto one = synth_surface(spec);
  const auto two = synth_surface(spec);
  CHECK(one.surface.rates == two.surface.rates);

  // sigma = 0: kappa is exactly linear with the requested drift.
  for (std::size_t t = 1; t < one.kappa.size(); ++t) {
    CHECK(one.kappa[t] - one.kappa[t - 1] == Approx(-1.0).margin(1e-12));
  }
  // zero drift and zero sigma: constant surface
  spec.drift = 0.0;
  const auto flat = synth_surface(spec);
  CHECK((flat.surface.rates.array() == flat.surface.rates(0, 0)).all());

  spec.b.assign(11, 1.0);  // sums to 11, not 1
  CHECK_THROWS_AS(synth_surface(spec), ConfigError);
}

TEST_CASE("surface validation and slicing") {
  SynthSpec spec;
  spec.ages = iota_vec(0, 4);
  spec.years = iota_vec(1990, 1999);
  spec.a.assign(5, -3.0);
  spec.b.assign(5, 0.2);
  const auto s = synth_surface(spec).surface;

  const auto window = s.year_range(1992, 1995);
  CHECK(window.years.front() == 1992);
  CHECK(window.years.back() == 1995);
  CHECK(window.rates.cols() == 4);
  CHECK(window.rates(2, 0) == s.rates(2, 2));

  CHECK_THROWS_AS(s.year_range(1980, 1990), DataError);
  CHECK(s.age_index(3) == 3);
  CHECK_THROWS_AS(s.age_index(7), DataError);

  MortalitySurface bad = s;
  bad.rates(1, 1) = -0.5;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("life expectancy responds to mortality level") {
  Eigen::VectorXd low = Eigen::VectorXd::Constant(101, 0.01);
  Eigen::VectorXd high = Eigen::VectorXd::Constant(101, 0.02);
  const double e_low = life_expectancy_at_birth(low);
  const double e_high = life_expectancy_at_birth(high);
  CHECK(e_low > e_high);
  // Constant hazard 0.01 behaves like an exponential lifetime of ~100 years.
  CHECK(e_low == Approx(100.0).epsilon(0.05));
}

TEST_CASE("HMD fixture parses exactly and repairs missing cells") {
  std::istringstream in(kHmdFixture);
  const auto ingest = parse_hmd(in);
  REQUIRE(ingest.surfaces.size() == 2);
  const auto& female = ingest.surface(Gender::female);
  const auto& male = ingest.surface(Gender::male);

  CHECK(female.ages == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(female.years == std::vector<int>{1940, 1941, 1942});
  CHECK(female.rates(0, 0) == 0.1);
  CHECK(male.rates(0, 2) == 0.1);

  // The "." at (age 1, 1941) is repaired by the log-scale midpoint of the
  // flanking values 0.01 and 0.02.
  CHECK(female.rates(1, 1) == Approx(std::exp(0.5 * (std::log(0.01) + std::log(0.02)))));
  REQUIRE(ingest.repairs.size() == 1);
  CHECK(ingest.repairs[0].age == 1);
  CHECK(ingest.repairs[0].year == 1941);
  CHECK(ingest.repairs[0].action == "interpolated");

  // 110+ rows were clipped and noted.
  REQUIRE_FALSE(ingest.notes.empty());
  CHECK(ingest.notes[0].find("clipped") != std::string::npos);
}

TEST_CASE("geometric-mean repair arithmetic matches the worked value") {
  std::string text = "Year Age Female Male\n";
  for (int year = 1940; year <= 1942; ++year) {
    for (int age = 50; age <= 54; ++age) {
      if (year == 1941 && age == 50) {
        text += "1941 50 . 0.001\n";
      } else {
        const double f = (age == 50) ? (year == 1940 ? 0.001 : 0.002) : 0.003;
        text += std::to_string(year) + " " + std::to_string(age) + " " +
                std::to_string(f) + " 0.001\n";
      }
    }
  }
  std::istringstream in(text);
  const auto ingest = parse_hmd(in);
  CHECK(ingest.surface(Gender::female).rates(0, 1) ==
        Approx(0.001414213562373095).epsilon(1e-9));
}

TEST_CASE("a year missing too many ages aborts ingestion") {
  std::string text = "Year Age Female Male\n";
  for (int age = 0; age < 4; ++age) {
    text += "1940 " + std::to_string(age) + " 0.01 0.01\n";
  }
  // 2 of 4 ages missing in 1941 (> 20%)
  text += "1941 0 . 0.01\n1941 1 . 0.01\n1941 2 0.01 0.01\n1941 3 0.01 0.01\n";
  std::istringstream in(text);
  CHECK_THROWS_AS(parse_hmd(in), DataError);
}

TEST_CASE("unparseable rows report line numbers") {
  std::string text =
      "Year Age Female Male\n"
      "1940 0 0.01 0.01\n"
      "1941 0 zzz 0.01\n";
  std::istringstream in(text);
  try {
    parse_hmd(in);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("requested year range restricts ingestion") {
  std::istringstream in(kHmdFixture);
  const auto ingest = parse_hmd(in, std::make_pair(1941, 1942));
  CHECK(ingest.surface(Gender::male).years == std::vector<int>{1941, 1942});
}

TEST_CASE("surface CSV round-trips repaired surfaces exactly") {
  std::istringstream in(kHmdFixture);
  const auto ingest = parse_hmd(in);

  std::ostringstream csv;
  write_surface_csv(csv, ingest.surfaces);
  std::istringstream back(csv.str());
  const auto reread = read_surface_csv(back);
  REQUIRE(reread.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(reread[i].gender == ingest.surfaces[i].gender);
    CHECK(reread[i].ages == ingest.surfaces[i].ages);
    CHECK(reread[i].years == ingest.surfaces[i].years);
    CHECK(reread[i].rates == ingest.surfaces[i].rates);
  }

  std::ostringstream csv2;
  write_surface_csv(csv2, reread);
  CHECK(csv.str() == csv2.str());
}
