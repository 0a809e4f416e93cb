#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "siparray/geometry.hpp"

using namespace siparray;

TEST_CASE("supercell site count and sublattice balance") {
  const auto cell = build_supercell({6, 6, 6});
  CHECK(cell.n_sites() == 8 * 6 * 6 * 6);
  int na = 0, nb = 0;
  for (const auto& s : cell.sites)
    (s.sublattice == Sublattice::A ? na : nb)++;
  CHECK(na == nb);
  CHECK_THROWS_AS(build_supercell({3, 6, 6}), GeometryError);
}

TEST_CASE("all bonds have the diamond nearest-neighbor length") {
  const auto cell = build_supercell({5, 4, 6});
  const double bond = std::sqrt(3.0) / 4.0;
  for (const auto& s : cell.sites)
    for (int b = 0; b < 4; ++b) {
      const auto j = cell.neighbors[s.index][b];
      if (j < 0) continue;
      CHECK_THAT((cell.sites[j].position() - s.position()).norm(),
                 Catch::Matchers::WithinAbs(bond, 1e-12));
      CHECK(cell.sites[j].sublattice != s.sublattice);
    }
}

TEST_CASE("neighbor lists are reciprocal with reversed directions") {
  const auto cell = build_supercell({4, 4, 4});
  for (const auto& s : cell.sites)
    for (int b = 0; b < 4; ++b) {
      const auto j = cell.neighbors[s.index][b];
      if (j < 0) continue;
      bool found = false;
      for (int bb = 0; bb < 4; ++bb)
        if (cell.neighbors[j][bb] == s.index) {
          found = true;
          CHECK((cell.neighbor_dir[s.index][b] + 4) % 8 ==
                cell.neighbor_dir[j][bb]);
        }
      CHECK(found);
    }
}

TEST_CASE("interior sites are 4-coordinated, surface sites dangle") {
  const auto cell = build_supercell({4, 4, 4});
  int n_surface = 0;
  for (const auto& s : cell.sites) {
    int n = 0;
    for (int b = 0; b < 4; ++b)
      if (cell.neighbors[s.index][b] >= 0) ++n;
    if (cell.is_surface(s.index)) {
      ++n_surface;
      CHECK(n < 4);
    } else {
      CHECK(n == 4);
    }
  }
  CHECK(n_surface > 0);
  CHECK(n_surface < cell.n_sites());
}

TEST_CASE("site lookup round-trips every site") {
  const auto cell = build_supercell({4, 5, 4});
  for (const auto& s : cell.sites)
    CHECK(cell.find_site(s.pos_quarter) == s.index);
  CHECK(cell.find_site({1, 0, 0}) == -1);  // not a lattice point
}

TEST_CASE("dimer along [100] lands on A sites at the exact separation") {
  auto cell = build_supercell({16, 16, 16});
  const auto geo = place_dopants(cell, ArrayFamily::dimer_100, 8.0);
  REQUIRE(geo.dopant_sites.size() == 2);
  CHECK_THAT(geo.actual_d, Catch::Matchers::WithinAbs(8.0, 1e-12));
  for (auto idx : geo.dopant_sites) {
    CHECK(cell.sites[idx].sublattice == Sublattice::A);
    CHECK(cell.sites[idx].species == Species::P);
  }
  const auto p0 = cell.sites[geo.dopant_sites[0]].position();
  const auto p1 = cell.sites[geo.dopant_sites[1]].position();
  CHECK(p0.y() == p1.y());
  CHECK(p0.z() == p1.z());
  CHECK_THAT((p0 + p1).x() / 2, Catch::Matchers::WithinAbs(8.0, 0.51));
}

TEST_CASE("off-lattice request snaps to the nearest substitutional site") {
  auto cell = build_supercell({18, 18, 18});
  const auto geo = place_dopants(cell, ArrayFamily::dimer_100, 8.3);
  CHECK(geo.requested_d == 8.3);
  CHECK_THAT(geo.actual_d, Catch::Matchers::WithinAbs(8.0, 1e-12));
}

TEST_CASE("dimer along [110]") {
  auto cell = build_supercell({12, 12, 12});
  const double d = 4.0 * std::sqrt(2.0);
  const auto geo = place_dopants(cell, ArrayFamily::dimer_110, d);
  CHECK_THAT(geo.actual_d, Catch::Matchers::WithinAbs(d, 1e-12));
  const auto v = cell.sites[geo.dopant_sites[1]].position() -
                 cell.sites[geo.dopant_sites[0]].position();
  CHECK_THAT(std::abs(v.x()), Catch::Matchers::WithinAbs(std::abs(v.y()), 1e-12));
  CHECK_THAT(v.z(), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("linear trimer is centered with equal arms") {
  auto cell = build_supercell({20, 20, 20});
  const auto geo = place_dopants(cell, ArrayFamily::trimer_100, 5.0);
  REQUIRE(geo.dopant_sites.size() == 3);
  const auto inner = cell.sites[geo.dopant_sites[0]].position();
  const auto a = cell.sites[geo.dopant_sites[1]].position();
  const auto b = cell.sites[geo.dopant_sites[2]].position();
  CHECK_THAT((a - inner).norm(), Catch::Matchers::WithinAbs(5.0, 1e-12));
  CHECK_THAT((b - inner).norm(), Catch::Matchers::WithinAbs(5.0, 1e-12));
  CHECK_THAT((a + b - 2 * inner).norm(), Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(geo.actual_d, Catch::Matchers::WithinAbs(5.0, 1e-12));
}

TEST_CASE("square with [100]-diagonals has equal sides and right angles") {
  auto cell = build_supercell({20, 20, 20});
  const double d = 4.0 * std::sqrt(2.0);
  const auto geo = place_dopants(cell, ArrayFamily::square_diag_100, d);
  REQUIRE(geo.dopant_sites.size() == 4);
  CHECK_THAT(geo.actual_d, Catch::Matchers::WithinAbs(d, 1e-12));
  std::array<Eigen::Vector3d, 4> p;
  for (int i = 0; i < 4; ++i) p[i] = cell.sites[geo.dopant_sites[i]].position();
  for (int i = 0; i < 4; ++i) {
    const auto side = p[(i + 1) % 4] - p[i];
    const auto next = p[(i + 2) % 4] - p[(i + 1) % 4];
    CHECK_THAT(side.norm(), Catch::Matchers::WithinAbs(d, 1e-12));
    CHECK_THAT(side.dot(next), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }
  // diagonals run along the coordinate axes
  const auto diag = p[2] - p[0];
  CHECK_THAT(diag.y(), Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(diag.z(), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("placement preconditions") {
  auto cell = build_supercell({16, 16, 16});
  CHECK_THROWS_AS(place_dopants(cell, ArrayFamily::dimer_100, 3.0),
                  GeometryError);
  CHECK_THROWS_AS(place_dopants(cell, ArrayFamily::dimer_100, 9.0),
                  GeometryError);  // beyond extent/2 with default margin
  // an explicit margin relaxes the extent/2 cap
  auto cell2 = build_supercell({16, 16, 16});
  const auto geo = place_dopants(cell2, ArrayFamily::dimer_100, 10.0, 2.0);
  CHECK_THAT(geo.actual_d, Catch::Matchers::WithinAbs(10.0, 1e-12));
  // but a margin the dopants violate still throws
  auto cell3 = build_supercell({16, 16, 16});
  CHECK_THROWS_AS(place_dopants(cell3, ArrayFamily::dimer_100, 10.0, 4.0),
                  GeometryError);
}

TEST_CASE("screened Coulomb tail and central-cell value") {
  ImpurityPotential pot;
  pot.dopant_positions = {{0, 0, 0}, {8, 0, 0}};
  // hand value: -1.4399645/(0.5431 * 10.8 * r) at r = 1
  CHECK_THAT(pot.coulomb_tail(1.0),
             Catch::Matchers::WithinAbs(-0.2454981519, 1e-9));
  // on a nucleus: own central-cell term plus the partner tail
  CHECK_THAT(pot.value_at({0, 0, 0}),
             Catch::Matchers::WithinAbs(-3.5 + pot.coulomb_tail(8.0), 1e-12));
  // midpoint: two equal tails
  CHECK_THAT(pot.value_at({4, 0, 0}),
             Catch::Matchers::WithinAbs(2 * pot.coulomb_tail(4.0), 1e-12));
  // tails_at never includes the central-cell value
  CHECK_THAT(pot.tails_at({0, 0, 0}),
             Catch::Matchers::WithinAbs(pot.coulomb_tail(8.0), 1e-12));
  // 1/r decay
  CHECK_THAT(pot.coulomb_tail(2.0) * 2,
             Catch::Matchers::WithinAbs(pot.coulomb_tail(1.0), 1e-15));
}

TEST_CASE("potential section separates nucleus spikes from tail samples") {
  auto cell = build_supercell({16, 16, 16});
  const auto geo = place_dopants(cell, ArrayFamily::dimer_100, 8.0);
  const auto pot = make_potential(cell, geo);
  const auto a = cell.sites[geo.dopant_sites[0]].position();
  const auto b = cell.sites[geo.dopant_sites[1]].position();
  // 9 points from dopant to dopant: endpoints are nuclei
  const auto sec = potential_section(cell, pot, a, b, 9);
  CHECK(sec.spikes.size() == 2);
  CHECK(sec.samples.size() == 7);
  // spikes carry the deep central-cell value, samples only the smooth tails
  for (const auto& [x, u] : sec.spikes) CHECK(u < -3.0);
  for (const auto& [x, u] : sec.samples) {
    CHECK(u < 0);
    CHECK(u > -3.0);
  }
  // the barrier maximum sits midway between the dopants
  double best_x = -1, best_u = -1e300;
  for (const auto& [x, u] : sec.samples)
    if (u > best_u) {
      best_u = u;
      best_x = x;
    }
  CHECK_THAT(best_x, Catch::Matchers::WithinAbs(4.0, 1e-9));
  CHECK_THROWS_AS(potential_section(cell, pot, {-1, 0, 0}, a, 9),
                  GeometryError);
  CHECK_THROWS_AS(potential_section(cell, pot, a, b, 1), GeometryError);
}
