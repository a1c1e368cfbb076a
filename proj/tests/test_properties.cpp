#include "doctest.h"
#include "properties.hpp"

using namespace krot::props;

namespace {

void require_pass(const Outcome& o) {
  INFO(o.detail);
  CHECK(o.pass);
}

}  // namespace

TEST_CASE("property: cdf and quantile round-trip") { require_pass(cdf_quantile_roundtrip(101, 40)); }

TEST_CASE("property: triangular map structure") { require_pass(triangular_map_structure(102, 6)); }

TEST_CASE("property: coupling marginals are exact") { require_pass(coupling_marginals(103, 30)); }

TEST_CASE("property: KR Jacobian identity improves under refinement") { require_pass(kr_jacobian_refinement(104, 3)); }

TEST_CASE("property: sweep reports are deterministic") { require_pass(sweep_determinism(105, 3)); }
