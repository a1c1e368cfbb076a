#pragma once

// Randomized invariant checks. Each returns the worst observed violation
// (or a pass flag) over `trials` fixtures drawn from `seed`.

#include <cstdint>
#include <string>

namespace krot::props {

struct Outcome {
  bool pass = true;
  double worst = 0.0;
  std::string detail;
};

/// cdf(quantile(u)) == u and quantile(cdf(x)) == x on random positive 1D densities.
Outcome cdf_quantile_roundtrip(std::uint64_t seed, int trials);

/// First i outputs of kr_map_grid ignore coordinates beyond i; sections monotone.
Outcome triangular_map_structure(std::uint64_t seed, int trials);

/// Row and column sums of exact, KR and oracle plans equal the input marginals.
Outcome coupling_marginals(std::uint64_t seed, int trials);

/// Jacobian identity violation of kr_map_grid shrinks when the grid is refined.
Outcome kr_jacobian_refinement(std::uint64_t seed, int trials);

/// Serialized sweep reports identical across reruns and thread counts.
Outcome sweep_determinism(std::uint64_t seed, int trials);

}  // namespace krot::props
