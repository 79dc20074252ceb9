#pragma once

#include "difflab/model.hpp"
#include "difflab/rng.hpp"

namespace difflab {

/// Full-support joint with i.i.d. log weights in [-spread, spread].
TabularJoint random_joint(Vocab vocab, int length, RngStream& rng, double spread = 2.0);

/// Independent per-position categoricals with random positive weights.
ProductModel random_product(Vocab vocab, int length, RngStream& rng);

/// Mixture of two product components that agree on a shared mode sequence and
/// keep per-position top mass strictly above 1 - delta. Every conditional at
/// every reachable state then passes the delta gate, so gated decoding never
/// hits its fallback.
TabularJoint gateable_mixture(Vocab vocab, int length, double delta, RngStream& rng);

/// Product joint with per-entry log perturbations of the given scale; at
/// small scales the factorized suffix correction stays nearly exact and IMH
/// acceptance stays near one.
TabularJoint perturbed_product(Vocab vocab, int length, double noise_scale, RngStream& rng);

}  // namespace difflab
