#pragma once

#include <span>
#include <string_view>

#include "glottochron/data_io.h"
#include "glottochron/model_state.h"

namespace glottochron {

// Characters from the F81 + discrete-gamma process on the state's tree, with
// all-absent columns redrawn. Rows follow `taxa`.
auto simulate_characters(const ModelState& state, std::span<const Taxon> taxa, int num_sites, Rng& rng)
    -> CognateMatrix;

struct Simulation {
  std::vector<Taxon> taxa;
  ModelState truth;
  CognateMatrix matrix;
};

// Taxa t1..tN (calibrated by `calibrations_text`, which may name them). The
// tree is drawn by a prior-only chain of sim_burn steps with every scalar held
// at its sim.<param> value, branch rates are then drawn from the relaxed-clock
// prior and sim_sites characters are generated. All randomness follows
// config.seed.
auto simulate(const RunConfig& config, std::string_view calibrations_text) -> Simulation;

}  // namespace glottochron
