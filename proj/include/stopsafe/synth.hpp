#pragma once

#include <cstdint>
#include <string>

namespace stopsafe::synth {

// Writes a self-consistent synthetic corpus (telemetry, CGM, detections,
// intersection database, annotations, roster, config.json) under out_dir.
// Three participants (two T1DM, one control) drive a 4x3 grid of stop
// intersections; glycemic bands are scripted per drive so every episode
// level appears with both stop outcomes.
void generate_corpus(const std::string& out_dir, uint64_t seed);

}  // namespace stopsafe::synth
