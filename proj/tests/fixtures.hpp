#pragma once

// Hand-worked pairing and metric cases, shared by the unit and acceptance suites.

#include <string>
#include <vector>

#include "maskpipe/dataset_eval.hpp"

namespace fixtures {

struct PairingCase {
  std::string name;
  maskpipe::Pose live;
  std::vector<maskpipe::PosedFrame> refs;
  std::string expected;
};

inline std::vector<PairingCase> pairing_cases() {
  using maskpipe::Pose;
  return {
      {"single ref under 1 degree wins over a nearer one",
       {0, 0, 10},
       {{"near", {0.1, 0, 40}}, {"aligned", {3, 0, 10.5}}},
       "aligned"},
      {"nearest among several sub-degree refs",
       {1, 1, 0},
       {{"a", {4, 1, 0.2}}, {"b", {2, 1, -0.9}}, {"c", {1, 1, 45}}},
       "b"},
      {"no ref under 1 degree falls back to position-nearest",
       {0, 0, 0},
       {{"far", {5, 0, 1.0}}, {"mid", {2, 0, 90}}, {"close", {1, 0, -1.0}}},
       "close"},
      {"exactly 1 degree is not under the threshold",
       {0, 0, 30},
       {{"edge", {4, 4, 31}}, {"nearest", {0, 1, 120}}},
       "nearest"},
      {"wraparound: 179.6 and -179.8 are 0.6 degrees apart",
       {0, 0, 179.6},
       {{"wrapped", {9, 9, -179.8}}, {"near", {0.5, 0, 170}}},
       "wrapped"},
      {"wraparound: -180 and 180 are the same heading",
       {0, 0, -180},
       {{"same", {6, 0, 180}}, {"near", {0.2, 0, 0}}},
       "same"},
      {"wraparound beyond a full turn",
       {0, 0, 359.5},
       {{"turn", {7, 0, -0.3}}, {"near", {0.1, 0, 90}}},
       "turn"},
      {"tie among sub-degree refs goes to the lowest frame_id",
       {0, 0, 0},
       {{"ref_09", {1, 0, 0.5}}, {"ref_03", {0, 1, -0.5}}, {"ref_05", {-1, 0, 0.5}}},
       "ref_03"},
      {"tie in the fallback goes to the lowest frame_id",
       {0, 0, 0},
       {{"z", {0, 2, 50}}, {"m", {2, 0, 60}}, {"q", {-2, 0, 70}}},
       "m"},
  };
}

struct MetricsCase {
  std::string name;
  int w, h;
  std::vector<std::uint8_t> pred, gt;
  double precision, recall, f1;
};

inline std::vector<MetricsCase> metrics_cases() {
  return {
      {"prediction equals ground truth", 3, 2, {1, 0, 1, 0, 0, 1}, {1, 0, 1, 0, 0, 1}, 1.0, 1.0, 1.0},
      {"empty prediction, nonempty truth", 3, 2, {0, 0, 0, 0, 0, 0}, {0, 1, 0, 0, 1, 0}, 0.0, 0.0, 0.0},
      {"empty truth, nonempty prediction", 2, 2, {1, 1, 0, 0}, {0, 0, 0, 0}, 0.0, 0.0, 0.0},
      {"both empty", 2, 2, {0, 0, 0, 0}, {0, 0, 0, 0}, 0.0, 0.0, 0.0},
      {"4 and 4 pixels overlapping in 2", 4, 2, {1, 1, 1, 1, 0, 0, 0, 0}, {0, 0, 1, 1, 1, 1, 0, 0}, 0.5, 0.5, 0.5},
      {"3 predicted, 1 true hit of 2", 3, 2, {1, 1, 1, 0, 0, 0}, {1, 0, 0, 1, 0, 0}, 1.0 / 3.0, 0.5, 0.4},
  };
}

}  // namespace fixtures
