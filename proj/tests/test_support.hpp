#pragma once

#include "aosbqp/grid_model.hpp"

#include <string>

namespace testing_support {

inline std::string data_path(const std::string& name) { return std::string(AOSBQP_DATA_DIR) + "/" + name; }

// Two buses, one line (r, x) chosen so that g = 1, b = -5 after inversion.
inline const char* kTwoBusCase = R"(function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	0	1	1.1	0.9;
	2	1	50	20	0	0	1	1	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	0;
];
mpc.branch = [
	1	2	0.038461538461538464	0.19230769230769232;
];
)";

inline aosbqp::GridCase case5() { return aosbqp::load_case(data_path("case5.m")); }
inline aosbqp::GridCase case30() { return aosbqp::load_case(data_path("case30.m")); }

// Copy with every branch conductance removed.
inline aosbqp::GridCase lossless(aosbqp::GridCase grid) {
  for (auto& br : grid.branches) {
    br.g = 0.0;
    br.r = 0.0;
  }
  return grid;
}

}  // namespace testing_support
