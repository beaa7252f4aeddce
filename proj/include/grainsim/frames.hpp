#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grainsim/math.hpp"

namespace grainsim {

// Rollout frame dump. One file per rollout:
//
//   GSIMFRAMES 1
//   npart <N>
//   dt <control-step seconds>
//   format <f32|text>
//   end
//
// followed by one record per control step (plus the initial state):
//   binary: tool pose as 7 little-endian f64 (px py pz qw qx qy qz),
//           then N*3 little-endian f32 particle positions;
//   text:   "pose px py pz qw qx qy qz" then N lines "x y z".

struct Frame {
  Vec3 tool_pos = Vec3::Zero();
  Quat tool_q;
  std::vector<Vec3> x;  // positions, f32 precision when binary
};

struct FrameDump {
  int npart = 0;
  double dt_control = 0;
  std::vector<Frame> frames;
};

class FrameWriter {
 public:
  FrameWriter(const std::string& path, int npart, double dt_control,
              bool text = false);
  ~FrameWriter();
  void write(const Vec3& tool_pos, const Quat& q, const std::vector<Vec3>& x);
  void close();

 private:
  struct Impl;
  Impl* impl_;
};

FrameDump read_frames(const std::string& path);

}  // namespace grainsim
