#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "grainsim/config.hpp"
#include "grainsim/types.hpp"

namespace grainsim {

struct StepContext {
  double dt = 2e-4;       // seconds per substep
  int substeps = 25;      // substeps per control step
  Vec3 gravity = Vec3(0, -9.8, 0);
  double contact_margin_cells = 1.0;     // collision-count margin, in cells
  double projection_margin_cells = 0.5;  // grid-velocity projection margin
  bool parallel = false;  // fast mode; deterministic mode is the default

  double control_dt() const { return dt * substeps; }
};

/// A fully initialized task: static description plus mutable sim state.
struct Scene {
  std::string name;
  uint64_t seed = 0;
  int grid_n = 64;
  StepContext ctx;
  TaskSpec spec;
  MaterialParams material;
  ParticleSystem particles;
  ToolState tool;
  RigidParticleSet rigid;
  std::shared_ptr<const SdfSet> container;  // static collider, may be null
  double container_friction = 0.4;

  double dx() const { return 1.0 / grid_n; }
};

/// Build a scene from config text. Deterministic: identical bytes and
/// seed produce identical particle arrays.
Scene load_task(const ConfigDoc& doc, uint64_t seed);
Scene load_task_text(const std::string& text, uint64_t seed,
                     const std::string& name = "<scene>");
Scene load_task_file(const std::string& path, uint64_t seed);

/// Swap the constitutive model (demo generation runs the same scene with
/// a gradient-stable material).
void apply_material_override(Scene& scene, MaterialKind kind);

}  // namespace grainsim
