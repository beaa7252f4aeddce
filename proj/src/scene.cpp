#include "grainsim/scene.hpp"

#include <algorithm>
#include <cmath>

#include "grainsim/rng.hpp"

namespace grainsim {
namespace {

SdfPrim parse_prim(const ConfigSection& s) {
  SdfPrim p;
  const std::string type = s.get_string("type");
  if (type == "halfspace") {
    p.kind = PrimKind::HalfSpace;
    p.normal_dir = s.get_vec3("normal").normalized();
    p.offset = s.get_double("offset", 0.0);
  } else if (type == "box") {
    p.kind = PrimKind::Box;
    p.center = s.get_vec3("center");
    p.half = s.get_vec3("half_extent");
    if (!(p.half.array() > 0).all())
      throw ValidationError("box primitive (line " + std::to_string(s.line) +
                            "): half_extent must be positive");
  } else if (type == "capsule") {
    p.kind = PrimKind::Capsule;
    p.a = s.get_vec3("a");
    p.b = s.get_vec3("b");
    p.radius = s.get_double("radius");
  } else if (type == "shell") {
    p.kind = PrimKind::ShellSegment;
    p.center = s.get_vec3("center");
    p.radius = s.get_double("radius");
    p.thickness = s.get_double("thickness");
    p.axis = s.get_vec3("axis", Vec3(0, 1, 0)).normalized();
    p.open_angle_deg = s.get_double("open_angle_deg", 90.0);
  } else {
    throw ConfigError("primitive (line " + std::to_string(s.line) +
                      "): unknown type '" + type + "'");
  }
  return p;
}

std::shared_ptr<SdfSet> parse_shape(const ConfigDoc& doc, const std::string& owner) {
  auto shape = std::make_shared<SdfSet>();
  for (const ConfigSection* s : doc.all(owner + ".primitive"))
    shape->prims.push_back(parse_prim(*s));
  return shape;
}

Box parse_box(const ConfigSection& s, const std::string& prefix) {
  Box b;
  b.lo = s.get_vec3(prefix + "_min");
  b.hi = s.get_vec3(prefix + "_max");
  return b;
}

// Jittered lattice inside an axis-aligned box at 8 particles per grid
// cell; the lattice anchors at the region corner so counts depend only
// on the region size. Jitter never moves a point out of its subcell.
void sample_box(const Box& region, double dx, double density, double jitter,
                Rng& rng, ParticleSystem* out) {
  const Vec3 size = region.hi - region.lo;
  const double sub = 0.5 * dx;
  Vec3i m;
  Vec3 s;
  for (int a = 0; a < 3; ++a) {
    m[a] = std::max(1, static_cast<int>(std::llround(size[a] / sub)));
    s[a] = size[a] / m[a];
  }
  const double vol = s.x() * s.y() * s.z();
  for (int i = 0; i < m.x(); ++i)
    for (int j = 0; j < m.y(); ++j)
      for (int k = 0; k < m.z(); ++k) {
        Vec3 c = region.lo + Vec3((i + 0.5) * s.x(), (j + 0.5) * s.y(),
                                  (k + 0.5) * s.z());
        for (int a = 0; a < 3; ++a)
          c[a] += jitter * s[a] * (rng.uniform() - 0.5);
        out->x.push_back(c);
        out->v.push_back(Vec3::Zero());
        out->F.push_back(Mat3::Identity());
        out->C.push_back(Mat3::Zero());
        out->mass.push_back(density * vol);
        out->volume.push_back(vol);
      }
}

}  // namespace

Scene load_task(const ConfigDoc& doc, uint64_t seed) {
  Scene scene;
  scene.name = doc.source_name;
  scene.seed = seed;

  const ConfigSection& task = doc.at("task");
  scene.spec.kind = task_kind_from_string(task.get_string("kind"));
  scene.spec.horizon = task.get_int("horizon");
  scene.grid_n = task.get_int("grid", 64);
  scene.ctx.dt = task.get_double("dt", 2e-4);
  scene.ctx.substeps = task.get_int("substeps", 25);
  scene.ctx.gravity = task.get_vec3("gravity", Vec3(0, -9.8, 0));
  scene.ctx.contact_margin_cells = task.get_double("contact_margin_cells", 1.0);
  scene.ctx.projection_margin_cells =
      task.get_double("projection_margin_cells", 0.5);
  const double dx = scene.dx();
  const Vec3 margin = Vec3::Constant(3.0 * dx);
  scene.spec.workspace.lo = task.get_vec3("workspace_min", Vec3(margin));
  scene.spec.workspace.hi = task.get_vec3("workspace_max", Vec3(Vec3::Ones() - margin));

  const ConfigSection& mat = doc.at("material");
  scene.material.kind = material_kind_from_string(mat.get_string("kind"));
  scene.material.youngs_modulus = mat.get_double("youngs_modulus");
  scene.material.poisson_ratio = mat.get_double("poisson_ratio");
  scene.material.friction_angle_deg = mat.get_double("friction_angle_deg", 30.0);
  scene.material.yield_stress = mat.get_double("yield_stress", 10.0);
  scene.material.density = mat.get_double("density", 1.0);
  scene.material.derive_lame();
  scene.material.validate();

  Rng rng(seed_split(seed ^ task.get_int("seed_salt", 0), "particle-sampling"));
  const double jitter = doc.find("particles")
                            ? doc.at("particles").get_double("jitter", 1.0)
                            : 1.0;
  int declared = -1;
  for (const ConfigSection* ps : doc.all("particles")) {
    Box region;
    region.lo = ps->get_vec3("region_min");
    region.hi = ps->get_vec3("region_max");
    if (!(region.lo.array() < region.hi.array()).all())
      throw ValidationError("particles (line " + std::to_string(ps->line) +
                            "): empty sample region");
    sample_box(region, dx, scene.material.density,
               ps->get_double("jitter", jitter), rng, &scene.particles);
    if (ps->has("count")) {
      const int want = ps->get_int("count");
      declared = (declared < 0 ? 0 : declared) + want;
    }
  }
  if (scene.particles.count() == 0)
    throw ValidationError("scene declares no particles");
  if (declared >= 0 && declared != scene.particles.count())
    throw ValidationError("declared particle count " + std::to_string(declared) +
                          " does not match sampled count " +
                          std::to_string(scene.particles.count()));

  const ConfigSection& tool = doc.at("tool");
  scene.tool.position = tool.get_vec3("position");
  scene.tool.orientation = quat_from_euler(
      tool.get_vec3("orientation_euler_deg", Vec3::Zero()) * (kPi / 180.0));
  scene.tool.friction = tool.get_double("friction", 0.4);
  scene.tool.shape = parse_shape(doc, "tool");
  if (scene.tool.shape->prims.empty())
    throw ValidationError("tool has no primitives");

  if (const ConfigSection* cont = doc.find("container")) {
    auto shape = parse_shape(doc, "container");
    if (shape->prims.empty())
      throw ValidationError("container section present but has no primitives");
    scene.container = shape;
    scene.container_friction = cont->get_double("friction", 0.4);
    if (cont->get_bool("fill_rigid", false)) {
      Box fill = parse_box(*cont, "fill");
      Rng rrng(seed_split(seed, "rigid-fill"));
      ParticleSystem tmp;
      sample_box(fill, dx, 1.0, cont->get_double("jitter", 1.0), rrng, &tmp);
      for (const Vec3& p : tmp.x)
        if (scene.container->dist(p) < 0.0) scene.rigid.x.push_back(p);
    }
  }

  const ConfigSection& goal = doc.at("goal");
  scene.spec.goal = goal.get_vec3("point");
  scene.spec.dw_weights = goal.get_vec3("weights", Vec3::Ones());
  scene.spec.target_region = parse_box(goal, "target_region");
  scene.spec.oob_keep = goal.has("oob_keep_min") ? parse_box(goal, "oob_keep")
                                                 : scene.spec.workspace;
  scene.spec.container_region = goal.has("container_region_min")
                                    ? parse_box(goal, "container_region")
                                    : Box{};

  const ConfigSection& act = doc.at("action");
  scene.spec.action_dims = act.get_int("dims", 3);
  scene.spec.action_min = act.get_doubles("min");
  scene.spec.action_max = act.get_doubles("max");

  if (const ConfigSection* rw = doc.find("rewards")) {
    RewardConsts& rc = scene.spec.rc;
    rc.beta_dist = rw->get_double("beta_dist", rc.beta_dist);
    rc.gamma_dist = rw->get_double("gamma_dist", rc.gamma_dist);
    rc.beta_p = rw->get_double("beta_p", 0.0);
    rc.beta_t = rw->get_double("beta_t", 0.0);
    rc.beta_n = rw->get_double("beta_n", 0.0);
    rc.beta_c = rw->get_double("beta_c", 0.0);
    rc.beta_i = rw->get_double("beta_i", 0.0);
    rc.beta_ea = rw->get_double("beta_ea", 0.0);
    rc.gamma_ea = rw->get_double("gamma_ea", 0.0);
    scene.spec.pour_indicator_flip = rw->get_bool("pour_indicator_flip", false);
  }
  if (const ConfigSection* ob = doc.find("observe")) {
    scene.spec.downsample = ob->get_int("downsample", 1);
    scene.spec.elite_count = ob->get_int("elite", 0);
  }
  if (const ConfigSection* ch = doc.find("chaining")) {
    scene.spec.rotation_gate = ch->get_vec3("gate", Vec3::Zero());
    scene.spec.theta_goal_deg = ch->get_vec3("theta_goal_deg", Vec3::Zero());
  }
  if (const ConfigSection* dg = doc.find("demogen")) {
    scene.spec.demogen_threshold = dg->get_double("threshold", 0.0);
    scene.spec.demogen_iterations = dg->get_int("iterations", 200);
    scene.spec.demogen_material =
        material_kind_from_string(dg->get_string("material", "fluid"));
  }

  scene.spec.observed_count = scene.particles.count();
  if (scene.spec.elite_count <= 0) scene.spec.elite_count = scene.spec.observed_count;
  scene.spec.validate();
  scene.particles.validate();

  for (const Vec3& p : scene.particles.x) {
    if (scene.tool.sdf(p).first < 0)
      throw ValidationError("a sampled particle starts inside the tool");
    if (scene.container && scene.container->dist(p) < 0)
      throw ValidationError("a sampled particle starts inside the container wall");
  }
  return scene;
}

Scene load_task_text(const std::string& text, uint64_t seed, const std::string& name) {
  return load_task(parse_config(text, name), seed);
}

Scene load_task_file(const std::string& path, uint64_t seed) {
  return load_task(parse_config_file(path), seed);
}

void apply_material_override(Scene& scene, MaterialKind kind) {
  scene.material.kind = kind;
  scene.material.derive_lame();
  scene.material.validate();
}

}  // namespace grainsim
