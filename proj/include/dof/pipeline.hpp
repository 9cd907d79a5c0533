#pragma once

#include "dof/workspace.hpp"

namespace dof {

// A cloud with keypoints, its diffused surface field and the workspace field around it.
struct ObjectField {
  PointCloud cloud;
  KeypointSet keypoints;
  double tau_raw = 0.0;
  std::shared_ptr<const LaplacianPair> laplacian;
  std::shared_ptr<SurfaceDiffuser> diffuser;
  DofSurface surface;
  WorkspaceField field;

  Vec3 source_position() const { return cloud.points.at(keypoints.sources.at(0)); }
  Vec3 sink_position() const {
    return keypoints.sinks.empty() ? source_position() : cloud.points.at(keypoints.sinks.at(0));
  }
};

struct ObjectFieldOptions {
  double tau_raw = 1000.0;
  int k = 16;
  WosParams wos;
  std::shared_ptr<const LaplacianPair> laplacian;  // reuse a prebuilt pair
};

inline ObjectField build_object_field(PointCloud cloud, const KeypointSet& kp, const ObjectFieldOptions& opt = {}) {
  validate(kp, cloud.size());
  if (!cloud.mean_spacing_h) mean_spacing(cloud);
  ObjectField o;
  o.tau_raw = opt.tau_raw;
  o.keypoints = kp;
  o.laplacian = opt.laplacian ? opt.laplacian : std::make_shared<const LaplacianPair>(build_laplacian(cloud, {opt.k}));
  require(o.laplacian->cloud_fingerprint == fingerprint(cloud), ErrorKind::parameter,
          "cached Laplacian belongs to a different cloud");
  o.diffuser = std::make_shared<SurfaceDiffuser>(o.laplacian);
  o.surface = build_dof_surface(*o.diffuser, cloud, kp, opt.tau_raw, opt.k);
  o.field = WorkspaceField(opt.wos);
  std::size_t id = o.field.add_cloud(cloud, o.surface.frames, o.surface.normalized);
  const VecX& raw = o.surface.diffused.values;
  double range = raw.maxCoeff() - raw.minCoeff();
  if (range > 0) {
    std::vector<Vec3> g(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) g[i] = -o.surface.direction.vectors[i] / range;
    o.field.set_gradients(id, std::move(g));
  }
  o.cloud = std::move(cloud);
  return o;
}

}  // namespace dof
