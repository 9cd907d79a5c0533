#pragma once

#include "dof/workspace.hpp"

namespace dof {

enum class Phase { approach, slide, lift, ret, shift, retract, sweep, advance, shoot, done };

inline const char* phase_name(Phase p) {
  static constexpr const char* names[] = {"approach", "slide", "lift",    "return", "shift",
                                          "retract",  "sweep", "advance", "shoot",  "done"};
  return names[static_cast<int>(p)];
}

inline Phase parse_phase(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(Phase::done); ++i)
    if (s == phase_name(static_cast<Phase>(i))) return static_cast<Phase>(i);
  throw Error(ErrorKind::format, "unknown phase label '" + s + "'");
}

struct TrajectorySample {
  int step = 0;
  Vec3 x = Vec3::Zero();
  Mat3 frame = Mat3::Identity();
  Vec3 a = Vec3::Zero();  // local action, components along (u, v, n)
  Phase phase = Phase::done;
  double dist_surface = 0.0;
  double field_value = std::numeric_limits<double>::quiet_NaN();
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  std::optional<std::string> error;  // set when a step aborted; samples hold the partial run
  ErrorKind error_kind = ErrorKind::field;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<Vec3> positions() const {
    std::vector<Vec3> p;
    p.reserve(samples.size());
    for (const auto& s : samples) p.push_back(s.x);
    return p;
  }
};

struct PrimitiveSpec {
  enum class Kind { slice, peel, coverage, geodesic_shoot };
  Kind kind = Kind::slice;
  double approach_distance = 0.03;  // retract height; approach starts wherever the tool is
  double surface_offset = 0.005;
  double arrival_distance = 0.01;
  double lift_height = 0.02;
  double lateral_shift = 0.008;
  double delta = 0.002;
  double a_max = 1.0;
  int cycles = 3;          // peel: lift onsets
  int legs = 6;            // coverage: sweep legs
  double sweep_length = 0.04;
  int max_steps = 4000;
  double servo_gain = 1.0;
};

inline void validate(const PrimitiveSpec& s) {
  for (double d : {s.approach_distance, s.surface_offset, s.arrival_distance, s.lift_height, s.lateral_shift,
                   s.delta, s.a_max, s.sweep_length})
    require(d > 0, ErrorKind::parameter, "primitive distances, delta and a_max must be positive");
  require(s.max_steps >= 1 && s.cycles >= 1 && s.legs >= 1, ErrorKind::parameter, "primitive counts must be >= 1");
}

inline const char* kind_name(PrimitiveSpec::Kind k) {
  static constexpr const char* names[] = {"slice", "peel", "coverage", "shoot"};
  return names[static_cast<int>(k)];
}

// Keypoint positions the phase machines steer between.
struct TaskTargets {
  Vec3 source = Vec3::Zero();
  Vec3 sink = Vec3::Zero();
};

inline Vec3 step_local(const Vec3& x, const Mat3& frame, const Vec3& a, double delta) {
  require(delta > 0, ErrorKind::parameter, "step size must be positive");
  return x + delta * (frame * a);
}

namespace detail {

class Controller {
 public:
  Controller(const WorkspaceField& f, const PrimitiveSpec& s, const TaskTargets& t) : field_(f), spec_(s), tgt_(t) {}

  template <class Decide>
  Trajectory run(const Vec3& start, Phase first, Decide&& decide) {
    Trajectory tr;
    Vec3 x = start;
    enter(first);
    for (int step = 0; step < spec_.max_steps; ++step) {
      TrajectorySample s;
      s.step = step;
      s.x = x;
      try {
        ClosestHit hit = field_.scene().closest_point(x);
        s.dist_surface = hit.distance;
        proj_ = hit.point;
        x_ = x;
        dist_ = hit.distance;
        if (field_.has_values(hit.surface_id)) s.field_value = field_.value_near(hit, x);
        s.frame = query_frame(field_, x).rotation;
        // Behind an open surface the frame normal points away from the tool.
        side_ = (x - hit.point).dot(s.frame.col(2)) < 0 ? -1.0 : 1.0;
        Vec3 a = decide(*this);
        s.phase = phase_;
        if (phase_ == Phase::done) {
          tr.samples.push_back(s);
          return tr;
        }
        double n = a.norm();
        if (n > spec_.a_max) a *= spec_.a_max / n;
        s.a = a;
      } catch (const Error& e) {
        tr.error = e.what();
        tr.error_kind = e.kind();
        return tr;
      }
      tr.samples.push_back(s);
      x = step_local(x, s.frame, s.a, spec_.delta);
      ++in_phase_;
    }
    return tr;
  }

  void enter(Phase p) {
    phase_ = p;
    in_phase_ = 0;
    closest_ = std::numeric_limits<double>::infinity();
  }
  Phase phase() const { return phase_; }
  int steps_in_phase() const { return in_phase_; }
  double dist() const { return dist_; }
  bool near(const Vec3& target) const { return (proj_ - target).norm() < spec_.arrival_distance; }
  // Near the target, or moved half a step past the closest approach to it in this phase.
  bool arrived(const Vec3& target) {
    double d = (x_ - target).norm();
    closest_ = std::min(closest_, d);
    return near(target) || d > closest_ + 0.5 * spec_.delta;
  }
  // Normal action driving the surface distance to target, signed by the side of the surface.
  double servo(double target) const {
    return side_ * std::clamp(-spec_.servo_gain * (dist_ - target) / spec_.delta, -1.0, 1.0);
  }
  const PrimitiveSpec& spec() const { return spec_; }
  const TaskTargets& targets() const { return tgt_; }
  int counter = 0;

 private:
  const WorkspaceField& field_;
  const PrimitiveSpec& spec_;
  const TaskTargets& tgt_;
  Phase phase_ = Phase::approach;
  int in_phase_ = 0;
  Vec3 proj_ = Vec3::Zero();
  Vec3 x_ = Vec3::Zero();
  double dist_ = 0.0;
  double side_ = 1.0;
  double closest_ = std::numeric_limits<double>::infinity();
};

inline int steps_for(double length, double delta) { return std::max(1, static_cast<int>(std::ceil(length / delta - 1e-9))); }

}  // namespace detail

// Phase machines: transitions are checked at the top of each step, then the
// action of the (possibly new) phase is issued.
inline Trajectory run_primitive(const WorkspaceField& field, const PrimitiveSpec& spec, const Vec3& start,
                                const TaskTargets& targets) {
  validate(spec);
  require(start.allFinite(), ErrorKind::parameter, "start must be finite");
  detail::Controller c(field, spec, targets);
  const double off = spec.surface_offset, high = spec.surface_offset + spec.lift_height;
  const double settle = 0.05 * spec.delta;  // normal moves are servoed onto their thresholds
  using P = Phase;
  switch (spec.kind) {
    case PrimitiveSpec::Kind::slice:
      return c.run(start, P::approach, [&](detail::Controller& k) -> Vec3 {
        if (k.phase() == P::approach && k.dist() <= off + settle) k.enter(P::slide);
        if (k.phase() == P::slide && k.arrived(targets.sink)) k.enter(P::retract);
        if (k.phase() == P::retract && k.dist() >= spec.approach_distance - settle) k.enter(P::done);
        switch (k.phase()) {
          case P::approach: return {0, 0, k.servo(off)};
          case P::slide: return {1, 0, k.servo(off)};
          case P::retract: return {0, 0, k.servo(spec.approach_distance)};
          default: return Vec3::Zero();
        }
      });
    case PrimitiveSpec::Kind::peel:
      // approach, slide to the sink, then `cycles` x (lift, return, shift, approach, slide).
      return c.run(start, P::approach, [&](detail::Controller& k) -> Vec3 {
        if (k.phase() == P::approach && k.dist() <= off + settle) k.enter(P::slide);
        if (k.phase() == P::slide && k.arrived(targets.sink)) {
          if (k.counter < spec.cycles) {
            ++k.counter;
            k.enter(P::lift);
          } else {
            k.enter(P::done);
          }
        }
        if (k.phase() == P::lift && k.dist() >= high - settle) k.enter(P::ret);
        if (k.phase() == P::ret && k.arrived(targets.source)) k.enter(P::shift);
        if (k.phase() == P::shift && k.steps_in_phase() >= detail::steps_for(spec.lateral_shift, spec.delta))
          k.enter(P::approach);
        switch (k.phase()) {
          case P::approach: return {0, 0, k.servo(off)};
          case P::slide: return {1, 0, k.servo(off)};
          case P::lift: return {0, 0, k.servo(high)};
          case P::ret: return {-1, 0, k.servo(high)};
          case P::shift: return {0, 1, k.servo(high)};
          default: return Vec3::Zero();
        }
      });
    case PrimitiveSpec::Kind::coverage:
      // Boustrophedon: legs along +/-v, advancing along +u between legs.
      return c.run(start, P::approach, [&](detail::Controller& k) -> Vec3 {
        int leg = detail::steps_for(spec.sweep_length, spec.delta);
        int adv = detail::steps_for(spec.lateral_shift, spec.delta);
        if (k.phase() == P::approach && k.dist() <= off + settle) k.enter(P::sweep);
        if (k.phase() == P::sweep && k.steps_in_phase() >= leg) {
          ++k.counter;
          k.enter(k.counter >= spec.legs ? P::done : P::advance);
        }
        if (k.phase() == P::advance && k.steps_in_phase() >= adv) k.enter(P::sweep);
        double side = k.counter % 2 == 0 ? 1.0 : -1.0;
        switch (k.phase()) {
          case P::approach: return {0, 0, k.servo(off)};
          case P::sweep: return {0, side, k.servo(off)};
          case P::advance: return {1, 0, k.servo(off)};
          default: return Vec3::Zero();
        }
      });
    case PrimitiveSpec::Kind::geodesic_shoot: {
      double hold = field.scene().closest_point(start).distance;
      return c.run(start, P::shoot, [&](detail::Controller& k) -> Vec3 {
        if (k.near(targets.sink)) k.enter(P::done);
        return k.phase() == P::shoot ? Vec3(1, 0, k.servo(hold)) : Vec3::Zero();
      });
    }
  }
  throw Error(ErrorKind::parameter, "unknown primitive kind");
}

// Follows +u at the start's surface distance until the sink is reached.
inline Trajectory geodesic_shoot(const WorkspaceField& field, const Vec3& start, int steps, double delta,
                                 const TaskTargets& targets, double arrival_distance = 0.01) {
  PrimitiveSpec s;
  s.kind = PrimitiveSpec::Kind::geodesic_shoot;
  s.max_steps = steps;
  s.delta = delta;
  s.arrival_distance = arrival_distance;
  return run_primitive(field, s, start, targets);
}

// Number of lift-phase onsets.
inline int count_onsets(const Trajectory& t, Phase p) {
  int n = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.samples[i].phase == p && (i == 0 || t.samples[i - 1].phase != p)) ++n;
  return n;
}

}  // namespace dof
