#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "dof/experiments.hpp"
#include "dof/service.hpp"

using namespace dof;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  double tau = 1000.0;
  int samples = 256;
  double eps_shell = 0.0;
  int k = 16;
  std::string config;

  WosParams wos() const {
    WosParams p;
    p.n_samples = samples;
    p.eps_shell = eps_shell;
    p.rng_seed = seed;
    return p;
  }
};

// Values from the --config file fill every global flag not given on the command line.
void apply_config(Globals& g, const CLI::App& app) {
  if (g.config.empty()) return;
  json j = parse_json(read_file(g.config));
  require(j.is_object(), ErrorKind::format, "config must be a JSON object");
  for (const auto& [key, _] : j.items())
    require(key == "seed" || key == "tau" || key == "samples" || key == "eps_shell" || key == "k", ErrorKind::format,
            "unknown config key '" + key + "'");
  auto take = [&](const char* key, const char* flag, auto& v) {
    if (j.contains(key) && app.count(flag) == 0) v = detail::get_or(j, key, v);
  };
  take("seed", "--seed", g.seed);
  take("tau", "--tau", g.tau);
  take("samples", "--samples", g.samples);
  take("eps_shell", "--eps-shell", g.eps_shell);
  take("k", "--k", g.k);
}

PointCloud load_cloud(const std::string& path, int k) {
  PointCloud c = load_point_cloud(path);
  validate(c);
  if (!c.has_normals()) c = estimate_normals(c, k).cloud;
  return c;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) v.push_back(read_double(tok));
  require(!v.empty(), ErrorKind::format, "empty number list");
  return v;
}

Vec3 parse_vec3(const std::string& s) {
  auto v = parse_list(s);
  require(v.size() == 3, ErrorKind::format, "expected x,y,z");
  return Vec3(v[0], v[1], v[2]);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_file(path, text);
}

json stats_json(const ActionStats& s) { return {{"average_std", s.average_std}, {"axis_std", detail::array_of(s.axis_std)}}; }
json dev_json(const DeviationStats& d) { return {{"average", d.average}, {"std", d.stddev}, {"max", d.max}}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffused orientation fields: build, query, steer and evaluate."};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "RNG seed for walks and generators");
  app.add_option("--tau", g.tau, "Diffusion time (units of squared mean spacing)");
  app.add_option("--samples", g.samples, "Walks per frame query");
  app.add_option("--eps-shell", g.eps_shell, "Walk stopping shell; 0 picks twice the spacing");
  app.add_option("--k", g.k, "Neighbourhood size");
  app.add_option("--config", g.config, "JSON file with defaults for the global flags");

  // build-field
  auto* build = app.add_subcommand("build-field", "Diffuse keypoint frames over a cloud and save the field");
  std::string cloud_path, kp_path, out_path, csv_path;
  build->add_option("cloud", cloud_path, "Point cloud (.xyz or ASCII .ply)")->required();
  build->add_option("--keypoints", kp_path, "Keypoint JSON")->required();
  build->add_option("-o,--out", out_path, "Field file (JSON)")->required();
  build->add_option("--dump-csv", csv_path, "Also write per-vertex values and frames as CSV");

  // extract-keypoints
  auto* extract = app.add_subcommand("extract-keypoints", "Automatic keypoints as JSON");
  std::string mode = "antipodal";
  extract->add_option("cloud", cloud_path, "Point cloud")->required();
  extract->add_option("--mode", mode, "antipodal or boundary")->check(CLI::IsMember({"antipodal", "boundary"}));
  extract->add_option("-o,--out", out_path, "Output file (default stdout)");

  // run-task
  auto* run = app.add_subcommand("run-task", "Run a local action primitive and write the trajectory");
  std::string task, field_path, start_s;
  PrimitiveSpec spec;
  run->add_option("task", task, "slice, peel, coverage or shoot")
      ->required()
      ->check(CLI::IsMember({"slice", "peel", "coverage", "shoot"}));
  run->add_option("--field", field_path, "Field file from build-field")->required();
  run->add_option("--start", start_s, "Start position x,y,z (default above the first source)");
  run->add_option("--cycles", spec.cycles, "Peel cycles");
  run->add_option("--legs", spec.legs, "Coverage legs");
  run->add_option("--delta", spec.delta, "Step length");
  run->add_option("--offset", spec.surface_offset, "Surface offset while sliding");
  run->add_option("--max-steps", spec.max_steps, "Step budget");
  run->add_option("-o,--out", out_path, "Trajectory file, .csv or .json (default CSV on stdout)");

  // deform
  auto* deform = app.add_subcommand("deform", "Random scale/bend/twist instances");
  int count = 10;
  std::string out_dir;
  deform->add_option("cloud", cloud_path, "Point cloud")->required();
  deform->add_option("--count", count, "Number of instances")->check(CLI::PositiveNumber);
  deform->add_option("--out-dir", out_dir, "Output directory")->required();
  deform->add_option("--keypoints", kp_path, "Keypoints to carry along");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "Inject topological, geometric or keypoint noise");
  std::string noise = "geometric", kp_out;
  std::optional<double> sigma;
  perturb->add_option("cloud", cloud_path, "Point cloud")->required();
  perturb->add_option("--noise", noise, "topological, geometric or keypoint")
      ->check(CLI::IsMember({"topological", "geometric", "keypoint"}));
  perturb->add_option("--sigma", sigma, "Noise scale in metres");
  perturb->add_option("--keypoints", kp_path, "Keypoints (needed for topological and keypoint noise)");
  perturb->add_option("-o,--out", out_path, "Output cloud (.xyz)");
  perturb->add_option("--keypoints-out", kp_out, "Output keypoints");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Experiment reports as CSV tables plus a JSON summary");
  std::string study, taus_s = "10,100,1000", json_path;
  int trials = 20, instances = 50;
  eval->add_option("study", study, "robustness, peel, smoothness, keypoints or performance")
      ->required()
      ->check(CLI::IsMember({"robustness", "peel", "smoothness", "keypoints", "performance"}));
  eval->add_option("--noise", noise, "Noise type for robustness")
      ->check(CLI::IsMember({"topological", "geometric", "keypoint"}));
  eval->add_option("--sigma", sigma, "Noise scale in metres");
  eval->add_option("--taus", taus_s, "Comma-separated diffusion times");
  eval->add_option("--trials", trials, "Seeds per diffusion time")->check(CLI::PositiveNumber);
  eval->add_option("--instances", instances, "Deformed instances")->check(CLI::PositiveNumber);
  eval->add_option("--json", json_path, "Write the JSON summary here (default stderr)");

  // serve
  auto* serve = app.add_subcommand("serve", "Field service: /frame, /scene, /steer, /rebuild");
  ServiceOptions so;
  serve->add_option("--field", field_path, "Field file from build-field")->required();
  serve->add_option("--address", so.address, "Bind address");
  serve->add_option("--port", so.port, "Port (0 picks one)");
  serve->add_option("--threads", so.threads, "I/O threads");
  serve->add_option("--rate", so.steer.rate_hz, "Steering tick rate in Hz");
  serve->add_option("--speed", so.steer.speed, "Steering speed in m/s at unit input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_config(g, app);
    require(g.samples >= 1 && g.k >= 6 && g.tau >= 0 && g.eps_shell >= 0, ErrorKind::parameter,
            "invalid global flag values");

    if (*build) {
      PointCloud c = load_cloud(cloud_path, g.k);
      ObjectFieldOptions fo;
      fo.tau_raw = g.tau;
      fo.k = g.k;
      fo.wos = g.wos();
      FieldBundle b = bundle_of(build_object_field(c, load_keypoints(kp_path), fo));
      save_field(out_path, b);
      if (!csv_path.empty()) {
        std::ostringstream ss;
        write_field_csv(ss, b);
        write_file(csv_path, ss.str());
      }
      std::cerr << "field: " << b.cloud.size() << " vertices, tau " << g.tau << ", "
                << b.frames.degenerate_count() << " degenerate frames\n";
    } else if (*extract) {
      PointCloud c = load_cloud(cloud_path, g.k);
      KeypointSet kp;
      if (mode == "antipodal") {
        AntipodalOptions ao;
        ao.tau_raw = g.tau;
        AntipodalResult r = extract_antipodal(c, build_laplacian(c, {g.k}), ao);
        kp = r.keypoints;
      } else {
        kp = extract_boundary(c, g.k);
      }
      emit(out_path, keypoints_to_json(kp).dump(2) + "\n");
    } else if (*run) {
      FieldBundle b = load_field(field_path);
      WorkspaceField f = b.workspace(g.wos());
      std::size_t v = b.keypoints.sources.at(0);
      TaskTargets tg{b.source_position(), b.sink_position()};
      Trajectory t;
      if (task == "shoot") {
        Vec3 start = start_s.empty() ? experiments::offset_point(b.cloud, v, 0.01) : parse_vec3(start_s);
        t = geodesic_shoot(f, start, spec.max_steps, spec.delta, tg);
      } else {
        spec.kind = task == "slice" ? PrimitiveSpec::Kind::slice
                    : task == "peel" ? PrimitiveSpec::Kind::peel
                                     : PrimitiveSpec::Kind::coverage;
        Vec3 start = start_s.empty() ? experiments::offset_point(b.cloud, v, spec.approach_distance) : parse_vec3(start_s);
        t = run_primitive(f, spec, start, tg);
      }
      if (out_path.empty() || out_path == "-")
        write_trajectory_csv(std::cout, t);
      else
        save_trajectory(out_path, t);
      std::cerr << task << ": " << t.size() << " samples, " << count_onsets(t, Phase::lift) << " lift onsets\n";
      if (t.error) throw Error(t.error_kind, *t.error);
    } else if (*deform) {
      PointCloud c = load_cloud(cloud_path, g.k);
      std::optional<KeypointSet> kp;
      if (!kp_path.empty()) kp = load_keypoints(kp_path);
      fs::create_directories(out_dir);
      for (int i = 0; i < count; ++i) {
        Deformed d = random_deform(c, g.seed + static_cast<std::uint64_t>(i));
        std::string stem = (fs::path(out_dir) / ("instance_" + std::to_string(i))).string();
        save_xyz(stem + ".xyz", d.cloud);
        if (kp) {
          std::vector<std::size_t> inv(c.size(), 0);
          for (std::size_t j = 0; j < d.vertex_map.size(); ++j) inv[d.vertex_map[j]] = j;
          KeypointSet m = *kp;
          for (auto& s : m.sources) s = inv.at(s);
          for (auto& s : m.sinks) s = inv.at(s);
          save_keypoints(stem + ".json", m);
        }
      }
      std::cerr << "wrote " << count << " instances to " << out_dir << "\n";
    } else if (*perturb) {
      PointCloud c = load_cloud(cloud_path, g.k);
      std::optional<KeypointSet> kp;
      if (!kp_path.empty()) kp = load_keypoints(kp_path);
      experiments::NoiseType n = experiments::parse_noise(noise);
      require(n == experiments::NoiseType::geometric || kp.has_value(), ErrorKind::parameter, noise + " noise needs --keypoints");
      if (n == experiments::NoiseType::topological) {
        NoisyCloud r = topological_noise(c, *kp, g.seed);
        c = std::move(r.cloud);
        kp = r.keypoints;
      } else if (n == experiments::NoiseType::geometric) {
        c = geometric_noise(c, sigma.value_or(0.003), g.seed, g.k);
      } else {
        kp = keypoint_noise(*kp, c, sigma.value_or(0.020), g.seed);
      }
      if (!out_path.empty()) {
        save_xyz(out_path, c);
      } else {
        std::ostringstream ss;
        write_xyz(ss, c);
        std::cout << ss.str();
      }
      if (!kp_out.empty() && kp) save_keypoints(kp_out, *kp);
    } else if (*eval) {
      json summary{{"v", schema_version}, {"study", study}};
      if (study == "robustness") {
        experiments::RobustnessOptions o;
        o.taus = parse_list(taus_s);
        o.trials = trials;
        o.sigma = sigma;
        o.seed = g.seed ? g.seed : o.seed;
        o.wos = g.wos();
        auto r = experiments::robustness_study(experiments::parse_noise(noise), o, &std::cerr);
        std::cout << "tau,mean_rmse,std_rmse,errors\n";
        for (const auto& row : r.rows)
          std::cout << format_double(row.tau) << ',' << format_double(row.mean) << ',' << format_double(row.stddev)
                    << ',' << row.errors << "\n";
        summary["noise"] = noise;
        summary["sigma"] = r.sigma;
        summary["means"] = r.means();
        summary["non_increasing"] = experiments::non_increasing(r.means(), 0.0);
        summary["redraws"] = r.redraws;
      } else if (study == "peel") {
        experiments::PeelStudyOptions o;
        o.instances = instances;
        o.tau_raw = g.tau;
        o.wos = g.wos();
        auto r = experiments::peel_study(o, &std::cerr);
        std::cout << "frames,average_std\n";
        std::cout << "dof," << format_double(r.dof.average_std) << "\ncartesian," << format_double(r.cartesian.average_std)
                  << "\ncylindrical," << format_double(r.cylindrical.average_std) << "\nspherical,"
                  << format_double(r.spherical.average_std) << "\n";
        std::cout << "\nn,nearest,softmax\n";
        json multi = json::array();
        for (const auto& m : r.multi) {
          std::cout << m.n << ',' << format_double(m.nearest) << ',' << format_double(m.softmax) << "\n";
          multi.push_back({{"n", m.n}, {"nearest", m.nearest}, {"softmax", m.softmax}});
        }
        summary["dof"] = stats_json(r.dof);
        summary["cartesian"] = stats_json(r.cartesian);
        summary["cylindrical"] = stats_json(r.cylindrical);
        summary["spherical"] = stats_json(r.spherical);
        summary["multi_frame"] = multi;
        summary["incomplete"] = r.incomplete;
      } else if (study == "smoothness") {
        experiments::SmoothnessOptions o;
        o.tau_raw = g.tau;
        o.wos = g.wos();
        auto r = experiments::smoothness_study(o);
        std::cout << "method,average_deg,std_deg,max_deg\n";
        std::pair<const char*, const DeviationStats*> rows[] = {{"orientation_diffusion", &r.orientation},
                                                                {"svd_vector_diffusion", &r.svd},
                                                                {"z_fixed_vector_diffusion", &r.z_fixed},
                                                                {"workspace_diffusion", &r.workspace},
                                                                {"nearest_projection", &r.nearest}};
        for (const auto& [name, d] : rows) {
          std::cout << name << ',' << format_double(d->average) << ',' << format_double(d->stddev) << ','
                    << format_double(d->max) << "\n";
          summary[name] = dev_json(*d);
        }
      } else if (study == "keypoints") {
        experiments::KeypointStudyOptions o;
        o.instances = instances;
        o.tau_raw = g.tau;
        auto r = experiments::keypoint_study(o);
        std::cout << "instance,worse_end_error_m\n";
        for (std::size_t i = 0; i < r.errors.size(); ++i) std::cout << i << ',' << format_double(r.errors[i]) << "\n";
        summary["hits"] = r.hits;
        summary["confident"] = r.confident;
        summary["instances"] = instances;
      } else {
        experiments::PerformanceOptions o;
        o.tau_raw = g.tau;
        o.n_samples = g.samples;
        auto r = experiments::performance_study(o);
        std::cout << "stage,seconds\nlaplacian," << format_double(r.laplacian_s) << "\nfactorize,"
                  << format_double(r.factorize_s) << "\nsolve," << format_double(r.solve_s) << "\nquery_single,"
                  << format_double(r.query_single_s) << "\nquery_parallel," << format_double(r.query_parallel_s)
                  << "\n";
        summary["points"] = r.points;
        summary["threads"] = r.threads;
      }
      if (json_path.empty())
        std::cerr << summary.dump(2) << "\n";
      else
        write_file(json_path, summary.dump(2) + "\n");
    } else if (*serve) {
      so.wos = g.wos();
      FieldService svc(load_field(field_path), so);
      unsigned short port = svc.start();
      std::cerr << "serving on " << so.address << ":" << port << "\n";
      svc.wait();
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return is_numerical(e.kind()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
