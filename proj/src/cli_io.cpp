#include "belief/cli_io.hpp"

#include "belief/core_bench.hpp"
#include "belief/hypothesis_sampler.hpp"
#include "belief/parallel.hpp"
#include "belief/splat_renderer.hpp"
#include "belief/vocabulary.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>

namespace belief {

namespace {

namespace fs = std::filesystem;

std::string where(std::string_view source, const YAML::Mark &mark) {
    return std::string(source) + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
}

template <class T>
T scalar(const YAML::Node &node, std::string_view field, std::string_view type, std::string_view source) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception &) {
        throw Error(ErrorCode::ParseError,
                    where(source, node.Mark()) + ": expected " + std::string(type) + " for '" + std::string(field) + "'");
    }
}

void require(bool ok, std::string_view field, std::string_view what) {
    if (!ok) {
        throw Error(ErrorCode::ValidationError, std::string(field) + " " + std::string(what));
    }
}

void validate(const RunConfig &c, const fs::path &base_dir) {
    require(c.jobs >= 0, "run.jobs", "must be >= 0");
    require(!c.out.empty(), "run.out", "must not be empty");
    require(c.world.rooms_min >= 1, "world.rooms_min", "must be >= 1");
    require(c.world.rooms_max >= c.world.rooms_min && c.world.rooms_max <= 8, "world.rooms_max",
            "must lie in [rooms_min, 8]");
    require(c.world.furniture_density >= 0.0 && c.world.furniture_density <= 1.0, "world.furniture_density",
            "must lie in [0, 1]");
    require(c.world.size.x() >= 2.5 && c.world.size.y() >= 2.5, "world.size", "must be at least 2.5 m per side");
    require(c.cell > 0.0, "grid.cell", "must be > 0");
    require(c.voxel_layers >= 1, "grid.voxel_layers", "must be >= 1");
    require(c.beta_start > 0.0 && c.beta_start <= c.beta_end, "schedule.beta_start", "must lie in (0, beta_end]");
    require(c.beta_end < 1.0, "schedule.beta_end", "must be < 1");
    require(c.steps >= 1, "schedule.steps", "must be >= 1");
    if (!c.denoiser.empty()) {
        fs::path stem(c.denoiser);
        if (stem.is_relative() && !base_dir.empty()) {
            stem = base_dir / stem;
        }
        require(fs::exists(fs::path(stem.string() + ".manifest")), "denoiser.path",
                "names no existing model (" + stem.string() + ".manifest)");
    }
    require(c.train_worlds >= 100, "denoiser.train_worlds", "must be >= 100");
    require(c.train_steps >= 0, "denoiser.train_steps", "must be >= 0");
    require(c.K >= 1, "planner.K", "must be >= 1");
    require(c.T_exec >= 1, "planner.T_exec", "must be >= 1");
    require(c.w_sem >= 0.0, "planner.w_sem", "must be >= 0");
    require(c.w_info >= 0.0, "planner.w_info", "must be >= 0");
    require(c.unknown_cost >= 1.0, "planner.unknown_cost", "must be >= 1");
    require(c.waypoints >= 1, "planner.waypoints", "must be >= 1");
    require(c.budget >= 0, "planner.budget", "must be >= 0");
    require(c.embedding_mode == "synthetic" || c.embedding_mode == "external", "embedding.mode",
            "must be synthetic or external");
    require(c.embedding_mode != "external" || !c.embedding_url.empty(), "embedding.url",
            "is required in external mode");
    require(c.embedding_dim >= 1, "embedding.dim", "must be >= 1");
    require(c.embedding_timeout_ms >= 1, "embedding.timeout_ms", "must be >= 1");
}

std::string number(double v) {
    char buf[40];
    for (int precision = 1; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) {
            break;
        }
    }
    std::string s(buf);
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string quoted(const std::string &s) {
    YAML::Emitter e;
    e << YAML::DoubleQuoted << s;
    return e.c_str();
}

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fixed(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Camera pose text: "position x y z", "yaw r", "pitch r" and optional
// "width", "height", "fx", "fy" lines. Angles in radians.
CameraPose read_pose_file(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    SensorConfig sensor;
    std::optional<Vec3> position;
    double yaw = 0.0;
    double pitch = sensor.pitch;
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key[0] == '#') {
            continue;
        }
        const auto bad = [&] {
            return Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineNo) + ": bad '" + key + "' line");
        };
        if (key == "position") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) {
                throw bad();
            }
            position = p;
        } else if (key == "yaw" || key == "pitch" || key == "fx" || key == "fy") {
            double v;
            if (!(ls >> v)) {
                throw bad();
            }
            (key == "yaw" ? yaw : key == "pitch" ? pitch : key == "fx" ? sensor.fx : sensor.fy) = v;
        } else if (key == "width" || key == "height") {
            int v;
            if (!(ls >> v) || v < 1) {
                throw bad();
            }
            (key == "width" ? sensor.width : sensor.height) = v;
        } else {
            throw Error(ErrorCode::ParseError,
                        path.string() + ":" + std::to_string(lineNo) + ": unknown key '" + key + "'");
        }
    }
    if (!position) {
        throw Error(ErrorCode::ParseError, path.string() + ": missing 'position'");
    }
    return look_camera(*position, yaw, pitch, sensor);
}

DenoiserParams obtain_denoiser(const RunConfig &cfg, const fs::path &base_dir, std::ostream &out) {
    if (!cfg.denoiser.empty()) {
        fs::path stem(cfg.denoiser);
        if (stem.is_relative() && !base_dir.empty()) {
            stem = base_dir / stem;
        }
        return load_denoiser(stem);
    }
    std::vector<VoxelBelief> truths(static_cast<std::size_t>(cfg.train_worlds));
    parallel_for(truths.size(), [&](std::size_t i) {
        const World w = generate_world(derive_seed(cfg.seed, 0x70000000ULL + i), cfg.world);
        truths[i] = ground_truth_voxels(w, world_voxel_spec(w, cfg.cell, cfg.voxel_layers));
    });
    DenoiserParams params = train_denoiser(truths, cfg.schedule(), cfg.train_steps, cfg.seed);
    out << "denoiser: " << params.training_steps << " steps, loss " << fixed(params.initial_loss) << " -> "
        << fixed(params.final_loss) << '\n';
    return params;
}

int cmd_gen_world(const RunConfig &cfg, int count, std::ostream &out) {
    fs::create_directories(cfg.out);
    for (int i = 0; i < count; ++i) {
        const World w = generate_world(cfg.seed + static_cast<std::uint64_t>(i), cfg.world);
        const fs::path path = fs::path(cfg.out) / ("world_" + std::to_string(w.seed) + ".json");
        export_world(path, w);
        write_meta(path, cfg, "gen-world");
        out << path.string() << '\n';
    }
    return 0;
}

int cmd_train(const RunConfig &cfg, const fs::path &base_dir, std::ostream &out) {
    fs::create_directories(cfg.out);
    RunConfig fresh = cfg;
    fresh.denoiser.clear();
    const DenoiserParams params = obtain_denoiser(fresh, base_dir, out);
    const fs::path stem = fs::path(cfg.out) / "denoiser";
    save_denoiser(stem, params);
    write_meta(fs::path(stem.string() + ".manifest"), cfg, "train-denoiser");
    write_meta(fs::path(stem.string() + ".bin"), cfg, "train-denoiser");
    out << stem.string() << ".manifest\n";
    return 0;
}

int cmd_navigate(const RunConfig &cfg, const fs::path &base_dir, int episodes, const std::string &target,
                 std::ostream &out, std::ostream &err) {
    if (!target.empty() && !is_target_class(target)) {
        throw UsageError("--target must be one of bed, sofa, plant, television, toilet");
    }
    fs::create_directories(cfg.out);
    const PlannerConfig pc = cfg.planner();
    std::optional<DenoiserParams> params;
    if (!pc.no_geometry) {
        params = obtain_denoiser(cfg, base_dir, out);
    }
    PlannerComponents components;
    components.denoiser = params ? &*params : nullptr;
    components.schedule = cfg.schedule();
    components.provider = cfg.provider();

    struct Row {
        std::uint64_t seed = 0;
        std::string target;
        std::optional<EpisodeResult> result;
        std::string error;
    };
    std::vector<Row> rows(static_cast<std::size_t>(std::max(0, episodes)));
    parallel_for(rows.size(), [&](std::size_t i) {
        Row &row = rows[i];
        row.seed = derive_seed(cfg.seed, 0x4e000000ULL + i);
        try {
            const World world = generate_world(row.seed, cfg.world);
            row.target = target.empty() ? std::string(kTargetClasses[i % kTargetClasses.size()]) : target;
            if (world.instances(row.target).empty()) {
                for (auto t : kTargetClasses) {
                    if (!world.instances(t).empty()) {
                        row.target = t;
                        break;
                    }
                }
            }
            Rng rng(derive_seed(row.seed, 0x57a7));
            const AgentState start = sample_start(world, rng);
            row.result = navigate(world, start, components, row.target, cfg.budget, pc, derive_seed(row.seed, 0xe915));
        } catch (const Error &e) {
            row.error = e.what();
        }
    });

    const fs::path csvPath = fs::path(cfg.out) / "navigate.csv";
    const fs::path tracePath = fs::path(cfg.out) / "navigate_traces.jsonl";
    std::ofstream csv(csvPath), traces(tracePath);
    if (!csv || !traces) {
        throw Error(ErrorCode::IoError, "cannot write to " + cfg.out);
    }
    csv << "episode,seed,target,success,steps,path_len,shortest_len,collisions\n";
    std::vector<EpisodeResult> results;
    int failed = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row &row = rows[i];
        if (!row.result) {
            err << "episode " << i << ": " << row.error << '\n';
            ++failed;
            continue;
        }
        const EpisodeResult &r = *row.result;
        csv << i << ',' << row.seed << ',' << row.target << ',' << (r.success ? 1 : 0) << ',' << r.steps_taken << ','
            << fixed(r.path_length) << ',' << fixed(r.shortest_path_length) << ',' << r.collisions << '\n';
        nlohmann::ordered_json head;
        head["episode"] = i;
        head["seed"] = row.seed;
        head["target"] = row.target;
        head["termination"] = r.termination;
        traces << head.dump() << '\n';
        write_trace(traces, r);
        results.push_back(r);
    }
    csv.close();
    traces.close();
    write_meta(csvPath, cfg, "navigate");
    write_meta(tracePath, cfg, "navigate");
    if (!results.empty()) {
        out << "SR " << fixed(sr(results)) << " SPL " << fixed(spl(results)) << " SEL "
            << fixed(sel(results, cfg.budget)) << " over " << results.size() << " episodes\n";
    }
    out << csvPath.string() << '\n';
    return failed ? 1 : 0;
}

int cmd_bench_core(const RunConfig &cfg, const fs::path &base_dir, int worlds, const std::string &tasksPath,
                   const std::string &modelName, std::ostream &out) {
    fs::create_directories(cfg.out);
    std::vector<CoreTask> tasks;
    if (!tasksPath.empty()) {
        tasks = load_task_set(tasksPath);
    } else {
        tasks = make_task_set(cfg.seed, worlds, cfg.world);
        const fs::path taskFile = fs::path(cfg.out) / "core_tasks.jsonl";
        save_task_set(taskFile, tasks);
        write_meta(taskFile, cfg, "bench core");
    }
    const EmbeddingProvider provider = cfg.provider();
    std::unique_ptr<CoreModel> model;
    std::optional<DenoiserParams> params;
    if (modelName == "observed") {
        model = std::make_unique<ObservedOnlyModel>();
    } else if (modelName == "static") {
        model = std::make_unique<StaticBeliefModel>();
    } else if (modelName == "imagination") {
        params = obtain_denoiser(cfg, base_dir, out);
        model = std::make_unique<ImaginationModel>(*params, cfg.schedule(), provider, derive_seed(cfg.seed, 0xc07e));
    } else {
        throw UsageError("--model must be observed, static or imagination");
    }
    const fs::path csvPath = fs::path(cfg.out) / "core.csv";
    const auto summary = run_suite(tasks, *model, csvPath, provider);
    write_meta(csvPath, cfg, "bench core");
    out << tasks.size() << " tasks, " << summary.failures << " flagged\n" << csvPath.string() << '\n';
    return 0;
}

int cmd_render(const RunConfig &cfg, const std::string &scenePath, const std::string &posePath, std::ostream &out) {
    const SceneBelief scene = load_scene(scenePath);
    const CameraPose pose = read_pose_file(posePath);
    const Observation obs = render(scene, pose);
    fs::create_directories(cfg.out);
    const fs::path rgbPath = fs::path(cfg.out) / "rgb.png";
    const fs::path depthPath = fs::path(cfg.out) / "depth.png";
    write_png(rgbPath, obs.rgb);
    ImageD depth(obs.depth.height(), obs.depth.width(), 3);
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            const double d = std::clamp(obs.depth(y, x) / 10.0, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                depth(y, x, c) = d;
            }
        }
    }
    write_png(depthPath, depth);
    write_meta(rgbPath, cfg, "render");
    write_meta(depthPath, cfg, "render");
    out << rgbPath.string() << '\n' << depthPath.string() << '\n';
    return 0;
}

int cmd_eval_2d(const RunConfig &cfg, const std::vector<std::string> &images, std::ostream &out) {
    if (images.empty() || images.size() % 2 != 0) {
        throw UsageError("eval-2d needs image pairs: A1 B1 [A2 B2 ...]");
    }
    fs::create_directories(cfg.out);
    const fs::path csvPath = fs::path(cfg.out) / "eval2d.csv";
    std::ofstream csv(csvPath);
    if (!csv) {
        throw Error(ErrorCode::IoError, "cannot open " + csvPath.string());
    }
    csv << "a,b,psnr,ssim\n";
    for (std::size_t i = 0; i < images.size(); i += 2) {
        const ImageD a = read_png(images[i]);
        const ImageD b = read_png(images[i + 1]);
        const double p = psnr(a, b);
        const double s = ssim(a, b);
        csv << images[i] << ',' << images[i + 1] << ',' << fixed(p) << ',' << fixed(s) << '\n';
        out << images[i] << ' ' << images[i + 1] << " psnr " << fixed(p) << " ssim " << fixed(s) << '\n';
    }
    csv.close();
    write_meta(csvPath, cfg, "eval-2d");
    return 0;
}

} // namespace

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule::linear(beta_start, beta_end, steps); }

PlannerConfig RunConfig::planner() const {
    PlannerConfig p;
    p.K = K;
    p.T_exec = T_exec;
    p.weights.w_sem = w_sem;
    p.weights.w_info = w_info;
    p.unknown_cost = unknown_cost;
    p.waypoints = waypoints;
    p.cell = cell;
    p.voxel_layers = voxel_layers;
    p.single_hypothesis = single_hypothesis;
    p.no_geometry = no_geometry;
    return p;
}

EmbeddingProvider RunConfig::provider() const {
    if (embedding_mode == "external") {
        return EmbeddingProvider::external(embedding_url, embedding_timeout_ms, embedding_dim);
    }
    return EmbeddingProvider::synthetic(embedding_dim, embedding_seed);
}

RunConfig parse_config(std::string_view text, const fs::path &base_dir, std::string_view source) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException &e) {
        throw Error(ErrorCode::ParseError, where(source, e.mark) + ": " + e.msg);
    }
    RunConfig c;
    if (root.IsNull()) {
        validate(c, base_dir);
        return c;
    }
    if (!root.IsMap()) {
        throw Error(ErrorCode::ParseError, where(source, root.Mark()) + ": top level must be a mapping of sections");
    }
    using Setter = std::function<void(const YAML::Node &, const std::string &)>;
    const auto str = [&](std::string &dst) {
        return Setter([&, src = source](const YAML::Node &n, const std::string &f) {
            dst = scalar<std::string>(n, f, "a string", src);
        });
    };
    const auto integer = [&](int &dst) {
        return Setter([&, src = source](const YAML::Node &n, const std::string &f) {
            dst = scalar<int>(n, f, "an integer", src);
        });
    };
    const auto u64 = [&](std::uint64_t &dst) {
        return Setter([&, src = source](const YAML::Node &n, const std::string &f) {
            dst = scalar<std::uint64_t>(n, f, "an unsigned integer", src);
        });
    };
    const auto real = [&](double &dst) {
        return Setter([&, src = source](const YAML::Node &n, const std::string &f) {
            dst = scalar<double>(n, f, "a number", src);
        });
    };
    const auto flag = [&](bool &dst) {
        return Setter([&, src = source](const YAML::Node &n, const std::string &f) {
            dst = scalar<bool>(n, f, "a boolean", src);
        });
    };
    const std::map<std::string, std::map<std::string, Setter>> sections = {
        {"run", {{"seed", u64(c.seed)}, {"out", str(c.out)}, {"jobs", integer(c.jobs)}}},
        {"world",
         {{"rooms_min", integer(c.world.rooms_min)},
          {"rooms_max", integer(c.world.rooms_max)},
          {"furniture_density", real(c.world.furniture_density)},
          {"require_targets", flag(c.world.require_targets)},
          {"size", Setter([&, src = source](const YAML::Node &n, const std::string &f) {
               const auto v = scalar<std::vector<double>>(n, f, "a list of two numbers", src);
               if (v.size() != 2) {
                   throw Error(ErrorCode::ParseError, where(src, n.Mark()) + ": expected two numbers for '" + f + "'");
               }
               c.world.size = Vec2(v[0], v[1]);
           })}}},
        {"grid", {{"cell", real(c.cell)}, {"voxel_layers", integer(c.voxel_layers)}}},
        {"schedule", {{"beta_start", real(c.beta_start)}, {"beta_end", real(c.beta_end)}, {"steps", integer(c.steps)}}},
        {"denoiser",
         {{"path", str(c.denoiser)}, {"train_worlds", integer(c.train_worlds)}, {"train_steps", integer(c.train_steps)}}},
        {"planner",
         {{"K", integer(c.K)},
          {"T_exec", integer(c.T_exec)},
          {"w_sem", real(c.w_sem)},
          {"w_info", real(c.w_info)},
          {"unknown_cost", real(c.unknown_cost)},
          {"waypoints", integer(c.waypoints)},
          {"budget", integer(c.budget)},
          {"single_hypothesis", flag(c.single_hypothesis)},
          {"no_geometry", flag(c.no_geometry)}}},
        {"embedding",
         {{"mode", str(c.embedding_mode)},
          {"url", str(c.embedding_url)},
          {"dim", integer(c.embedding_dim)},
          {"seed", u64(c.embedding_seed)},
          {"timeout_ms", integer(c.embedding_timeout_ms)}}},
    };
    for (const auto &section : root) {
        const std::string name = scalar<std::string>(section.first, "section", "a section name", source);
        const auto s = sections.find(name);
        if (s == sections.end()) {
            throw Error(ErrorCode::ParseError, where(source, section.first.Mark()) + ": unknown section '" + name + "'");
        }
        if (section.second.IsNull()) {
            continue;
        }
        if (!section.second.IsMap()) {
            throw Error(ErrorCode::ParseError, where(source, section.second.Mark()) + ": section '" + name +
                                                   "' must be a mapping");
        }
        for (const auto &entry : section.second) {
            const std::string key = scalar<std::string>(entry.first, name, "a key", source);
            const auto k = s->second.find(key);
            if (k == s->second.end()) {
                throw Error(ErrorCode::ParseError,
                            where(source, entry.first.Mark()) + ": unknown key '" + key + "' in section '" + name + "'");
            }
            k->second(entry.second, name + "." + key);
        }
    }
    validate(c, base_dir);
    return c;
}

RunConfig load_config(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path(), path.string());
}

std::string config_text(const RunConfig &c) {
    std::ostringstream o;
    o << "run:\n"
      << "  seed: " << c.seed << '\n'
      << "  out: " << quoted(c.out) << '\n'
      << "  jobs: " << c.jobs << '\n'
      << "world:\n"
      << "  rooms_min: " << c.world.rooms_min << '\n'
      << "  rooms_max: " << c.world.rooms_max << '\n'
      << "  furniture_density: " << number(c.world.furniture_density) << '\n'
      << "  size: [" << number(c.world.size.x()) << ", " << number(c.world.size.y()) << "]\n"
      << "  require_targets: " << (c.world.require_targets ? "true" : "false") << '\n'
      << "grid:\n"
      << "  cell: " << number(c.cell) << '\n'
      << "  voxel_layers: " << c.voxel_layers << '\n'
      << "schedule:\n"
      << "  beta_start: " << number(c.beta_start) << '\n'
      << "  beta_end: " << number(c.beta_end) << '\n'
      << "  steps: " << c.steps << '\n'
      << "denoiser:\n"
      << "  path: " << quoted(c.denoiser) << '\n'
      << "  train_worlds: " << c.train_worlds << '\n'
      << "  train_steps: " << c.train_steps << '\n'
      << "planner:\n"
      << "  K: " << c.K << '\n'
      << "  T_exec: " << c.T_exec << '\n'
      << "  w_sem: " << number(c.w_sem) << '\n'
      << "  w_info: " << number(c.w_info) << '\n'
      << "  unknown_cost: " << number(c.unknown_cost) << '\n'
      << "  waypoints: " << c.waypoints << '\n'
      << "  budget: " << c.budget << '\n'
      << "  single_hypothesis: " << (c.single_hypothesis ? "true" : "false") << '\n'
      << "  no_geometry: " << (c.no_geometry ? "true" : "false") << '\n'
      << "embedding:\n"
      << "  mode: " << quoted(c.embedding_mode) << '\n'
      << "  url: " << quoted(c.embedding_url) << '\n'
      << "  dim: " << c.embedding_dim << '\n'
      << "  seed: " << c.embedding_seed << '\n'
      << "  timeout_ms: " << c.embedding_timeout_ms << '\n';
    return o.str();
}

void save_config(const fs::path &path, const RunConfig &config) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    out << config_text(config);
}

std::uint64_t config_hash(const RunConfig &config) { return fnv1a64(config_text(config)); }

void write_meta(const fs::path &artifact, const RunConfig &config, std::string_view command) {
    nlohmann::ordered_json j;
    j["artifact"] = artifact.filename().string();
    j["command"] = command;
    j["config_hash"] = hex(config_hash(config));
    j["seed"] = config.seed;
    std::ofstream out(artifact.string() + ".meta.json");
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write metadata for " + artifact.string());
    }
    out << j.dump(2) << '\n';
}

int cli_dispatch(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
    CLI::App app{"Scene-belief toolkit: procedural worlds, imagination sampling, navigation and benchmarks.",
                 "belief"};
    app.fallthrough();
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    std::string configPath, outDir;
    std::optional<int> jobs;
    app.add_option("--seed", seed, "Master seed (overrides run.seed)");
    app.add_option("--config", configPath, "YAML run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", outDir, "Output directory (overrides run.out)");
    app.add_option("--jobs", jobs, "Worker cap, 0 = logical cores")->check(CLI::NonNegativeNumber);

    int count = 1;
    auto *gen = app.add_subcommand("gen-world", "Generate worlds and export them as JSON");
    gen->add_option("--count", count, "Number of consecutive seeds")->check(CLI::PositiveNumber);

    app.add_subcommand("train-denoiser", "Train the voxel denoiser on generated worlds");

    int episodes = 10;
    std::string target, ablation = "full";
    std::optional<int> budget;
    auto *nav = app.add_subcommand("navigate", "Run object-goal navigation episodes");
    nav->add_option("--episodes", episodes, "Episode count")->check(CLI::NonNegativeNumber);
    nav->add_option("--target", target, "Target class (default: cycle through all)");
    nav->add_option("--budget", budget, "Step budget (overrides planner.budget)")->check(CLI::NonNegativeNumber);
    nav->add_option("--ablation", ablation, "full, single-hypothesis or no-geometry")
        ->check(CLI::IsMember({"full", "single-hypothesis", "no-geometry"}));

    int worlds = 5;
    std::string tasksPath, modelName = "imagination";
    auto *bench = app.add_subcommand("bench", "Benchmarks");
    bench->require_subcommand(1);
    auto *core = bench->add_subcommand("core", "Object/room completion and object permanence suite");
    core->add_option("--worlds", worlds, "Worlds to generate tasks from")->check(CLI::PositiveNumber);
    core->add_option("--tasks", tasksPath, "Task-set file (JSON lines) instead of generating")->check(CLI::ExistingFile);
    core->add_option("--model", modelName, "observed, static or imagination");

    std::string scenePath, posePath;
    auto *rend = app.add_subcommand("render", "Render a saved scene belief");
    rend->add_option("--scene", scenePath, "Binary scene file")->required()->check(CLI::ExistingFile);
    rend->add_option("--pose", posePath, "Pose text file")->required()->check(CLI::ExistingFile);

    std::vector<std::string> images;
    auto *e2d = app.add_subcommand("eval-2d", "PSNR/SSIM between image pairs");
    e2d->add_option("images", images, "A1 B1 [A2 B2 ...]")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        app.exit(e, err, err);
        err << app.help();
        return 2;
    }

    try {
        RunConfig cfg;
        fs::path baseDir;
        if (!configPath.empty()) {
            cfg = load_config(configPath);
            baseDir = fs::path(configPath).parent_path();
        }
        if (seed) {
            cfg.seed = *seed;
        }
        if (!outDir.empty()) {
            cfg.out = outDir;
        }
        if (jobs) {
            cfg.jobs = *jobs;
        }
        if (budget) {
            cfg.budget = *budget;
        }
        if (ablation == "single-hypothesis") {
            cfg.single_hypothesis = true;
        } else if (ablation == "no-geometry") {
            cfg.no_geometry = true;
        }
        set_jobs(static_cast<std::size_t>(cfg.jobs));

        if (gen->parsed()) {
            return cmd_gen_world(cfg, count, out);
        }
        if (app.got_subcommand("train-denoiser")) {
            return cmd_train(cfg, baseDir, out);
        }
        if (nav->parsed()) {
            return cmd_navigate(cfg, baseDir, episodes, target, out, err);
        }
        if (core->parsed()) {
            return cmd_bench_core(cfg, baseDir, worlds, tasksPath, modelName, out);
        }
        if (rend->parsed()) {
            return cmd_render(cfg, scenePath, posePath, out);
        }
        if (e2d->parsed()) {
            return cmd_eval_2d(cfg, images, out);
        }
    } catch (const UsageError &e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const Error &e) {
        err << e.what() << '\n';
        return (e.code() == ErrorCode::ParseError || e.code() == ErrorCode::ValidationError) ? 2 : 1;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    err << app.help();
    return 2;
}

} // namespace belief
