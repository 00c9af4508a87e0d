#pragma once

#include "belief/diffusion.hpp"
#include "belief/planner.hpp"
#include "belief/semantic_field.hpp"
#include "belief/world_sim.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace belief {

/// Everything a reproducible run needs. YAML on disk, one mapping per section:
/// run, world, grid, schedule, denoiser, planner, embedding.
struct RunConfig {
    // run
    std::uint64_t seed = 0;
    std::string out = "out";
    int jobs = 0;  // 0 = logical cores
    // world
    WorldConfig world;
    // grid
    double cell = 0.25;
    int voxel_layers = 4;
    // schedule
    double beta_start = 1e-4;
    double beta_end = 0.1;
    int steps = 50;
    // denoiser
    std::string denoiser;  // manifest stem; empty = train in-process
    int train_worlds = 100;
    int train_steps = 300;
    // planner
    int K = 3;
    int T_exec = 4;
    double w_sem = 1.0;
    double w_info = 0.3;
    double unknown_cost = 2.0;
    int waypoints = 4;
    int budget = 200;
    bool single_hypothesis = false;
    bool no_geometry = false;
    // embedding
    std::string embedding_mode = "synthetic";  // synthetic | external
    std::string embedding_url;
    int embedding_dim = 16;
    std::uint64_t embedding_seed = kShippedEmbeddingSeed;
    int embedding_timeout_ms = 2000;

    bool operator==(const RunConfig &) const = default;

    NoiseSchedule schedule() const;
    PlannerConfig planner() const;
    EmbeddingProvider provider() const;
};

/// Parses YAML text. Throws ParseError (with line:column) for syntax errors,
/// unknown sections or keys and ill-typed values; ValidationError naming the field
/// for out-of-range values. Relative file references resolve against `base_dir`.
RunConfig parse_config(std::string_view text, const std::filesystem::path &base_dir = {},
                       std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path &path);

/// Canonical YAML with every field; parse_config(config_text(c)) == c.
std::string config_text(const RunConfig &config);
void save_config(const std::filesystem::path &path, const RunConfig &config);
/// FNV-1a-64 of config_text.
std::uint64_t config_hash(const RunConfig &config);

/// Writes `<artifact>.meta.json` with the config hash, seed and command.
void write_meta(const std::filesystem::path &artifact, const RunConfig &config, std::string_view command);

/// Runs the command line. 0 success, 1 task failure, 2 usage error.
int cli_dispatch(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace belief
