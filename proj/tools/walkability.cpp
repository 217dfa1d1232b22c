// Command-line front end over the pipeline stages and the synthetic city generator.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "walkability/pipeline.hpp"
#include "walkability/synth.hpp"

namespace fs = std::filesystem;
using namespace walkability;

namespace {

std::string flag_name(const std::string& key) {
  std::string s = "--" + key;
  std::replace(s.begin(), s.end(), '_', '-');
  return s;
}

/// Manifest sources shared by every pipeline subcommand.
struct ManifestOptions {
  std::string config;
  std::string replay;
  bool show = false;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app, bool allow_replay) {
    app.add_option("-c,--config", config, "manifest file (key = value lines)")->check(CLI::ExistingFile);
    if (allow_replay) {
      app.add_option("--replay", replay, "rebuild the manifest from a provenance.json")->check(CLI::ExistingFile);
    }
    app.add_flag("--show-manifest", show, "print the resolved manifest and exit");
    const std::map<std::string, std::string> short_names{{"out_dir", "-o,"}, {"jobs", "-j,"}};
    for (const auto& key : pipeline::manifest_keys()) {
      const auto it = short_names.find(key);
      const auto name = (it == short_names.end() ? "" : it->second) + flag_name(key);
      options[key] = app.add_option(name, values[key], "manifest key " + key);
    }
  }

  pipeline::RunManifest resolve() const {
    pipeline::RunManifest m;
    if (!replay.empty()) m = pipeline::manifest_from_provenance(replay);
    if (!config.empty()) {
      std::ifstream in(config);
      pipeline::apply_manifest(m, in, fs::absolute(config).parent_path());
    }
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) pipeline::set_field(m, key, values.at(key), fs::current_path());
    }
    m.validate();
    return m;
  }
};

void print_record(const pipeline::StageRecord& r) {
  std::cout << fmt::format("{:<10} {:8.2f} s", r.stage, r.seconds);
  for (const auto& w : r.warnings) std::cout << "\n           warning: " << w;
  std::cout << '\n';
}

int synth_command(const std::string& out, std::uint64_t seed, bool use_default, int districts, int rows, int cols,
                  int pois, double leakage, int isolated, double spread, const std::string& mode_text) {
  auto plan = use_default ? synth::default_plan(seed) : synth::make_plan(districts, rows, cols, pois, leakage, seed);
  if (!use_default && spread > 0) plan.poi_spread_m = spread;
  plan.isolated_pois = isolated;
  const auto mode = ingest::parse_coordinate_mode(mode_text);
  const auto city = synth::generate_city(plan);
  const fs::path dir = fs::absolute(out);
  const auto files = synth::write_city(city, dir, mode);

  pipeline::RunManifest m;
  m.visitors = files.visitors;
  m.pois = files.pois;
  m.road_nodes = files.road_nodes;
  m.road_edges = files.road_edges;
  m.coordinate_mode = mode;
  m.seed = seed;
  m.out_dir = dir / "run";
  {
    std::ofstream f(dir / "manifest.conf");
    f << "# synthetic city, seed " << seed << "\n";
    pipeline::write_manifest(f, m);
  }
  std::cout << fmt::format("{} districts, {} cells in grid, {} POIs, {} snapshots, {} bridge cells (leakage {:.3f})\n",
                           plan.districts.size(), plan.grid.size(), city.pois.size(), city.snapshots.size(),
                           city.bridge_cells, city.realized_leakage);
  for (const auto& w : city.warnings) std::cout << "warning: " << w << '\n';
  std::cout << "wrote " << dir.string() << " (manifest.conf ready for `walkability run -c`)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"POI-visitor walkability network analysis"};
  app.set_version_flag("--version", std::string(pipeline::kToolVersion));
  app.require_subcommand(1);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic city with planted districts");
  std::string synth_out = "synthetic_city", synth_mode = "wgs84";
  std::uint64_t synth_seed = 1;
  bool synth_default = false;
  int synth_districts = 4, synth_rows = 50, synth_cols = 100, synth_pois = 80, synth_isolated = 0;
  double synth_leakage = 0.1, synth_spread = 0;
  synth_cmd->add_option("-o,--out", synth_out, "output directory");
  synth_cmd->add_option("--seed", synth_seed);
  synth_cmd->add_flag("--default-plan", synth_default, "4 districts on a 110 x 110 grid");
  synth_cmd->add_option("--districts", synth_districts);
  synth_cmd->add_option("--rows", synth_rows);
  synth_cmd->add_option("--cols", synth_cols);
  synth_cmd->add_option("--pois", synth_pois, "total POIs across districts");
  synth_cmd->add_option("--leakage", synth_leakage, "share of visitor mass on cells reached from two districts");
  synth_cmd->add_option("--isolated", synth_isolated, "extra POIs far outside the grid");
  synth_cmd->add_option("--spread", synth_spread, "POI scatter radius in meters (default scales with district size)");
  synth_cmd->add_option("--coordinate-mode", synth_mode, "wgs84 or utmk");

  // individual stages
  std::map<std::string, ManifestOptions> stage_opts;
  std::map<std::string, CLI::App*> stage_cmds;
  const std::map<std::string, std::string> help{
      {"ingest", "parse inputs, accumulate visitors, verify POIs, prefilter pairs"},
      {"distances", "resolve walking distances through the configured provider"},
      {"build", "build the weighted POI-cell graph"},
      {"detect", "Louvain communities and the leading-community filter"},
      {"report", "centrality, rankings, category and temporal reports"},
      {"export", "GEXF and GeoJSON exports"}};
  for (const auto& name : pipeline::stage_names()) {
    stage_cmds[name] = app.add_subcommand(name, help.at(name));
    stage_opts[name].attach(*stage_cmds[name], false);
  }

  // run
  auto* run_cmd = app.add_subcommand("run", "every stage in order");
  ManifestOptions run_opts;
  run_opts.attach(*run_cmd, true);
  bool resume = false;
  std::vector<std::string> compare;
  run_cmd->add_flag("--resume", resume, "skip stages whose outputs match the current manifest");
  run_cmd->add_option("--compare", compare, "run two windows (START..END each) and compare them")->expected(2);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      return synth_command(synth_out, synth_seed, synth_default, synth_districts, synth_rows, synth_cols, synth_pois,
                           synth_leakage, synth_isolated, synth_spread, synth_mode);
    }
    for (const auto& name : pipeline::stage_names()) {
      if (!stage_cmds[name]->parsed()) continue;
      const auto m = stage_opts[name].resolve();
      if (stage_opts[name].show) {
        pipeline::write_manifest(std::cout, m);
        return 0;
      }
      print_record(pipeline::run_stage(m, name));
      return 0;
    }
    const auto m = run_opts.resolve();
    if (run_opts.show) {
      pipeline::write_manifest(std::cout, m);
      return 0;
    }
    if (!compare.empty()) {
      pipeline::run_compare(m, compare[0], compare[1], {resume});
      std::cout << "comparison written to " << (m.out_dir / "compare").string() << '\n';
      return 0;
    }
    const auto result = pipeline::run_pipeline(m, {resume});
    for (const auto& s : result.skipped) std::cout << fmt::format("{:<10} up to date\n", s);
    for (const auto& r : result.ran) print_record(r);
    std::cout << "outputs in " << m.out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
