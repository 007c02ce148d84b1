// mhdci: verify | run | block | moments | dump-atoms

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mhdci/battery.hpp"
#include "mhdci/errors.hpp"
#include "mhdci/fields.hpp"
#include "mhdci/kgeometry.hpp"
#include "mhdci/mhdf.hpp"
#include "mhdci/parallel.hpp"
#include "mhdci/scheme.hpp"
#include "mhdci/wavecone.hpp"
#include "mhdci/waves.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mhdci;

namespace {

struct RunConfig {
  int n = 4;
  double m = 2.0;
  int grid = 16;
  std::string omega_kind = "ball";
  double omega_size = 0.0;  // 0: default for the iteration count
  int iters = 3;
  double delta = 0.1;
  double kappa = 0.5;
  double sigma = 0.95;
  std::uint64_t seed = 1;
  int atoms = 200;
  std::string out = "out";
  bool dump_fields = false;
  int threads = 0;
  std::string segment = "aligned";
  int samples = 1000000;
};

json to_json(const RunConfig& c) {
  return {{"n", c.n},           {"m", c.m},         {"grid", c.grid},     {"omega_kind", c.omega_kind},
          {"omega_size", c.omega_size}, {"iters", c.iters}, {"delta", c.delta}, {"kappa", c.kappa},
          {"sigma", c.sigma},   {"seed", c.seed},   {"atoms", c.atoms},   {"out", c.out},
          {"dump_fields", c.dump_fields}, {"threads", c.threads}, {"segment", c.segment}, {"samples", c.samples}};
}

void from_json(const json& j, RunConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "n") c.n = it->get<int>();
    else if (k == "m") c.m = it->get<double>();
    else if (k == "grid") c.grid = it->get<int>();
    else if (k == "omega_kind") c.omega_kind = it->get<std::string>();
    else if (k == "omega_size") c.omega_size = it->get<double>();
    else if (k == "iters") c.iters = it->get<int>();
    else if (k == "delta") c.delta = it->get<double>();
    else if (k == "kappa") c.kappa = it->get<double>();
    else if (k == "sigma") c.sigma = it->get<double>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else if (k == "atoms") c.atoms = it->get<int>();
    else if (k == "out") c.out = it->get<std::string>();
    else if (k == "dump_fields") c.dump_fields = it->get<bool>();
    else if (k == "threads") c.threads = it->get<int>();
    else if (k == "segment") c.segment = it->get<std::string>();
    else if (k == "samples") c.samples = it->get<int>();
    else throw ConfigError("config file: unknown key '" + k + "'");
  }
}

void validate(const RunConfig& c) {
  require_dimension(c.n);
  if (!(c.m >= 2.0)) throw ConfigError("m must be >= 2");
  if (c.grid < 8) throw ConfigError("grid must have at least 8 points per axis (got " + std::to_string(c.grid) + ")");
  if (c.omega_kind != "ball" && c.omega_kind != "box") throw ConfigError("omega kind must be ball or box");
  if (c.omega_size < 0.0) throw ConfigError("omega size must be positive (0 selects the default)");
  if (!(c.delta > 0.0) || !(c.kappa > 0.0)) throw ConfigError("delta and kappa must be positive");
  if (!(c.sigma > 0.0 && c.sigma < 1.0)) throw ConfigError("sigma must lie in (0, 1)");
  if (c.atoms < 4 * c.n * (c.n + 2)) throw ConfigError("atoms must be at least 4 n (n + 2)");
  if (c.samples < 10000) throw ConfigError("samples must be at least 1e4");
  if (c.segment != "aligned" && c.segment != "library" && c.segment != "degenerate")
    throw ConfigError("segment must be aligned, library or degenerate");
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path dir(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path probe = dir / ".write_test";
  std::ofstream f(probe);
  if (!f) throw IoError("output directory '" + c.out + "' is not writable");
  f.close();
  fs::remove(probe, ec);
  return dir;
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + p.string());
}

std::string line(const CheckResult& r) {
  return std::string(r.pass ? "PASS" : "FAIL") + "  " + r.id + ": " + r.summary;
}

int cmd_verify(const RunConfig& c) {
  const fs::path dir = prepare_out(c);
  std::vector<CheckResult> checks;
  auto add = [&](CheckResult r) {
    std::cout << line(r) << std::endl;
    checks.push_back(std::move(r));
  };
  add(check_embedding(c.n, c.seed));
  add(check_wave_solver(c.n, 1000, c.seed));
  // The computed count for xi with nonzero spatial part is n^2 - 1.
  add(check_wave_dimension({c.n}, 1, c.seed));
  add(check_hull(c.n, c.atoms, 100, c.seed));
  add(check_moments(c.n, c.atoms, c.samples, c.seed));
  if (c.n == 4) {
    add(check_block(c.seed));
    add(check_fields(c.seed));
    add(check_defect_null(c.seed));
  } else {
    std::cout << "SKIP  block, fields, defect_null: demo fields are defined for n = 4" << std::endl;
  }
  bool ok = true;
  json arr = json::array();
  for (const CheckResult& r : checks) {
    ok = ok && r.pass;
    arr.push_back(mhdci::to_json(r));
  }
  write_json(dir / "verify.json", {{"config", to_json(c)}, {"pass", ok}, {"checks", arr}});
  return ok ? 0 : 1;
}

IterationConfig iteration_config(const RunConfig& c) {
  if (c.iters < 1) throw ConfigError("iters must be >= 1 (got " + std::to_string(c.iters) + ")");
  IterationConfig ic;
  ic.n = c.n;
  ic.m = c.m;
  ic.J = c.iters;
  ic.points_per_axis = c.grid;
  ic.atoms = c.atoms;
  ic.kappa = c.kappa;
  ic.sigma_budget = c.sigma;
  ic.delta = c.delta;
  ic.seed = c.seed;
  if (c.omega_size > 0.0 || c.omega_kind != "ball")
    ic.omega = Domain{c.omega_kind == "ball" ? DomainKind::Ball : DomainKind::Box, Vec::Zero(c.n + 1),
                      c.omega_size > 0.0 ? c.omega_size : default_omega(c.n, c.iters, c.grid).size};
  return ic;
}

int cmd_run(const RunConfig& c) {
  const IterationConfig ic = iteration_config(c);
  const fs::path dir = prepare_out(c);
  std::function<void(int, const RelaxedSolution&)> dump;
  if (c.dump_fields)
    dump = [&](int j, const RelaxedSolution& z) {
      write_field((dir / ("field_" + std::to_string(j) + ".mhdf")).string(), z.field);
    };
  const RunReport rep = run_scheme(ic, nullptr, dump);
  write_json(dir / "report.json", {{"cli_config", to_json(c)}, {"run", mhdci::to_json(rep)}});
  for (const IterationRecord& it : rep.iterations)
    std::printf("j=%d gap %.9g -> %.9g beta %.3g balls %d moll %.3g (cap %.3g) retries %d\n", it.step.generation,
                it.step.gap_before, it.step.gap_after, it.step.beta_measured, it.step.balls_used, it.moll_self, it.cap,
                it.retries);
  return rep.gap_decreasing ? 0 : 1;
}

LambdaSegment make_segment(const RunConfig& c) {
  const int n = c.n;
  if (c.segment == "aligned") {
    // 1/2 (k(e2, e3) - k(e3, e4)), annihilated by xi = e1.
    LambdaSegment s;
    s.base = State::zero(n);
    s.direction = State{0.5 * (k_atom(unit_vector(n, 1), unit_vector(n, 2)).reduced() -
                               k_atom(unit_vector(n, 2), unit_vector(n, 3)).reduced()),
                        0.0};
    s.certificate = WaveDirection{unit_vector(n + 1, 0), 0.0};
    return s;
  }
  if (c.segment == "library") {
    const AtomLibrary lib = build_atom_library(n, c.atoms, c.seed);
    const State z = State::zero(n);
    return segment_from_decomposition(z, decompose(z.reduced, lib), lib);
  }
  // Only M and Q move: no temporal column to oscillate.
  LambdaSegment s;
  s.base = State::zero(n);
  s.direction = State::zero(n);
  s.direction.reduced.M(0, 1) = s.direction.reduced.M(1, 0) = 0.1;
  s.certificate = WaveDirection{unit_vector(n + 1, 2), 0.0};
  return s;
}

int cmd_block(const RunConfig& c) {
  const fs::path dir = prepare_out(c);
  const LambdaSegment seg = make_segment(c);
  BlockOptions opts;
  opts.seed = c.seed;
  opts.sup_samples = 20000;
  opts.min_fraction = 0.0;
  const double zbar = state_norm(seg.half_length * seg.direction);
  const double delta = c.delta * zbar;
  const BuildingBlock blk = build_block(seg, delta, c.m, Vec::Zero(c.n + 1), 1.0, opts);
  const BlockMetrics bm = block_metrics(blk, c.m, 200000, c.seed);
  const double h0 = 0.1 / blk.frequency();
  const DivergenceRefinement dr = divergence_refinement(blk, h0, 2, 2000, c.seed);
  const double ratio = dr.ratios.empty() ? 0.0 : dr.ratios.front();
  const json out = {{"config", to_json(c)},
                    {"segment", c.segment},
                    {"certificate", std::vector<double>(seg.certificate.xi.data(),
                                                        seg.certificate.xi.data() + seg.certificate.xi.size())},
                    {"frequency", blk.frequency()},
                    {"delta", delta},
                    {"sup_distance", blk.sup_distance()},
                    {"cover_fraction", blk.covered_fraction()},
                    {"cover_pieces", blk.cover().size()},
                    {"alpha_est", bm.alpha_est},
                    {"mass_ratio", bm.mass_ratio},
                    {"mass_std_error", bm.mass_std_error},
                    {"div_steps", dr.steps},
                    {"div_l2", dr.l2},
                    {"div_max", dr.max},
                    {"div_ratio", ratio}};
  write_json(dir / "block.json", out);
  std::printf("N %d, sup distance %.4g < %.4g, cover %.3f, alpha %.4g, divergence ratio %.3f\n", blk.frequency(),
              blk.sup_distance(), delta, blk.covered_fraction(), bm.alpha_est, ratio);
  return 0;
}

int cmd_moments(const RunConfig& c) {
  const fs::path dir = prepare_out(c);
  const CheckResult r = check_moments(c.n, c.atoms, c.samples, c.seed);
  write_json(dir / "moments.json", {{"config", to_json(c)}, {"result", mhdci::to_json(r)}});
  std::cout << line(r) << std::endl;
  return r.pass ? 0 : 1;
}

int cmd_dump_atoms(const RunConfig& c) {
  const fs::path dir = prepare_out(c);
  const AtomLibrary lib = build_atom_library(c.n, c.atoms, c.seed);
  MhdfData d;
  d.n = static_cast<std::uint32_t>(c.n);
  d.points_per_axis = static_cast<std::uint32_t>(lib.count());
  d.components = static_cast<std::uint32_t>(2 * c.n);
  for (const KAtom& a : lib.atoms()) {
    for (int i = 0; i < c.n; ++i) d.values.push_back(a.u()(i));
    for (int i = 0; i < c.n; ++i) d.values.push_back(a.b()(i));
  }
  write_mhdf((dir / "atoms.mhdf").string(), d);
  std::printf("%d atoms written to %s\n", lib.count(), (dir / "atoms.mhdf").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex-integration toolkit for the relaxed ideal-MHD inclusion"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string config_file;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "JSON config file (flags override it)");
    sub->add_option("--n", cfg.n, "spatial dimension");
    sub->add_option("--m", cfg.m, "integrability exponent");
    sub->add_option("--grid", cfg.grid, "lattice points per axis");
    sub->add_option("--omega-kind", cfg.omega_kind, "ball or box");
    sub->add_option("--omega-size", cfg.omega_size, "radius or half-width (0: default)");
    sub->add_option("--iters", cfg.iters, "scheme iterations J");
    sub->add_option("--delta", cfg.delta, "block sup-distance relative to the segment");
    sub->add_option("--kappa", cfg.kappa, "largest covering radius");
    sub->add_option("--sigma", cfg.sigma, "uncovered volume budget");
    sub->add_option("--seed", cfg.seed, "root seed");
    sub->add_option("--atoms", cfg.atoms, "atom library size");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_flag("--dump-fields", cfg.dump_fields, "write MHDF fields per iteration");
    sub->add_option("--threads", cfg.threads, "worker threads (0: all cores)");
    sub->add_option("--samples", cfg.samples, "sphere samples for moments");
    sub->add_option("--segment", cfg.segment, "aligned, library or degenerate (block)");
  };
  CLI::App* verify = app.add_subcommand("verify", "run the property battery, write verify.json");
  CLI::App* run = app.add_subcommand("run", "iterate the scheme, write report.json");
  CLI::App* block = app.add_subcommand("block", "build one block, write block.json");
  CLI::App* moments = app.add_subcommand("moments", "sphere moments and T-image rank");
  CLI::App* atoms = app.add_subcommand("dump-atoms", "write the atom library as MHDF");
  for (CLI::App* s : {verify, run, block, moments, atoms}) add_common(s);

  CLI11_PARSE(app, argc, argv);
  try {
    if (!config_file.empty()) {
      std::ifstream f(config_file);
      if (!f) throw IoError("cannot read config file " + config_file);
      RunConfig base;
      from_json(json::parse(f), base);
      // Flags given on the command line win over the file.
      CLI::App* sub = app.get_subcommands().front();
      auto given = [&](const char* name) { return sub->count(name) > 0; };
      if (!given("--n")) cfg.n = base.n;
      if (!given("--m")) cfg.m = base.m;
      if (!given("--grid")) cfg.grid = base.grid;
      if (!given("--omega-kind")) cfg.omega_kind = base.omega_kind;
      if (!given("--omega-size")) cfg.omega_size = base.omega_size;
      if (!given("--iters")) cfg.iters = base.iters;
      if (!given("--delta")) cfg.delta = base.delta;
      if (!given("--kappa")) cfg.kappa = base.kappa;
      if (!given("--sigma")) cfg.sigma = base.sigma;
      if (!given("--seed")) cfg.seed = base.seed;
      if (!given("--atoms")) cfg.atoms = base.atoms;
      if (!given("--out")) cfg.out = base.out;
      if (!given("--dump-fields")) cfg.dump_fields = base.dump_fields;
      if (!given("--threads")) cfg.threads = base.threads;
      if (!given("--samples")) cfg.samples = base.samples;
      if (!given("--segment")) cfg.segment = base.segment;
    }
    validate(cfg);
    set_thread_count(cfg.threads);
    if (*verify) return cmd_verify(cfg);
    if (*run) return cmd_run(cfg);
    if (*block) return cmd_block(cfg);
    if (*moments) return cmd_moments(cfg);
    return cmd_dump_atoms(cfg);
  } catch (const UnsupportedDimension& e) {
    std::cerr << "unsupported dimension: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
