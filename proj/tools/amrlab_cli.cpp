// Command-line driver: run a case, list cases, run a verification suite.
//
// Exit codes: 0 success, 1 failed verification, 2 config error,
// 3 numerical failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "amrlab/cases.hpp"
#include "amrlab/errors.hpp"
#include "amrlab/euler_model.hpp"

namespace {

using namespace amrlab;

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

bool check(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
  return ok;
}

// Fast end-to-end checks; the full criteria live in the acceptance binary.
int verify(const std::string& suite) {
  bool ok = true;
  if (suite == "smoke") {
    for (CaseId id : {CaseId::kVortex, CaseId::kSwirl, CaseId::kRrtb, CaseId::kSphereAdvect}) {
      CaseConfig c = default_config(id);
      c.end_time = 0.0;
      const CaseResult r = run_case(c);
      ok &= check(std::string("zero-step ") + to_string(id), r.diag.size() == 1,
                  "rows=" + std::to_string(r.diag.size()));
    }
    const PhysicalConstants pc;
    const double p = 1.0e5, rho = p / (pc.R * 300.0);
    const double a = sound_speed(p, rho, pc);
    ok &= check("sound speed at 300 K", std::abs(a - 347.3) <= 0.5, "a=" + std::to_string(a));
  } else if (suite == "conservation") {
    CaseConfig c = default_config(CaseId::kSwirl);
    c.end_time = 0.5;
    const CaseResult m = run_case(c);
    c.flux = FluxMode::kPointwise;
    const CaseResult p = run_case(c);
    std::ostringstream d;
    d << "mortar=" << m.max_tracer_loss << " pointwise=" << p.max_tracer_loss;
    ok &= check("swirl tracer conservation", m.max_tracer_loss <= 1e-12 &&
                                                 p.max_tracer_loss > m.max_tracer_loss,
                d.str());
  } else {
    throw ConfigError("unknown suite '" + suite + "' (smoke, conservation)");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"amrlab: tree- and patch-based AMR test cases"};
  app.require_subcommand(1);

  std::string case_name, backend, flux, config_path, out_dir = "out";
  bool verbose = false;
  auto* run = app.add_subcommand("run", "Run one case");
  run->add_option("--case", case_name, "vortex | swirl | rrtb | sphere-advect")->required();
  run->add_option("--backend", backend, "tree | patch");
  run->add_option("--flux", flux, "mortar | pointwise | linearized");
  run->add_option("--config", config_path, "key = value overrides");
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("-v,--verbose", verbose, "print diagnostics rows");

  auto* list = app.add_subcommand("list-cases", "List cases and config keys");
  bool keys = false;
  list->add_flag("--keys", keys, "also list config keys");

  std::string suite = "smoke";
  auto* ver = app.add_subcommand("verify", "Run a quick verification suite");
  ver->add_option("--suite", suite, "smoke | conservation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (CaseId id : {CaseId::kVortex, CaseId::kSwirl, CaseId::kRrtb, CaseId::kSphereAdvect}) {
        const CaseConfig c = default_config(id);
        std::cout << to_string(id) << "  steps=" << c.num_steps() << " dt=" << c.dt
                  << " max_level=" << c.policy.max_level << "\n";
      }
      if (keys) std::cout << "\nconfig keys:\n" << config_keys_help();
      return 0;
    }
    if (*ver) return verify(suite);

    CaseConfig cfg = default_config(case_from_string(case_name));
    if (!config_path.empty()) apply_config_text(cfg, read_file(config_path));
    if (!backend.empty()) cfg.backend = backend_from_string(backend);
    if (!flux.empty()) apply_config_text(cfg, "flux = " + flux);
    RunOptions opts;
    opts.out_dir = out_dir;
    opts.verbose = verbose;
    opts.log = &std::cerr;
    const CaseResult r = run_case(cfg, opts);
    write_report(std::cout, cfg, r);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
