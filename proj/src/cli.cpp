#include "rdcbias/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "rdcbias/debias.hpp"
#include "rdcbias/ensemble.hpp"
#include "rdcbias/errors.hpp"
#include "rdcbias/experiments.hpp"
#include "rdcbias/noise.hpp"
#include "rdcbias/parallel.hpp"
#include "rdcbias/pdb.hpp"
#include "rdcbias/rdc_table.hpp"

namespace rdcbias {

namespace {

struct DataOptions {
  std::string pdb = default_pdb_path();
  std::string rdc;
  std::string units = "hz";
  std::vector<std::string> dmax;
  std::string range;
  std::vector<std::string> kinds;
  std::string chain;
  std::size_t residue_limit = 0;
  std::string json_out;
};

void add_data_options(CLI::App& cmd, DataOptions& o, bool with_range = true) {
  cmd.add_option("--pdb", o.pdb, "Backbone PDB file")->capture_default_str();
  cmd.add_option("--rdc", o.rdc, "RDC table (csv or tsv with header)")->required();
  cmd.add_option("--units", o.units, "Units of a plain value column: hz or normalized")
      ->capture_default_str()
      ->check(CLI::IsMember({"hz", "normalized"}));
  cmd.add_option("--dmax", o.dmax, "Override D^max in Hz, e.g. N-H=23000 (repeatable)");
  if (with_range) cmd.add_option("--range", o.range, "Residue range FIRST-LAST (inclusive)");
  cmd.add_option("--kinds", o.kinds, "Bond kinds to use (default: N-H C-CA C-N)");
  cmd.add_option("--chain", o.chain, "Chain identifier (default: first chain)");
  cmd.add_option("--residue-limit", o.residue_limit, "Use only the first N residues (0: all)");
  cmd.add_option("--json-out", o.json_out, "Write JSON here instead of standard output");
}

struct LoadedData {
  BackboneStructure structure;
  RdcDataset rdc;
  DmaxTable dmax;
  std::vector<BondKind> kinds;
};

std::vector<BondKind> kinds_from(const std::vector<std::string>& names) {
  if (names.empty()) return {kAllBondKinds[0], kAllBondKinds[1], kAllBondKinds[2]};
  std::vector<BondKind> out;
  for (const auto& n : names) {
    const BondKind k = parse_bond_kind(n);
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

DmaxTable dmax_from(const std::vector<std::string>& overrides) {
  DmaxTable dmax = DmaxTable::standard();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw InputError("--dmax expects KIND=HZ, got '" + o + "'");
    double hz = 0.0;
    try {
      std::size_t used = 0;
      hz = std::stod(o.substr(eq + 1), &used);
      if (used != o.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError("--dmax value in '" + o + "' is not a number");
    }
    dmax.set_dmax(parse_bond_kind(o.substr(0, eq)), hz);
  }
  return dmax;
}

LoadedData load(const DataOptions& o) {
  PdbOptions pdb_options;
  pdb_options.residue_limit = o.residue_limit;
  if (!o.chain.empty()) {
    if (o.chain.size() != 1) throw InputError("--chain takes a single character");
    pdb_options.chain = o.chain[0];
  }
  BackboneStructure structure = read_pdb_backbone(o.pdb, pdb_options).with_amide_hydrogens();
  DmaxTable dmax = dmax_from(o.dmax);
  RdcDataset rdc = parse_rdc_table(read_text_file(o.rdc), dmax,
                                   o.units == "hz" ? CouplingUnits::Hz : CouplingUnits::Normalized);
  rdc.check_against(structure);
  return {std::move(structure), std::move(rdc), std::move(dmax), kinds_from(o.kinds)};
}

// Slice selected by --range, or the whole structure.
BackboneStructure select_range(const BackboneStructure& s, const std::string& range) {
  if (range.empty()) return s;
  const auto dash = range.find('-', 1);
  int first = 0;
  int last = 0;
  try {
    if (dash == std::string::npos) throw std::invalid_argument("no dash");
    std::size_t u1 = 0;
    std::size_t u2 = 0;
    first = std::stoi(range.substr(0, dash), &u1);
    last = std::stoi(range.substr(dash + 1), &u2);
    if (u1 != dash || u2 != range.size() - dash - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw InputError("--range expects FIRST-LAST, got '" + range + "'");
  }
  if (last <= first) throw InputError("--range must cover at least two residues");
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].number != first) continue;
    const auto count = static_cast<std::size_t>(last - first + 1);
    if (i + count > s.size() || s[i + count - 1].number != last) {
      throw InputError("--range " + range + " is not a contiguous run of residues in the PDB");
    }
    return s.slice(i, count);
  }
  throw InputError("--range: residue " + std::to_string(first) + " not in the PDB");
}

// Idealized template for a structure: its torsions rebuilt with the same
// first-residue frame, restricted to bonds with measured couplings.
struct Template {
  FragmentModel model;
  TorsionSet torsions;
  DesignMatrix design;
  Eigen::VectorXd d;
};

Template make_template(const BackboneStructure& s, const LoadedData& data) {
  FragmentModel model(s.sequence(), data.kinds, anchor_of(s[0]), data.rdc.ids(), s[0].number);
  TorsionSet torsions = extract_torsions(s);
  DesignMatrix design = model.design(torsions);
  Eigen::VectorXd d = data.rdc.couplings_for(design);
  return {std::move(model), std::move(torsions), std::move(design), std::move(d)};
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json mat_json(const Mat3& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

Json range_json(const BackboneStructure& s) {
  return Json::array({s[0].number, s[s.size() - 1].number});
}

Json fit_json(const FitResult& fit) {
  Json j;
  j["s"] = vec_json(fit.s_hat);
  j["saupe"] = mat_json(fit.s_tensor.matrix());
  j["eigenvalues"] = vec_json(fit.eigen.values);
  j["eigenvectors"] = mat_json(fit.eigen.vectors);
  try {
    const auto [da, r] = magnitude_rhombicity(fit.eigen.values);
    j["magnitude_da"] = da;
    j["rhombicity"] = r;
  } catch (const NumericalError&) {
    j["magnitude_da"] = nullptr;
    j["rhombicity"] = nullptr;
  }
  j["rms"] = fit.rms;
  return j;
}

Json debias_json(const DebiasResult& r) {
  Json j;
  j["sigma_used_deg"] = rad_to_deg(r.sigma_used);
  j["n_sim"] = r.n_sim;
  j["n_skipped"] = r.n_skipped;
  j["lambda_ols"] = vec_json(r.lambda_ols);
  j["lambda_sim_mean"] = vec_json(r.lambda_sim_mean);
  j["lambda_sim_stderr"] = vec_json(r.lambda_sim_stderr);
  j["bias_hat"] = vec_json(r.bias_hat);
  j["lambda_tilde"] = vec_json(r.lambda_tilde);
  return j;
}

void emit(const Json& j, const std::string& path, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
}

// ---- subcommands --------------------------------------------------------

struct FitOptions {
  DataOptions data;
  bool constrained = false;
  double tol = 1e-10;
  int max_iter = 50000;
};

void run_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  const LoadedData data = load(o.data);
  const BackboneStructure s = select_range(data.structure, o.data.range);

  BondVectorSet bonds;
  Json unmatched = Json::array();
  for (const auto& b : bond_vectors(s, data.kinds)) {
    if (data.rdc.find(b.id)) {
      bonds.push_back(b);
    } else {
      unmatched.push_back(to_string(b.id.kind) + " " + std::to_string(b.id.residue_number));
    }
  }
  if (bonds.empty()) throw InputError("no bond in the selected range has a coupling");
  const DesignMatrix design = build_design(bonds);
  const Eigen::VectorXd d = data.rdc.couplings_for(design);

  Json j;
  j["command"] = "fit";
  j["method"] = o.constrained ? "constrained" : "ols";
  j["residues"] = range_json(s);
  j["m"] = design.m();
  FitResult fit;
  if (o.constrained) {
    ConstrainedOptions copt;
    copt.tol = o.tol;
    copt.max_iter = o.max_iter;
    const ConstrainedFit c = constrained_fit(design, d, copt);
    fit = c.fit;
    j.update(fit_json(fit));
    j["field_tensor"] = mat_json(c.field.matrix());
    j["iterations"] = c.iterations;
    j["converged"] = c.converged;
    if (!c.converged) err << "warning: constrained fit stopped after " << c.iterations << " iterations\n";
  } else {
    fit = ols_fit(design, d);
    j.update(fit_json(fit));
  }
  const FieldTensor field = field_tensor(fit.s_tensor);
  j["field_tensor_physical"] = field.is_physical();
  j["couplings_without_bond_vector"] = unmatched;
  Json residuals = Json::array();
  for (std::size_t i = 0; i < design.rows.size(); ++i) {
    const auto& id = design.rows[i];
    const auto k = static_cast<Eigen::Index>(i);
    residuals.push_back(Json{{"residue", id.residue_number},
                             {"bond", to_string(id.kind)},
                             {"d", d(k)},
                             {"predicted", d(k) - fit.residual(k)},
                             {"residual_hz", to_hz(fit.residual(k), id.kind, data.dmax)}});
  }
  j["residuals"] = residuals;
  emit(j, o.data.json_out, out);
}

void run_sigma(const DataOptions& o, std::ostream& out) {
  const LoadedData data = load(o);
  const BackboneStructure s = select_range(data.structure, o.range);
  const Template t = make_template(s, data);
  const FitResult fit = ols_fit(t.design, t.d);
  const SensitivityTensor sens = sensitivity(t.model, t.torsions);
  const double q = projected_sensitivity(sens, t.design, fit.s_hat);

  Json j;
  j["command"] = "sigma";
  j["residues"] = range_json(s);
  j["m"] = t.design.m();
  j["rms"] = fit.rms;
  j["q"] = q;
  j["sigma_hat_deg"] = fit.rms == 0.0 ? 0.0 : rad_to_deg(estimate_sigma(fit, sens, t.design));
  if (t.design.m() > 5) {
    const double sa = estimate_sigma_add(fit);
    j["sigma_add_hat"] = sa;
    j["sigma_add_hat_hz_nh"] = std::abs(to_hz(sa, BondKind::NH, data.dmax));
  } else {
    j["sigma_add_hat"] = nullptr;
    j["sigma_add_hat_hz_nh"] = nullptr;
  }
  emit(j, o.json_out, out);
}

struct DebiasOptions {
  DataOptions data;
  std::optional<double> sigma_deg;
  bool auto_sigma = false;
  int nsim = 1000;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<double> simex_grid;
};

DebiasResult debias_template(const Template& t, std::optional<double> sigma_deg, int nsim,
                             const RandomStream& rng, int threads) {
  return sigma_deg ? mc_debias(t.model, t.torsions, t.d, deg_to_rad(*sigma_deg), nsim, rng, threads)
                   : mc_debias_auto(t.model, t.torsions, t.d, nsim, rng, threads);
}

void run_debias(const DebiasOptions& o, std::ostream& out) {
  const LoadedData data = load(o.data);
  const BackboneStructure s = select_range(data.structure, o.data.range);
  const Template t = make_template(s, data);
  const RandomStream rng(o.seed, 0);
  const DebiasResult r = debias_template(t, o.sigma_deg, o.nsim, rng, o.threads);

  Json j;
  j["command"] = "debias";
  j["residues"] = range_json(s);
  j["m"] = t.design.m();
  j["seed"] = o.seed;
  j["sigma_mode"] = o.sigma_deg ? "given" : "auto";
  j.update(debias_json(r));
  if (!o.simex_grid.empty()) {
    const SimexResult sx =
        simex_extrapolate(t.model, t.torsions, t.d, r.sigma_used, o.simex_grid, o.nsim, rng, o.threads);
    Json means = Json::array();
    for (const auto& m : sx.means) means.push_back(vec_json(m));
    j["simex"] = Json{{"k_grid", sx.k_grid},
                      {"means", means},
                      {"extrapolated", vec_json(sx.extrapolated)},
                      {"linear_fallback", sx.linear_fallback}};
  }
  emit(j, o.data.json_out, out);
}

struct MfrOptions {
  DataOptions data;
  int window = 7;
  std::optional<double> threshold;
  bool below = false;
  int nsim = 0;
  std::optional<double> sigma_deg;
  std::uint64_t seed = 0;
  int threads = 1;
};

void run_mfr(const MfrOptions& o, std::ostream& out) {
  const LoadedData data = load(o.data);
  const auto windows = enumerate_fragments(data.structure, o.window);
  std::vector<FragmentEstimate> estimates(windows.size());
  const RandomStream rng(o.seed, 0);
  parallel_for(windows.size(), o.threads, [&](std::size_t i) {
    const auto& w = windows[i];
    const Template t = make_template(data.structure.slice(w.first, w.count), data);
    FragmentEstimate& e = estimates[i];
    e.window = w;
    e.fit = ols_fit(t.design, t.d);
    e.rms = e.fit.rms;
    if (o.nsim > 0) e.debias = debias_template(t, o.sigma_deg, o.nsim, rng.substream(i), 1);
  });
  const EnsembleSummary summary = average_eigenvalues(estimates, o.nsim > 0, o.threshold, !o.below);

  Json j;
  j["command"] = "mfr";
  j["window_planes"] = o.window;
  j["n_windows"] = windows.size();
  j["n_fragments"] = summary.n_fragments;
  j["selection"] = summary.selection;
  j["lambda_ave_ols"] = vec_json(summary.lambda_ave_ols);
  j["lambda_ave_tilde"] =
      summary.lambda_ave_tilde ? vec_json(*summary.lambda_ave_tilde) : Json(nullptr);
  j["seed"] = o.seed;
  Json frags = Json::array();
  for (const auto& e : estimates) {
    Json f{{"id", e.window.id},
           {"residues", {e.window.first_number, e.window.last_number}},
           {"m", e.fit.residual.size()},
           {"rms", e.rms},
           {"lambda_ols", vec_json(e.fit.eigen.values)}};
    if (e.debias) {
      f["sigma_used_deg"] = rad_to_deg(e.debias->sigma_used);
      f["lambda_tilde"] = vec_json(e.debias->lambda_tilde);
    }
    frags.push_back(f);
  }
  j["fragments"] = frags;
  emit(j, o.data.json_out, out);
}

struct ExperimentOptions {
  std::string name;
  std::string config;
  std::vector<std::string> set;
  std::string out_dir = "results";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

void run_experiment_cmd(const ExperimentOptions& o, std::ostream& out) {
  Json overrides = Json::object();
  if (!o.config.empty()) {
    try {
      overrides = Json::parse(read_text_file(o.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError("config '" + o.config + "' is not valid JSON: " + e.what());
    }
  }
  for (const auto& kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw InputError("--set expects KEY=JSON, got '" + kv + "'");
    const std::string value = kv.substr(eq + 1);
    Json parsed;
    try {
      parsed = Json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      parsed = value;  // bare strings such as paths
    }
    overrides[kv.substr(0, eq)] = parsed;
  }
  if (o.seed) overrides["seed"] = *o.seed;
  const StudyOutput study = run_experiment(o.name, overrides, o.threads);
  const auto written = write_study(study, o.out_dir);
  Json j;
  j["command"] = "experiment";
  j["experiment"] = study.name;
  j["rows"] = study.rows.size();
  j["files"] = written;
  out << j.dump(2) << "\n";
}

struct SimulateOptions {
  std::string pdb = default_pdb_path();
  std::vector<double> eigenvalues{-0.60e-3, -0.25e-3, 0.85e-3};
  std::vector<double> euler{30.0, 50.0, 70.0};
  double noise_hz = 0.0;
  std::uint64_t seed = 0;
  std::size_t residue_limit = 0;
  std::vector<std::string> dmax;
  std::string out;
};

void run_simulate(const SimulateOptions& o, std::ostream& out) {
  if (o.eigenvalues.size() != 3 || o.euler.size() != 3) {
    throw InputError("--eigenvalues and --euler take three values each");
  }
  if (!(o.noise_hz >= 0.0)) throw InputError("--noise-hz must be non-negative");
  PdbOptions pdb_options;
  pdb_options.residue_limit = o.residue_limit;
  const BackboneStructure s = read_pdb_backbone(o.pdb, pdb_options).with_amide_hydrogens();
  const Eigen::Vector3d lam(o.eigenvalues[0], o.eigenvalues[1], o.eigenvalues[2]);
  if (std::abs(lam.sum()) > 1e-12) throw InputError("--eigenvalues must sum to zero");
  const SaupeTensor tensor = saupe_from_eigen(lam, rotation_zyz(o.euler[0], o.euler[1], o.euler[2]));
  const DmaxTable dmax = dmax_from(o.dmax);
  const BondVectorSet bonds = bond_vectors(s, kAllBondKinds);
  const Eigen::VectorXd d = predict_rdc(tensor, bonds);
  const RandomStream rng(o.seed, 0);

  std::string table = "residue,bond,value,units,residue_name\n";
  char buf[64];
  for (std::size_t i = 0; i < bonds.size(); ++i) {
    const auto& b = bonds[i];
    const double hz = to_hz(d(static_cast<Eigen::Index>(i)), b.id.kind, dmax) +
                      o.noise_hz * rng.normal(static_cast<std::uint64_t>(i));
    std::snprintf(buf, sizeof buf, "%.4f", hz);
    std::string name;
    for (const auto& r : s.residues()) {
      if (r.number == b.id.residue_number) name = r.name;
    }
    table += std::to_string(b.id.residue_number) + "," + to_string(b.id.kind) + "," + buf + ",hz," +
             name + "\n";
  }
  if (o.out.empty()) {
    out << table;
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw InputError("cannot write '" + o.out + "'");
    f << table;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Saupe tensor fitting and eigenvalue bias removal for RDC data", "rdcbias"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the Saupe tensor (OLS or PSD-constrained)");
  add_data_options(*fit_cmd, fit.data);
  fit_cmd->add_flag("--constrained", fit.constrained, "Constrain the field tensor to be PSD");
  fit_cmd->add_option("--tol", fit.tol, "Constrained fit tolerance")->capture_default_str();
  fit_cmd->add_option("--max-iter", fit.max_iter, "Constrained fit iteration cap")->capture_default_str();

  DataOptions sigma;
  auto* sigma_cmd = app.add_subcommand("sigma", "Estimate structural and additive noise levels");
  add_data_options(*sigma_cmd, sigma);

  DebiasOptions debias;
  double debias_sigma = 0.0;
  auto* debias_cmd = app.add_subcommand("debias", "Monte Carlo eigenvalue bias removal");
  add_data_options(*debias_cmd, debias.data);
  auto* sigma_opt = debias_cmd->add_option("--sigma", debias_sigma, "Torsion noise in degrees");
  auto* auto_opt = debias_cmd->add_flag("--auto-sigma", debias.auto_sigma,
                                        "Estimate the torsion noise from the residual");
  sigma_opt->excludes(auto_opt);
  debias_cmd->add_option("--nsim", debias.nsim, "Simulated designs")->capture_default_str();
  debias_cmd->add_option("--seed", debias.seed, "Random seed")->capture_default_str();
  debias_cmd->add_option("--threads", debias.threads, "Worker threads (0: all cores)");
  debias_cmd->add_option("--simex-grid", debias.simex_grid, "Noise multipliers k for SIMEX");

  MfrOptions mfr;
  double mfr_threshold = 0.0;
  double mfr_sigma = 0.0;
  bool mfr_auto = false;
  bool mfr_above = false;
  auto* mfr_cmd = app.add_subcommand("mfr", "Fragment sweep with eigenvalue averaging");
  add_data_options(*mfr_cmd, mfr.data, false);
  mfr_cmd->add_option("--window", mfr.window, "Peptide planes per fragment")->capture_default_str();
  auto* th_opt = mfr_cmd->add_option("--threshold", mfr_threshold, "Residual RMS cutoff");
  auto* above_flag = mfr_cmd->add_flag("--above", mfr_above, "Keep fragments with RMS above the cutoff (default)");
  auto* below_flag = mfr_cmd->add_flag("--below", mfr.below, "Keep fragments with RMS below the cutoff");
  above_flag->excludes(below_flag);
  mfr_cmd->add_option("--nsim", mfr.nsim, "Simulated designs per fragment (0: no debias)")
      ->capture_default_str();
  auto* mfr_sigma_opt = mfr_cmd->add_option("--sigma", mfr_sigma, "Torsion noise in degrees");
  auto* mfr_auto_opt = mfr_cmd->add_flag("--auto-sigma", mfr_auto, "Estimate noise per fragment (default)");
  mfr_sigma_opt->excludes(mfr_auto_opt);
  mfr_cmd->add_option("--seed", mfr.seed, "Random seed")->capture_default_str();
  mfr_cmd->add_option("--threads", mfr.threads, "Worker threads (0: all cores)");

  ExperimentOptions exp;
  std::uint64_t exp_seed = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a simulation study and write CSV + JSON");
  exp_cmd->add_option("name", exp.name, "Study name")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  exp_cmd->add_option("--config", exp.config, "JSON file with config overrides");
  exp_cmd->add_option("--set", exp.set, "Override one key: KEY=JSON (repeatable)");
  exp_cmd->add_option("--out-dir", exp.out_dir, "Output directory")->capture_default_str();
  auto* exp_seed_opt = exp_cmd->add_option("--seed", exp_seed, "Random seed");
  exp_cmd->add_option("--threads", exp.threads, "Worker threads (0: all cores)");

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate-rdc", "Write a synthetic RDC table for a structure");
  sim_cmd->add_option("--pdb", sim.pdb, "Backbone PDB file")->capture_default_str();
  sim_cmd->add_option("--eigenvalues", sim.eigenvalues, "Saupe eigenvalues (sum zero)")->expected(3);
  sim_cmd->add_option("--euler", sim.euler, "ZYZ Euler angles in degrees")->expected(3);
  sim_cmd->add_option("--noise-hz", sim.noise_hz, "Gaussian noise added to each coupling (Hz)");
  sim_cmd->add_option("--seed", sim.seed, "Random seed");
  sim_cmd->add_option("--residue-limit", sim.residue_limit, "Use only the first N residues");
  sim_cmd->add_option("--dmax", sim.dmax, "Override D^max in Hz, e.g. N-H=23000 (repeatable)");
  sim_cmd->add_option("--out", sim.out, "Output file (default: standard output)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit_cmd) {
      run_fit(fit, out, err);
    } else if (*sigma_cmd) {
      run_sigma(sigma, out);
    } else if (*debias_cmd) {
      if (sigma_opt->count() == 0 && !debias.auto_sigma) {
        throw InputError("debias needs --sigma DEGREES or --auto-sigma");
      }
      if (sigma_opt->count() > 0) debias.sigma_deg = debias_sigma;
      run_debias(debias, out);
    } else if (*mfr_cmd) {
      if (th_opt->count() > 0) mfr.threshold = mfr_threshold;
      if (mfr_sigma_opt->count() > 0) mfr.sigma_deg = mfr_sigma;
      run_mfr(mfr, out);
    } else if (*exp_cmd) {
      if (exp_seed_opt->count() > 0) exp.seed = exp_seed;
      run_experiment_cmd(exp, out);
    } else if (*sim_cmd) {
      run_simulate(sim, out);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace rdcbias
