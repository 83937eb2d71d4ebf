#include "rdcbias/experiments.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "rdcbias/errors.hpp"
#include "rdcbias/noise.hpp"
#include "rdcbias/parallel.hpp"
#include "rdcbias/pdb.hpp"
#include "rdcbias/rdc_table.hpp"

#ifndef RDCBIAS_DATA_DIR
#define RDCBIAS_DATA_DIR "data"
#endif

namespace rdcbias {

namespace fs = std::filesystem;

namespace {

// Stream ids keep the studies' random numbers disjoint for a shared seed.
enum StudyStream : std::uint64_t {
  kAttenuationStream = 1,
  kSigmaStream = 2,
  kDebiasStream = 3,
  kMfrSyntheticStream = 4,
  kAdditiveStream = 5,
  kMfrRealStream = 6,
};

const char* const kAxis[3] = {"x", "y", "z"};

std::string stat(const std::string& base, int j) { return base + "_" + kAxis[j]; }

// ---- configuration ------------------------------------------------------

Json fixed_tensor_defaults() {
  return Json{{"eigenvalues", {-0.60e-3, -0.25e-3, 0.85e-3}}, {"euler_zyz_deg", {30.0, 50.0, 70.0}}};
}

Json study_defaults(const std::string& name) {
  const Json base{{"seed", 20240607}, {"pdb", default_pdb_path()}};
  Json d = base;
  if (name == "attenuation") {
    d["residues"] = {1, 8};
    d.update(fixed_tensor_defaults());
    d["sigma_deg"] = {0.0, 5.0, 10.0, 15.0, 20.0};
    d["draws"] = 200;
  } else if (name == "sigma-recovery") {
    d["residues"] = {1, 8};
    d.update(fixed_tensor_defaults());
    d["sigma_deg"] = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0};
    d["draws"] = 200;
  } else if (name == "debias-hist") {
    d["residues"] = {1, 8};
    d.update(fixed_tensor_defaults());
    d["sigma_deg"] = 20.0;
    d["templates"] = 200;
    d["n_sim"] = 8000;
    d["auto_sigma"] = false;
    d["simex_grid"] = Json::array();
    d["bins"] = 30;
  } else if (name == "mfr-synthetic") {
    d["residue_limit"] = 71;
    d["window_planes"] = 7;
    d["tensors"] = 12;
    d["sigma_deg"] = {5.0, 10.0, 15.0, 20.0};
    d["n_sim"] = 500;
  } else if (name == "additive-bias") {
    d["residues"] = {1, 8};
    d["eigenvalues"] = {-1.60e-3, 0.75e-3, 0.85e-3};
    d["noise_fraction"] = {0.0, 0.02, 0.04, 0.06, 0.08, 0.10};
    d["draws"] = 2000;
    d["antithetic"] = true;
  } else if (name == "mfr-real") {
    d["pdb"] = "";
    d["rdc"] = "";
    d["units"] = "hz";
    d["dmax_hz"] = Json::object();
    d["residue_limit"] = 71;
    d["window_planes"] = 7;
    d["mode"] = "generate";
    d["fragments_dir"] = "";
    d["copies"] = 10;
    d["generator_sigma_deg"] = 20.0;
    d["sigma_deg"] = "auto";
    d["n_sim"] = 500;
    d["thresholds"] = Json::array();
    d["above"] = true;
  } else {
    std::string known;
    for (const auto& n : experiment_names()) known += (known.empty() ? "" : ", ") + n;
    throw InputError("unknown experiment '" + name + "' (known: " + known + ")");
  }
  return d;
}

template <typename T>
T get(const Json& config, const char* key) {
  try {
    return config.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(std::string("config key '") + key + "' has the wrong type");
  }
}

std::vector<double> get_list(const Json& config, const char* key) {
  auto v = get<std::vector<double>>(config, key);
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError(std::string("config key '") + key + "' must be finite");
  }
  return v;
}

int get_positive(const Json& config, const char* key) {
  const int v = get<int>(config, key);
  if (v < 1) throw InputError(std::string("config key '") + key + "' must be positive");
  return v;
}

std::uint64_t get_seed(const Json& config) { return get<std::uint64_t>(config, "seed"); }

std::vector<double> nonnegative(std::vector<double> v, const char* key) {
  for (double x : v) {
    if (x < 0.0) throw InputError(std::string("config key '") + key + "' must be non-negative");
  }
  return v;
}

SaupeTensor fixed_tensor(const Json& config) {
  const auto values = get_list(config, "eigenvalues");
  const auto euler = get_list(config, "euler_zyz_deg");
  if (values.size() != 3 || euler.size() != 3) {
    throw InputError("eigenvalues and euler_zyz_deg need three entries each");
  }
  Eigen::Vector3d lam(values[0], values[1], values[2]);
  if (std::abs(lam.sum()) > 1e-12) throw InputError("eigenvalues must sum to zero");
  return saupe_from_eigen(lam, rotation_zyz(euler[0], euler[1], euler[2]));
}

struct ConfiguredFragment {
  ReferenceChain reference;
  FragmentSetup setup;
};

ConfiguredFragment fragment_from_config(const Json& config) {
  const auto residues = get<std::vector<int>>(config, "residues");
  if (residues.size() != 2) throw InputError("residues must be [first, last]");
  ReferenceChain ref = load_reference(get<std::string>(config, "pdb"));
  FragmentSetup setup = make_fragment_by_number(ref.clean, residues[0], residues[1]);
  return {std::move(ref), std::move(setup)};
}

// ---- studies ------------------------------------------------------------

StudyOutput attenuation(const Json& config, int threads) {
  StudyOutput out;
  out.grid_name = "sigma_deg";
  const auto frag = fragment_from_config(config);
  const SaupeTensor s = fixed_tensor(config);
  const Eigen::Vector3d truth = eig_sorted(s.matrix()).values;
  const Eigen::VectorXd d = frag.setup.design.a * from_tensor(s);
  const auto grid = nonnegative(get_list(config, "sigma_deg"), "sigma_deg");
  const int draws = get_positive(config, "draws");
  const RandomStream root(get_seed(config), kAttenuationStream);

  for (double sd : grid) {
    std::vector<FitResult> fits(static_cast<std::size_t>(draws));
    parallel_for(fits.size(), threads, [&](std::size_t i) {
      const TorsionSet noisy = perturb_torsions(frag.setup.truth, deg_to_rad(sd), root.substream(i));
      fits[i] = ols_fit(frag.setup.model.design(noisy), d);
    });
    Accumulator norm[3], raw[3], rms2;
    for (const auto& f : fits) {
      for (int j = 0; j < 3; ++j) {
        norm[j].add(f.eigen.values(j) / truth(j));
        raw[j].add(f.eigen.values(j));
      }
      rms2.add(f.rms * f.rms);
    }
    for (int j = 0; j < 3; ++j) out.add(sd, stat("norm_lambda", j), norm[j]);
    for (int j = 0; j < 3; ++j) out.add(sd, stat("lambda", j), raw[j]);
    for (int j = 0; j < 3; ++j) out.add_value(sd, stat("lambda_true", j), truth(j));
    out.add(sd, "rms2", rms2);
  }
  return out;
}

StudyOutput sigma_recovery(const Json& config, int threads) {
  StudyOutput out;
  out.grid_name = "sigma_deg";
  const auto frag = fragment_from_config(config);
  const SaupeTensor s = fixed_tensor(config);
  const Eigen::VectorXd d = frag.setup.design.a * from_tensor(s);
  const auto grid = nonnegative(get_list(config, "sigma_deg"), "sigma_deg");
  const int draws = get_positive(config, "draws");
  const RandomStream root(get_seed(config), kSigmaStream);
  const auto m = static_cast<double>(frag.setup.design.m());
  const double q_truth = projected_sensitivity(sensitivity(frag.setup.model, frag.setup.truth),
                                               frag.setup.design, from_tensor(s));

  struct Draw {
    double sigma_hat = 0.0;
    double rms2 = 0.0;
  };
  for (double sd : grid) {
    std::vector<Draw> results(static_cast<std::size_t>(draws));
    parallel_for(results.size(), threads, [&](std::size_t i) {
      const TorsionSet noisy = perturb_torsions(frag.setup.truth, deg_to_rad(sd), root.substream(i));
      const DesignMatrix design = frag.setup.model.design(noisy);
      const FitResult fit = ols_fit(design, d);
      results[i].rms2 = fit.rms * fit.rms;
      results[i].sigma_hat =
          fit.rms == 0.0 ? 0.0
                         : rad_to_deg(estimate_sigma(fit, sensitivity(frag.setup.model, noisy), design));
    });
    Accumulator sigma_hat, rms2, scaled;
    for (const auto& r : results) {
      sigma_hat.add(r.sigma_hat);
      rms2.add(r.rms2);
      if (sd > 0.0) scaled.add(m * r.rms2 / std::pow(deg_to_rad(sd), 2));
    }
    out.add(sd, "sigma_hat_deg", sigma_hat);
    out.add(sd, "rms2", rms2);
    if (sd > 0.0) out.add(sd, "m_rms2_over_sigma2", scaled);
    out.add_value(sd, "q_truth", q_truth);
  }
  return out;
}

std::string histogram_csv(const std::vector<DebiasResult>& results, int bins) {
  std::string csv = "estimator,eigenvalue,bin_low,bin_high,count\n";
  for (int j = 0; j < 3; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : results) {
      lo = std::min({lo, r.lambda_ols(j), r.lambda_tilde(j)});
      hi = std::max({hi, r.lambda_ols(j), r.lambda_tilde(j)});
    }
    if (hi <= lo) hi = lo + 1e-12;
    const double width = (hi - lo) / bins;
    for (const char* which : {"ols", "tilde"}) {
      std::vector<int> counts(static_cast<std::size_t>(bins), 0);
      for (const auto& r : results) {
        const double x = std::string(which) == "ols" ? r.lambda_ols(j) : r.lambda_tilde(j);
        const int b = std::clamp(static_cast<int>((x - lo) / width), 0, bins - 1);
        ++counts[static_cast<std::size_t>(b)];
      }
      for (int b = 0; b < bins; ++b) {
        csv += std::string(which) + "," + kAxis[j] + "," + format_number(lo + b * width) + "," +
               format_number(lo + (b + 1) * width) + "," +
               std::to_string(counts[static_cast<std::size_t>(b)]) + "\n";
      }
    }
  }
  return csv;
}

StudyOutput debias_hist(const Json& config, int threads) {
  StudyOutput out;
  out.grid_name = "sigma_deg";
  const auto frag = fragment_from_config(config);
  const SaupeTensor s = fixed_tensor(config);
  const Eigen::Vector3d truth = eig_sorted(s.matrix()).values;
  const Eigen::VectorXd d = frag.setup.design.a * from_tensor(s);
  const double sd = get<double>(config, "sigma_deg");
  if (!(sd >= 0.0)) throw InputError("sigma_deg must be non-negative");
  const int templates = get_positive(config, "templates");
  const int n_sim = get_positive(config, "n_sim");
  const bool auto_sigma = get<bool>(config, "auto_sigma");
  const auto simex_grid = get_list(config, "simex_grid");
  const int bins = get_positive(config, "bins");
  const RandomStream root(get_seed(config), kDebiasStream);

  std::vector<DebiasResult> results(static_cast<std::size_t>(templates));
  std::vector<Eigen::Vector3d> simex(results.size(), Eigen::Vector3d::Zero());
  parallel_for(results.size(), threads, [&](std::size_t j) {
    const RandomStream stream = root.substream(j);
    const TorsionSet tmpl = perturb_torsions(frag.setup.truth, deg_to_rad(sd), stream.substream(0));
    results[j] = auto_sigma ? mc_debias_auto(frag.setup.model, tmpl, d, n_sim, stream.substream(1))
                            : mc_debias(frag.setup.model, tmpl, d, deg_to_rad(sd), n_sim,
                                        stream.substream(1));
    if (!simex_grid.empty()) {
      simex[j] = simex_extrapolate(frag.setup.model, tmpl, d, results[j].sigma_used, simex_grid,
                                   n_sim, stream.substream(1))
                     .extrapolated;
    }
  });

  Accumulator ols[3], tilde[3], sim[3], sx[3], sigma_used, skipped;
  double identity = 0.0;
  std::string samples = "template,sigma_used_deg";
  for (const char* base : {"lambda_ols", "lambda_sim_mean", "lambda_tilde"}) {
    for (int j = 0; j < 3; ++j) samples += "," + stat(base, j);
  }
  samples += "\n";
  for (std::size_t t = 0; t < results.size(); ++t) {
    const auto& r = results[t];
    samples += std::to_string(t) + "," + format_number(rad_to_deg(r.sigma_used));
    for (const auto* v : {&r.lambda_ols, &r.lambda_sim_mean, &r.lambda_tilde}) {
      for (int j = 0; j < 3; ++j) samples += "," + format_number((*v)(j));
    }
    samples += "\n";
    for (int j = 0; j < 3; ++j) {
      ols[j].add(r.lambda_ols(j));
      tilde[j].add(r.lambda_tilde(j));
      sim[j].add(r.lambda_sim_mean(j));
      if (!simex_grid.empty()) sx[j].add(simex[t](j));
    }
    identity = std::max(
        identity, (r.lambda_tilde - (2.0 * r.lambda_ols - r.lambda_sim_mean)).cwiseAbs().maxCoeff());
    sigma_used.add(rad_to_deg(r.sigma_used));
    skipped.add(r.n_skipped);
  }
  for (int j = 0; j < 3; ++j) {
    out.add_value(sd, stat("lambda_true", j), truth(j));
    out.add(sd, stat("lambda_ols", j), ols[j]);
    out.add(sd, stat("lambda_sim_mean", j), sim[j]);
    out.add(sd, stat("lambda_tilde", j), tilde[j]);
    if (!simex_grid.empty()) out.add(sd, stat("lambda_simex", j), sx[j]);
  }
  out.add(sd, "sigma_used_deg", sigma_used);
  out.add(sd, "n_skipped", skipped);
  out.add_value(sd, "tilde_identity_max_dev", identity);
  out.extra_files.emplace_back("samples", samples);
  out.extra_files.emplace_back("histogram", histogram_csv(results, bins));
  return out;
}

StudyOutput mfr_synthetic(const Json& config, int threads) {
  StudyOutput out;
  out.grid_name = "sigma_deg";
  const auto limit = get<std::size_t>(config, "residue_limit");
  const ReferenceChain ref = load_reference(get<std::string>(config, "pdb"));
  const auto windows = enumerate_fragments(ref.clean, get_positive(config, "window_planes"), limit);
  const int tensors = get_positive(config, "tensors");
  const auto grid = nonnegative(get_list(config, "sigma_deg"), "sigma_deg");
  const int n_sim = get_positive(config, "n_sim");
  const RandomStream root(get_seed(config), kMfrSyntheticStream);

  std::vector<RandomSaupe> truths;
  for (int r = 0; r < tensors; ++r) truths.push_back(random_saupe(root.substream(r).substream(0)));

  for (double sd : grid) {
    Accumulator err_ols, err_tilde, norm_ols[3], norm_tilde[3];
    for (int r = 0; r < tensors; ++r) {
      const auto& t = truths[static_cast<std::size_t>(r)];
      const MfrDraw draw = mfr_synthetic_draw(ref.clean, windows, t.tensor, deg_to_rad(sd), n_sim,
                                              root.substream(r).substream(1), threads);
      err_ols.add(fractional_error(draw.summary.lambda_ave_ols, t.eigenvalues));
      err_tilde.add(fractional_error(*draw.summary.lambda_ave_tilde, t.eigenvalues));
      for (int j = 0; j < 3; ++j) {
        norm_ols[j].add(draw.summary.lambda_ave_ols(j) / t.eigenvalues(j));
        norm_tilde[j].add((*draw.summary.lambda_ave_tilde)(j) / t.eigenvalues(j));
      }
    }
    out.add(sd, "frac_error_ols", err_ols);
    out.add(sd, "frac_error_tilde", err_tilde);
    out.add_value(sd, "frac_error_ratio", err_ols.mean() / err_tilde.mean());
    for (int j = 0; j < 3; ++j) out.add(sd, stat("norm_lambda_ave_ols", j), norm_ols[j]);
    for (int j = 0; j < 3; ++j) out.add(sd, stat("norm_lambda_ave_tilde", j), norm_tilde[j]);
    out.add_value(sd, "n_fragments", static_cast<double>(windows.size()));
  }
  return out;
}

StudyOutput additive_bias(const Json& config, int threads) {
  StudyOutput out;
  out.grid_name = "noise_fraction";
  const auto frag = fragment_from_config(config);
  const auto values = get_list(config, "eigenvalues");
  if (values.size() != 3) throw InputError("eigenvalues needs three entries");
  Eigen::Vector3d lam(values[0], values[1], values[2]);
  std::sort(lam.data(), lam.data() + 3);
  if (std::abs(lam.sum()) > 1e-12) throw InputError("eigenvalues must sum to zero");
  const auto grid = nonnegative(get_list(config, "noise_fraction"), "noise_fraction");
  const int draws = get_positive(config, "draws");
  const bool antithetic = get<bool>(config, "antithetic");
  if (antithetic && draws % 2 != 0) throw InputError("antithetic sampling needs an even draw count");
  const RandomStream root(get_seed(config), kAdditiveStream);
  const DesignMatrix& design = frag.setup.design;
  const double lz = lam(2);

  struct Draw {
    Eigen::Vector3d ols = Eigen::Vector3d::Zero();
    std::optional<Eigen::Vector3d> corrected;
    Eigen::Vector3d predicted = Eigen::Vector3d::Zero();
  };
  for (double frac : grid) {
    const double sigma_add = frac * lz;
    std::vector<Draw> results(static_cast<std::size_t>(draws));
    parallel_for(results.size(), threads, [&](std::size_t i) {
      // Draws 2p and 2p + 1 share an orientation and use opposite noise.
      const std::size_t p = antithetic ? i / 2 : i;
      const double sign = antithetic && i % 2 == 1 ? -1.0 : 1.0;
      const RandomStream stream = root.substream(p);
      const SaupeTensor s = saupe_from_eigen(lam, random_orthogonal(stream.substream(0)));
      const Eigen::VectorXd d = design.a * from_tensor(s);
      const Eigen::VectorXd noisy = d + sign * (add_coupling_noise(d, sigma_add, stream.substream(1)) - d);
      const FitResult fit = ols_fit(design, noisy);
      results[i].ols = fit.eigen.values;
      results[i].predicted = additive_bias_predict(s, design, sigma_add);
      try {
        results[i].corrected = additive_debias(fit, design, sigma_add);
      } catch (const NumericalError&) {
        results[i].corrected = std::nullopt;
      }
    });
    Accumulator norm[3], bias[3], corrected[3], predicted[3], skipped;
    for (const auto& r : results) {
      for (int j = 0; j < 3; ++j) {
        norm[j].add(r.ols(j) / lam(j));
        bias[j].add((r.ols(j) - lam(j)) / lz);
        predicted[j].add(r.predicted(j) / lz);
        if (r.corrected) corrected[j].add(((*r.corrected)(j) - lam(j)) / lz);
      }
      skipped.add(r.corrected ? 0.0 : 1.0);
    }
    for (int j = 0; j < 3; ++j) out.add(frac, stat("norm_lambda", j), norm[j]);
    for (int j = 0; j < 3; ++j) out.add(frac, stat("bias_rel", j), bias[j]);
    for (int j = 0; j < 3; ++j) out.add(frac, stat("corrected_bias_rel", j), corrected[j]);
    for (int j = 0; j < 3; ++j) out.add(frac, stat("predicted_bias_rel", j), predicted[j]);
    out.add(frac, "corrected_skipped", skipped);
    out.add_value(frac, "trace_inverse_normal", trace_inverse_normal(design));
  }
  return out;
}

// ---- real-data study ------------------------------------------------------

struct RealFragment {
  std::string label;
  int first_number = 0;
  int last_number = 0;
  FragmentModel model;
  TorsionSet torsions;
};

std::vector<RealFragment> generated_fragments(const BackboneStructure& crystal,
                                              const std::vector<BondId>& measured,
                                              int window_planes, std::size_t limit, int copies,
                                              double sigma, const RandomStream& rng) {
  std::vector<RealFragment> out;
  for (const auto& w : enumerate_fragments(crystal, window_planes, limit)) {
    const BackboneStructure sub = crystal.slice(w.first, w.count);
    const TorsionSet base = extract_torsions(sub);
    for (int c = 0; c < copies; ++c) {
      FragmentModel model(sub.sequence(), {kAllBondKinds[0], kAllBondKinds[1], kAllBondKinds[2]},
                          anchor_of(sub[0]), measured, w.first_number);
      TorsionSet noisy = perturb_torsions(base, sigma, rng.substream(static_cast<std::uint64_t>(w.id))
                                                           .substream(static_cast<std::uint64_t>(c)));
      out.push_back({std::to_string(w.first_number) + "-" + std::to_string(w.last_number) + "#" +
                         std::to_string(c),
                     w.first_number, w.last_number, std::move(model), std::move(noisy)});
    }
  }
  return out;
}

std::vector<RealFragment> directory_fragments(const std::string& dir,
                                              const std::vector<BondId>& measured) {
  if (dir.empty()) throw InputError("mfr-real directory mode needs fragments_dir");
  if (!fs::is_directory(dir)) throw InputError("fragments_dir '" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pdb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InputError("no .pdb files in '" + dir + "'");
  std::vector<RealFragment> out;
  for (const auto& f : files) {
    const BackboneStructure s = read_pdb_backbone(f.string());
    if (s.size() < 2) throw InputError("fragment '" + f.string() + "' has fewer than two residues");
    FragmentModel model(s.sequence(), {kAllBondKinds[0], kAllBondKinds[1], kAllBondKinds[2]},
                        anchor_of(s[0]), measured, s[0].number);
    out.push_back({f.filename().string(), s[0].number, s[s.size() - 1].number, std::move(model),
                   extract_torsions(s)});
  }
  return out;
}

DmaxTable dmax_from_config(const Json& config) {
  DmaxTable dmax = DmaxTable::standard();
  const Json& overrides = config.at("dmax_hz");
  if (!overrides.is_object()) throw InputError("dmax_hz must be an object of bond kind to Hz");
  for (const auto& [key, value] : overrides.items()) {
    if (!value.is_number()) throw InputError("dmax_hz['" + key + "'] must be a number");
    dmax.set_dmax(parse_bond_kind(key), value.get<double>());
  }
  return dmax;
}

CouplingUnits units_from_string(const std::string& units) {
  if (units == "hz") return CouplingUnits::Hz;
  if (units == "normalized") return CouplingUnits::Normalized;
  throw InputError("units must be 'hz' or 'normalized', got '" + units + "'");
}

StudyOutput mfr_real(const Json& config, int threads) {
  StudyOutput out;
  out.grid_name = "rms_threshold";
  const auto pdb = get<std::string>(config, "pdb");
  const auto rdc = get<std::string>(config, "rdc");
  if (pdb.empty() || rdc.empty()) {
    throw InputError("mfr-real needs both a PDB file (pdb) and an RDC table (rdc)");
  }
  const RdcDataset data = parse_rdc_table(read_text_file(rdc), dmax_from_config(config),
                                          units_from_string(get<std::string>(config, "units")));
  const auto limit = get<std::size_t>(config, "residue_limit");
  PdbOptions options;
  options.residue_limit = limit;
  const BackboneStructure crystal = read_pdb_backbone(pdb, options).with_amide_hydrogens();
  data.check_against(crystal);
  const std::vector<BondId> measured = data.ids();

  // Reference tensor: OLS on the crystal coordinates.
  BondVectorSet ref_bonds;
  for (const auto& b : bond_vectors(crystal, kAllBondKinds)) {
    if (data.find(b.id)) ref_bonds.push_back(b);
  }
  const DesignMatrix ref_design = build_design(ref_bonds);
  const FitResult reference = ols_fit(ref_design, data.couplings_for(ref_design));
  const Eigen::Vector3d truth = reference.eigen.values;

  const RandomStream root(get_seed(config), kMfrRealStream);
  const auto mode = get<std::string>(config, "mode");
  std::vector<RealFragment> fragments;
  if (mode == "generate") {
    fragments = generated_fragments(crystal, measured, get_positive(config, "window_planes"), limit,
                                    get_positive(config, "copies"),
                                    deg_to_rad(get<double>(config, "generator_sigma_deg")),
                                    root.substream(0));
  } else if (mode == "directory") {
    fragments = directory_fragments(get<std::string>(config, "fragments_dir"), measured);
  } else {
    throw InputError("mode must be 'generate' or 'directory', got '" + mode + "'");
  }

  std::optional<double> fixed_sigma;
  const Json& sigma_cfg = config.at("sigma_deg");
  if (sigma_cfg.is_number()) {
    fixed_sigma = deg_to_rad(sigma_cfg.get<double>());
    if (!(*fixed_sigma >= 0.0)) throw InputError("sigma_deg must be non-negative or \"auto\"");
  } else if (!(sigma_cfg.is_string() && sigma_cfg.get<std::string>() == "auto")) {
    throw InputError("sigma_deg must be a number or \"auto\"");
  }
  const int n_sim = get_positive(config, "n_sim");

  std::vector<FragmentEstimate> estimates(fragments.size());
  parallel_for(fragments.size(), threads, [&](std::size_t i) {
    const auto& f = fragments[i];
    const DesignMatrix design = f.model.design(f.torsions);
    const Eigen::VectorXd d = data.couplings_for(design);
    const RandomStream stream = root.substream(1).substream(i);
    FragmentEstimate& e = estimates[i];
    e.window = FragmentWindow{static_cast<int>(i), 0, 0, f.first_number, f.last_number};
    e.fit = ols_fit(design, d);
    e.rms = e.fit.rms;
    e.debias = fixed_sigma ? mc_debias(f.model, f.torsions, d, *fixed_sigma, n_sim, stream)
                           : mc_debias_auto(f.model, f.torsions, d, n_sim, stream);
  });

  std::string listing = "fragment,label,first_residue,last_residue,m,rms,sigma_used_deg";
  for (const char* base : {"lambda_ols", "lambda_tilde"}) {
    for (int j = 0; j < 3; ++j) listing += "," + stat(base, j);
  }
  listing += "\n";
  std::vector<double> rms_values;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const auto& e = estimates[i];
    rms_values.push_back(e.rms);
    listing += std::to_string(i) + "," + csv_field(fragments[i].label) + "," +
               std::to_string(e.window.first_number) + "," + std::to_string(e.window.last_number) +
               "," + std::to_string(e.fit.residual.size()) + "," + format_number(e.rms) + "," +
               format_number(rad_to_deg(e.debias->sigma_used));
    for (int j = 0; j < 3; ++j) listing += "," + format_number(e.fit.eigen.values(j));
    for (int j = 0; j < 3; ++j) listing += "," + format_number(e.debias->lambda_tilde(j));
    listing += "\n";
  }
  out.extra_files.emplace_back("fragments", listing);

  std::vector<double> thresholds = get_list(config, "thresholds");
  if (thresholds.empty()) {
    // Deciles of the fragment RMS values, starting below the minimum.
    std::vector<double> sorted = rms_values;
    std::sort(sorted.begin(), sorted.end());
    thresholds.push_back(0.0);
    for (int q = 1; q < 10; ++q) {
      thresholds.push_back(sorted[sorted.size() * static_cast<std::size_t>(q) / 10]);
    }
  }
  const bool above = get<bool>(config, "above");
  for (int j = 0; j < 3; ++j) out.add_value(0.0, stat("lambda_reference", j), truth(j));
  for (double th : thresholds) {
    std::vector<FragmentEstimate> selected;
    for (const auto& e : estimates) {
      if (above ? e.rms > th : e.rms < th) selected.push_back(e);
    }
    out.add_value(th, "n_selected", static_cast<double>(selected.size()));
    if (selected.empty()) continue;
    Accumulator ols[3], tilde[3];
    for (const auto& e : selected) {
      for (int j = 0; j < 3; ++j) {
        ols[j].add(e.fit.eigen.values(j) / truth(j));
        tilde[j].add(e.debias->lambda_tilde(j) / truth(j));
      }
    }
    for (int j = 0; j < 3; ++j) out.add(th, stat("norm_lambda_ave_ols", j), ols[j]);
    for (int j = 0; j < 3; ++j) out.add(th, stat("norm_lambda_ave_tilde", j), tilde[j]);
  }
  return out;
}

}  // namespace

std::string default_pdb_path() { return std::string(RDCBIAS_DATA_DIR) + "/1ubq.pdb"; }

ReferenceChain load_reference(const std::string& pdb_path, std::size_t residue_limit) {
  PdbOptions options;
  options.residue_limit = residue_limit;
  BackboneStructure crystal = read_pdb_backbone(pdb_path, options).with_amide_hydrogens();
  const ChainAnchor anchor = anchor_of(crystal[0]);
  BackboneStructure clean =
      build_backbone(crystal.sequence(), extract_torsions(crystal), &anchor, crystal[0].number);
  return {std::move(crystal), std::move(clean)};
}

FragmentSetup make_fragment(const BackboneStructure& chain, std::size_t first, std::size_t count,
                            std::span<const BondKind> kinds) {
  const BackboneStructure sub = chain.slice(first, count);
  FragmentModel model(sub.sequence(), std::vector<BondKind>(kinds.begin(), kinds.end()),
                      anchor_of(sub[0]), std::nullopt, sub[0].number);
  TorsionSet truth = extract_torsions(sub);
  DesignMatrix design = model.design(truth);
  return {std::move(model), std::move(truth), std::move(design)};
}

FragmentSetup make_fragment_by_number(const BackboneStructure& chain, int first_number,
                                      int last_number, std::span<const BondKind> kinds) {
  if (last_number <= first_number) throw InputError("residue range must hold at least two residues");
  for (std::size_t i = 0; i < chain.size(); ++i) {
    if (chain[i].number != first_number) continue;
    const auto count = static_cast<std::size_t>(last_number - first_number + 1);
    if (i + count > chain.size() || chain[i + count - 1].number != last_number) {
      throw InputError("residues " + std::to_string(first_number) + "-" +
                       std::to_string(last_number) + " are not a contiguous run of the chain");
    }
    return make_fragment(chain, i, count, kinds);
  }
  throw InputError("residue " + std::to_string(first_number) + " not found");
}

Mat3 rotation_zyz(double a_deg, double b_deg, double c_deg) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(deg_to_rad(a_deg), Vec3::UnitZ()) * AngleAxisd(deg_to_rad(b_deg), Vec3::UnitY()) *
          AngleAxisd(deg_to_rad(c_deg), Vec3::UnitZ()))
      .toRotationMatrix();
}

void Accumulator::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / n_;
  m2_ += delta * (x - mean_);
}

double Accumulator::mean() const { return mean_; }

double Accumulator::stderr_of_mean() const {
  if (n_ < 2) return 0.0;
  return std::sqrt(m2_ / (n_ - 1) / n_);
}

void StudyOutput::add(double grid, const std::string& statistic, const Accumulator& acc) {
  rows.push_back({grid, statistic, acc.mean(), acc.stderr_of_mean(), acc.count()});
}

void StudyOutput::add_value(double grid, const std::string& statistic, double value) {
  rows.push_back({grid, statistic, value, 0.0, 1});
}

const StudyRow& StudyOutput::row(double grid, const std::string& statistic) const {
  for (const auto& r : rows) {
    if (r.grid_value == grid && r.statistic == statistic) return r;
  }
  throw InputError("no row " + statistic + " at " + format_number(grid));
}

std::vector<std::string> experiment_names() {
  return {"attenuation", "sigma-recovery", "debias-hist", "mfr-synthetic", "additive-bias", "mfr-real"};
}

Json resolve_experiment_config(const std::string& name, const Json& overrides) {
  Json config = study_defaults(name);
  if (overrides.is_null()) return config;
  if (!overrides.is_object()) throw InputError("experiment config must be a JSON object");
  for (const auto& [key, value] : overrides.items()) {
    if (!config.contains(key)) throw InputError("unknown config key '" + key + "' for " + name);
    config[key] = value;
  }
  return config;
}

StudyOutput run_experiment(const std::string& name, const Json& overrides, int threads) {
  const Json config = resolve_experiment_config(name, overrides);
  StudyOutput out;
  if (name == "attenuation") {
    out = attenuation(config, threads);
  } else if (name == "sigma-recovery") {
    out = sigma_recovery(config, threads);
  } else if (name == "debias-hist") {
    out = debias_hist(config, threads);
  } else if (name == "mfr-synthetic") {
    out = mfr_synthetic(config, threads);
  } else if (name == "additive-bias") {
    out = additive_bias(config, threads);
  } else {
    out = mfr_real(config, threads);
  }
  out.name = name;
  out.config = config;
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\r\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string study_csv(const StudyOutput& study) {
  std::string csv = "experiment,grid,grid_value,statistic,mean,std_error,count\n";
  for (const auto& r : study.rows) {
    csv += csv_field(study.name) + "," + csv_field(study.grid_name) + "," +
           format_number(r.grid_value) + "," + csv_field(r.statistic) + "," + format_number(r.mean) +
           "," + format_number(r.std_error) + "," + std::to_string(r.count) + "\n";
  }
  return csv;
}

std::vector<std::string> write_study(const StudyOutput& study, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir + "': " + ec.message());
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back(study.name + ".csv", study_csv(study));
  for (const auto& [suffix, contents] : study.extra_files) {
    files.emplace_back(study.name + "_" + suffix + ".csv", contents);
  }
  Json sidecar;
  sidecar["experiment"] = study.name;
  sidecar["seed"] = study.config.at("seed");
  sidecar["config"] = study.config;
  sidecar["grid"] = study.grid_name;
  sidecar["rows"] = study.rows.size();
  Json names = Json::array();
  for (const auto& f : files) names.push_back(f.first);
  sidecar["files"] = names;
  files.emplace_back(study.name + ".json", sidecar.dump(2) + "\n");

  std::vector<std::string> written;
  for (const auto& [name, contents] : files) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << contents;
    written.push_back(path.string());
  }
  return written;
}

MfrDraw mfr_synthetic_draw(const BackboneStructure& clean, std::span<const FragmentWindow> windows,
                           const SaupeTensor& s, double sigma, int n_sim, const RandomStream& rng,
                           int threads) {
  MfrDraw out;
  out.estimates.resize(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) {
    const FragmentWindow& w = windows[i];
    const FragmentSetup setup = make_fragment(clean, w.first, w.count);
    const Eigen::VectorXd d = setup.design.a * from_tensor(s);
    const RandomStream stream = rng.substream(static_cast<std::uint64_t>(w.id));
    const TorsionSet tmpl = perturb_torsions(setup.truth, sigma, stream.substream(0));
    FragmentEstimate& e = out.estimates[i];
    e.window = w;
    e.fit = ols_fit(setup.model.design(tmpl), d);
    e.rms = e.fit.rms;
    e.debias = mc_debias(setup.model, tmpl, d, sigma, n_sim, stream.substream(1));
  });
  out.summary = average_eigenvalues(out.estimates, true);
  return out;
}

}  // namespace rdcbias
