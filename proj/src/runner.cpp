#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Core>

#include "csv.hpp"
#include "plot.hpp"
#include "presets.hpp"

#ifndef GEOLEARN_VERSION
#define GEOLEARN_VERSION "0.0.0"
#endif

namespace geolearn::cli {

namespace {

using json = nlohmann::json;

std::string join_header(const std::string& prefix, Index k) { return prefix + std::to_string(k); }

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

/// Everything an experiment writes goes through here so that formats,
/// output names and checks are handled in one place.
class Context {
 public:
  Context(const ExperimentConfig& cfg, RunOutcome& out) : cfg(cfg), out_(out) {}

  const ExperimentConfig& cfg;

  void table(const std::string& name, const CsvTable& t, const std::optional<PlotSpec>& plot = {}) {
    if (cfg.output.csv) {
      t.save(out_.dir / name);
      out_.outputs.push_back(name);
    }
    if (plot && cfg.output.svg) {
      const std::string svg = std::filesystem::path(name).replace_extension(".svg").string();
      atomic_write(out_.dir / svg, render_svg(parse_csv(t.str()), *plot));
      out_.outputs.push_back(svg);
    }
  }

  json& summary() { return out_.summary; }

  void check(const std::string& name, double value) {
    const auto it = cfg.checks.find(name);
    if (it == cfg.checks.end()) return;
    CheckResult r;
    r.name = name;
    r.value = value;
    r.threshold = it->second;
    r.lower_bound = name.size() > 4 && name.compare(name.size() - 4, 4, "_min") == 0;
    r.passed = std::isfinite(value) && (r.lower_bound ? value >= r.threshold : value <= r.threshold);
    out_.checks.push_back(r);
  }

 private:
  RunOutcome& out_;
};

PlotSpec line_spec(std::string x, std::vector<std::string> y, std::string title, bool log_y = false) {
  PlotSpec p;
  p.kind = PlotKind::Line;
  p.x_label = x;
  p.x = std::move(x);
  p.y_label = y.size() == 1 ? y.front() : std::string();
  p.y = std::move(y);
  p.title = std::move(title);
  p.log_y = log_y;
  return p;
}

Ensemble sample_initial(const InitialSpec& init, Index dim, Index members, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x1a2b3c4d5e6f7788ull));
  Ensemble e;
  e.states.reserve(static_cast<std::size_t>(members));
  for (Index m = 0; m < members; ++m) {
    Vector q(dim);
    switch (init.kind) {
      case InitialKind::Point: q = init.point; break;
      case InitialKind::Uniform:
        for (Index k = 0; k < dim; ++k) q[k] = init.lo[k] + (init.hi[k] - init.lo[k]) * uniform01(rng);
        break;
      case InitialKind::Gaussian: q = init.mean + std::sqrt(init.variance) * standard_normal(rng, dim); break;
    }
    e.states.push_back(std::move(q));
  }
  return e;
}

GridDensity initial_density(const FokkerPlanckSolver& solver, const InitialSpec& init) {
  const GridSpec& g = solver.grid();
  if (init.kind == InitialKind::Uniform) {
    bool whole = true;
    for (int a = 0; a < g.dims; ++a) whole = whole && init.lo[a] <= g.lo[a] && init.hi[a] >= g.hi[a];
    if (whole) return solver.uniform();
    return solver.density([&](const Vector& q) {
      for (int a = 0; a < g.dims; ++a)
        if (q[a] < init.lo[a] || q[a] > init.hi[a]) return 0.0;
      return 1.0;
    });
  }
  return solver.density([&](const Vector& q) { return std::exp(-(q - init.mean).squaredNorm() / (2.0 * init.variance)); });
}

std::vector<std::string> coordinate_header(const GridSpec& g) {
  return g.dims == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
}

void append_density_rows(CsvTable& t, double time, const GridDensity& p) {
  for (Index c = 0; c < p.size(); ++c) {
    const Vector x = p.grid.center(c);
    std::vector<std::string> row{format_number(time)};
    for (Index a = 0; a < x.size(); ++a) row.push_back(format_number(x[a]));
    row.push_back(format_number(p[c]));
    t.add(std::move(row));
  }
}

/// Explicit-bound time step, shrunk so that an integer number of steps hits t_end.
std::pair<double, std::int64_t> time_grid(double t_end, double dt) {
  const auto steps = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(t_end / dt - 1e-12)));
  return {t_end / static_cast<double>(steps), steps};
}

// ---------------------------------------------------------------------------

void run_langevin(Context& c) {
  const auto& l = c.cfg.langevin;
  const LossLandscape& land = *c.cfg.land;
  const NoiseModel& noise = *c.cfg.noise;
  const Index dim = dimension(land);
  const Ensemble init = sample_initial(l.initial, dim, l.sim.ensemble_size, c.cfg.seed);
  const TrajectoryRecord rec = run_ensemble(land, noise, l.sim, init);
  const auto marks = snapshot_steps(l.sim.steps, l.sim.snapshot_every);

  std::vector<std::string> header{"time", "member"};
  for (Index k = 0; k < dim; ++k) header.push_back(join_header("q_", k));
  CsvTable traj(header);
  const auto written = static_cast<std::size_t>(std::min<std::int64_t>(l.write_members, l.sim.ensemble_size));
  json snaps = json::array();
  for (const auto& snap : rec.snapshots) {
    for (std::size_t m = 0; m < written; ++m) {
      std::vector<std::string> row{format_number(snap.time), format_number(m)};
      for (Index k = 0; k < dim; ++k) row.push_back(format_number(snap.states[m][k]));
      traj.add(std::move(row));
    }
    json means = json::array(), vars = json::array();
    for (Index k = 0; k < dim; ++k) {
      const auto xs = coordinate_samples(snap, k);
      const auto mo = moments(xs);
      means.push_back(mo.mean);
      vars.push_back(mo.variance);
    }
    snaps.push_back({{"time", snap.time}, {"mean", means}, {"variance", vars}});
  }
  c.table("trajectory.csv", traj);

  auto& s = c.summary();
  s["snapshots"] = snaps;
  s["failures"] = rec.failures.size();
  s["warnings"] = rec.warnings;
  c.check("failures_max", static_cast<double>(rec.failures.size()));

  if (marks.size() >= 2 && marks[1] == 1) {
    const LangevinKernel kernel(land, noise, l.sim);
    const Matrix expected = kernel.update_covariance(init.states.front());
    const auto n = rec.snapshots[0].states.size();
    Vector mean = Vector::Zero(dim);
    for (std::size_t m = 0; m < n; ++m) mean += rec.snapshots[1].states[m] - rec.snapshots[0].states[m];
    mean /= static_cast<double>(n);
    Matrix cov = Matrix::Zero(dim, dim);
    for (std::size_t m = 0; m < n; ++m) {
      const Vector d = rec.snapshots[1].states[m] - rec.snapshots[0].states[m] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(n - 1);
    const double rel = (cov - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff();
    auto rows = [dim](const Matrix& m) {
      json out = json::array();
      for (Index i = 0; i < dim; ++i) out.push_back(to_json(m.row(i).transpose()));
      return out;
    };
    s["update_covariance"] = {{"empirical", rows(cov)}, {"expected", rows(expected)}, {"max_rel_error", rel}};
    c.check("update_covariance_rel_max", rel);
  } else {
    c.check("update_covariance_rel_max", std::nan(""));
  }
}

void run_fokker_planck(Context& c) {
  const auto& f = c.cfg.fokker_planck;
  const LossLandscape& land = *c.cfg.land;
  const NoiseModel& noise = *c.cfg.noise;
  const FokkerPlanckSolver solver(f.grid, land, noise, c.cfg.metric, f.gamma, f.options);
  const auto [dt, steps] = time_grid(f.t_end, f.dt.value_or(solver.stability_bound()));
  const std::int64_t every = std::max<std::int64_t>(1, steps / f.snapshots);

  GridDensity p = initial_density(solver, f.initial);
  const double s0 = shannon_entropy(p);
  double rate = solver.entropy_rate(p);
  double production = 0.0;
  std::size_t clamps = 0;

  auto header = coordinate_header(f.grid);
  header.insert(header.begin(), "time");
  header.push_back("p");
  CsvTable dens(header);
  CsvTable ent({"time", "entropy", "delta_s", "production"});
  auto record = [&](std::int64_t step) {
    const double t = static_cast<double>(step) * dt;
    append_density_rows(dens, t, p);
    const double s = shannon_entropy(p);
    ent.add({format_number(t), format_number(s), format_number(s - s0), format_number(production)});
  };
  record(0);
  for (std::int64_t k = 1; k <= steps; ++k) {
    StepOutcome o = solver.advance(p, dt);
    clamps += o.clamped ? 1 : 0;
    p = std::move(o.density);
    const double next = solver.entropy_rate(p);
    production += 0.5 * dt * (rate + next);
    rate = next;
    if (k % every == 0 || k == steps) record(k);
  }
  c.table("density.csv", dens);
  c.table("entropy.csv", ent, line_spec("time", {"delta_s", "production"}, "Entropy change and production"));

  const double ds = shannon_entropy(p) - s0;
  const double mass_error = std::abs(total_mass(p) - 1.0);
  auto& s = c.summary();
  s["dt"] = dt;
  s["steps"] = steps;
  s["stability_bound"] = solver.stability_bound();
  s["mass_error"] = mass_error;
  s["entropy_change"] = ds;
  s["entropy_production"] = production;
  s["clamp_events"] = clamps;
  const double rel = std::abs(production - ds) / std::max(std::abs(ds), 1e-300);
  s["entropy_rel_error"] = rel;
  double l1 = std::nan("");
  try {
    l1 = l1_distance(p, stationary_boltzmann(land, f.gamma, f.grid, solver.weights()));
    s["l1_to_boltzmann"] = l1;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::OverflowGuard) throw;
    s["l1_to_boltzmann"] = nullptr;
  }
  c.check("l1_max", l1);
  c.check("mass_error_max", mass_error);
  c.check("entropy_rel_max", rel);

  if (f.probe) {
    GridSpec pg = f.grid;
    pg.n = {f.probe->cells, f.grid.dims == 2 ? f.probe->cells : 1};
    pg.validate();
    const FokkerPlanckSolver ps(pg, f.probe->land, noise, c.cfg.metric, f.gamma, f.options);
    const auto [pdt, psteps] = time_grid(f.probe->t_end, ps.stability_bound());
    GridDensity q = stationary_boltzmann(f.probe->land, f.gamma, pg, ps.weights());
    const double q0 = shannon_entropy(q);
    for (std::int64_t k = 0; k < psteps; ++k) q = ps.step(q, pdt);
    const double dq = shannon_entropy(q) - q0;
    s["stationary_probe"] = {{"cells", f.probe->cells}, {"dt", pdt}, {"steps", psteps}, {"delta_s", dq}};
    c.check("stationary_delta_s_max", std::abs(dq));
  }
}

void run_langevin_vs_fp(Context& c) {
  const auto& v = c.cfg.langevin_vs_fp;
  const LossLandscape& land = *c.cfg.land;
  const NoiseModel& noise = *c.cfg.noise;
  const FokkerPlanckSolver solver(v.grid, land, noise, c.cfg.metric, v.gamma);
  const auto [dt, steps] = time_grid(v.t_end, v.fp_dt.value_or(solver.stability_bound()));
  GridDensity p = initial_density(solver, v.initial);
  for (std::int64_t k = 0; k < steps; ++k) p = solver.step(p, dt);

  SimConfig sim;
  sim.gamma = v.gamma;
  sim.dt = v.langevin_dt;
  sim.steps = std::llround(v.t_end / v.langevin_dt);
  sim.ensemble_size = v.ensemble_size;
  sim.seed = c.cfg.seed;
  sim.metric = c.cfg.metric;
  sim.threads = v.threads;
  const Ensemble init = sample_initial(v.initial, 1, v.ensemble_size, c.cfg.seed);
  const TrajectoryRecord rec = run_ensemble(land, noise, sim, init);
  rec.throw_if_failed();
  const Ensemble& last = rec.snapshots.back();
  const double ks = ks_distance(coordinate_samples(last), grid_cdf(p));
  const EmpiricalDensity emp = empirical_density(last, v.grid, solver.weights());

  CsvTable t({"x", "fp_density", "langevin_density"});
  for (Index i = 0; i < p.size(); ++i)
    t.add({format_number(v.grid.coordinate(0, i)), format_number(p[i]), format_number(emp.density[i])});
  c.table("densities.csv", t, line_spec("x", {"fp_density", "langevin_density"}, "Langevin vs Fokker-Planck"));

  auto& s = c.summary();
  s["ks_distance"] = ks;
  s["fp_dt"] = dt;
  s["fp_steps"] = steps;
  s["langevin_steps"] = sim.steps;
  s["outside_grid"] = emp.overflow;
  s["time"] = last.time;
  c.check("ks_max", ks);
}

/// exp(-beta H)/Z on a fine grid covering the samples, by midpoint quadrature.
GridDensity canonical_density(const LossLandscape& land, double beta, const std::vector<double>& xs) {
  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  const double pad = 0.5 * (*mx - *mn) + 1.0;
  const GridSpec g = GridSpec::line(*mn - pad, *mx + pad, 20000);
  std::vector<double> u(static_cast<std::size_t>(g.cells()));
  for (Index i = 0; i < g.cells(); ++i) u[static_cast<std::size_t>(i)] = base_potential(land, g.center(i));
  const double umin = *std::min_element(u.begin(), u.end());
  GridDensity p{g, std::vector<double>(u.size()), {}};
  for (std::size_t i = 0; i < u.size(); ++i) p.values[i] = std::exp(-beta * (u[i] - umin));
  return normalized(std::move(p));
}

void run_evolution(Context& c) {
  const auto& e = c.cfg.evolution;
  const LossLandscape& land = *c.cfg.land;
  const Index dim = dimension(land);
  Rng rng(splitmix64(c.cfg.seed));
  const ChainRecord rec = evolve_chain(e.q0, land, e.jump, e.rule, static_cast<std::size_t>(e.steps), rng, e.burn_in);

  std::vector<std::string> header{"step"};
  for (Index k = 0; k < dim; ++k) header.push_back(join_header("q_", k));
  header.push_back("accepted");
  CsvTable chain(header);
  for (std::size_t s = 0; s < rec.steps(); s += static_cast<std::size_t>(e.write_every)) {
    std::vector<std::string> row{format_number(s + 1)};
    for (Index k = 0; k < dim; ++k) row.push_back(format_number(rec.sample(s, k)));
    row.push_back(rec.accepted[s] ? "1" : "0");
    chain.add(std::move(row));
  }
  c.table("chain.csv", chain);

  auto& s = c.summary();
  s["acceptance_rate"] = rec.acceptance_rate();
  s["burn_in"] = rec.burn_in;
  s["samples_after_burn_in"] = rec.steps() - rec.burn_in;
  json means = json::array(), vars = json::array();
  for (Index k = 0; k < dim; ++k) {
    const auto mo = moments(rec.coordinate(k));
    means.push_back(mo.mean);
    vars.push_back(mo.variance);
  }
  s["mean"] = means;
  s["variance"] = vars;

  if (dim == 1 && e.rule.beta > 0.0) {
    const auto xs = rec.coordinate(0);
    const GridDensity target = canonical_density(land, e.rule.beta, xs);
    const double target_var = axis_moments(target).second;
    const double var_rel = std::abs(moments(xs).variance - target_var) / target_var;
    const double ks = ks_distance(xs, grid_cdf(target));
    s["target_variance"] = target_var;
    s["variance_rel_error"] = var_rel;
    s["ks_distance"] = ks;
    c.check("variance_rel_max", var_rel);
    c.check("ks_max", ks);
  } else {
    c.check("variance_rel_max", std::nan(""));
    c.check("ks_max", std::nan(""));
  }

  if (e.balance) {
    Rng br(splitmix64(c.cfg.seed ^ 0xba1a4ce5ba1a4ce5ull));
    CsvTable bal({"landscape", "rule", "pairs", "max_abs_deviation"});
    double worst = 0.0;
    for (std::size_t li = 0; li < e.balance->landscapes.size(); ++li) {
      const LossLandscape& bl = e.balance->landscapes[li];
      const Index bd = dimension(bl);
      double dev[2] = {0.0, 0.0};
      for (std::int64_t i = 0; i < e.balance->pairs; ++i) {
        const Vector q = e.balance->spread * standard_normal(br, bd);
        const Vector qp = e.balance->spread * standard_normal(br, bd);
        for (int r = 0; r < 2; ++r) {
          const AcceptanceRule rule{r == 0 ? AcceptanceKind::Sigmoid : AcceptanceKind::Metropolis, e.rule.beta};
          const double d = std::abs(detailed_balance_ratio(q, qp, bl, rule) - 1.0);
          dev[r] = std::isfinite(d) ? std::max(dev[r], d) : HUGE_VAL;
        }
      }
      for (int r = 0; r < 2; ++r) {
        bal.add({format_number(li), r == 0 ? "sigmoid" : "metropolis", format_number(e.balance->pairs), format_number(dev[r])});
        worst = std::max(worst, dev[r]);
      }
    }
    c.table("balance.csv", bal);
    s["detailed_balance_max_deviation"] = worst;
    c.check("balance_max", worst);
  }
}

void run_lande(Context& c) {
  const auto& l = c.cfg.lande;
  const LandeComparison cmp = lande_vs_chain(l.q0, *c.cfg.land, l.jump, l.rule, l.lande);
  const Index dim = l.q0.size();
  std::vector<std::string> header{"step"};
  for (Index k = 0; k < dim; ++k) header.push_back(join_header("ode_mean_", k));
  for (Index k = 0; k < dim; ++k) header.push_back(join_header("chain_mean_", k));
  for (Index k = 0; k < dim; ++k) header.push_back(join_header("standard_error_", k));
  header.push_back("max_z");
  CsvTable t(header);
  for (const auto& snap : cmp.snapshots) {
    std::vector<std::string> row{format_number(snap.step)};
    for (Index k = 0; k < dim; ++k) row.push_back(format_number(snap.ode_mean[k]));
    for (Index k = 0; k < dim; ++k) row.push_back(format_number(snap.chain_mean[k]));
    for (Index k = 0; k < dim; ++k) row.push_back(format_number(snap.standard_error[k]));
    row.push_back(format_number(snap.max_z));
    t.add(std::move(row));
  }
  c.table("lande.csv", t, line_spec("step", {"ode_mean_0", "chain_mean_0"}, "Lande ODE vs chain ensemble mean"));
  auto& s = c.summary();
  s["max_z"] = cmp.max_z;
  s["max_abs_deviation"] = cmp.max_abs_deviation;
  s["expansion_parameter"] = cmp.expansion_parameter;
  s["warnings"] = cmp.warnings;
  c.check("max_z_max", cmp.max_z);
  c.check("expansion_max", cmp.expansion_parameter);
}

void run_quantum(Context& c) {
  const auto& q = c.cfg.quantum;
  const PlanckMass pm = planck_mass_from(q.gamma, q.beta);
  const MetricField flat = flat_metric(q.grid);
  const bool harmonic = q.potential == PotentialKind::Harmonic;
  ScalarField v = harmonic ? harmonic_potential(q.grid, pm.mass, q.omega, q.center)
                           : effective_potential(*c.cfg.land, flat, q.gamma, q.beta, q.f);
  GroundStateOptions gopt;
  gopt.boundary = q.boundary;
  const GroundState gs = ground_state(v, pm.hbar, pm.mass, gopt);
  const Madelung mad = madelung_decompose(gs.psi, pm.hbar);
  const PotentialField qp = quantum_potential(mad.p, flat, q.gamma, q.beta);

  const double pmax = *std::max_element(mad.p.values.begin(), mad.p.values.end());
  std::vector<double> vq;
  CsvTable field({"x", "V", "psi_re", "psi_im", "density", "Q", "V_plus_Q"});
  for (Index i = 0; i < q.grid.n[0]; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double sum = v.values[k] + qp.field.values[k];
    if (mad.p.values[k] >= 1e-6 * pmax) vq.push_back(sum);
    field.add({format_number(q.grid.coordinate(0, i)), format_number(v.values[k]), format_number(gs.psi.psi[k].real()),
               format_number(gs.psi.psi[k].imag()), format_number(mad.p.values[k]), format_number(qp.field.values[k]),
               format_number(sum)});
  }
  c.table("ground_state.csv", field, line_spec("x", {"V", "V_plus_Q"}, "Ground state potentials"));
  const auto vqm = moments(vq);
  const double vq_rel = std::sqrt(vqm.variance) / std::abs(vqm.mean);

  auto& s = c.summary();
  s["hbar"] = pm.hbar;
  s["mass"] = pm.mass;
  s["ground_energy"] = gs.energy;
  s["iterations"] = gs.iterations;
  s["v_plus_q_mean"] = vqm.mean;
  s["v_plus_q_sd"] = std::sqrt(vqm.variance);
  s["v_plus_q_rel"] = vq_rel;
  s["clamped_cells"] = qp.clamped;
  c.check("vq_rel_max", vq_rel);
  if (!harmonic) {
    for (const char* name : {"energy_rel_max", "omega_rel_max", "norm_drift_max", "continuity_l1_max"}) c.check(name, std::nan(""));
    return;
  }
  const double expected = 0.5 * pm.hbar * q.omega;
  const double e_rel = std::abs(gs.energy - expected) / expected;
  s["expected_energy"] = expected;
  s["energy_abs_error"] = std::abs(gs.energy - expected);
  s["energy_rel_error"] = e_rel;
  c.check("energy_rel_max", e_rel);

  const double period = 2.0 * std::numbers::pi / q.omega;
  const auto steps = static_cast<std::int64_t>(std::llround(q.periods * period / q.dt));
  const SplitStepSchrodinger stepper(v, pm.hbar, pm.mass, q.dt, q.boundary);
  WaveField psi = coherent_state(q.grid, pm.hbar, pm.mass, q.omega, q.coherent_q0, 0.0);
  std::vector<double> ts, xs;
  CsvTable coh({"time", "mean_q", "norm"});
  Madelung m0 = madelung_decompose(psi, pm.hbar);
  GridDensity pc = m0.p;
  ScalarField phi = m0.phi;
  double continuity_l1 = std::nan("");
  double drift = 0.0;
  for (std::int64_t k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * q.dt;
    ts.push_back(t);
    xs.push_back(position_mean(psi));
    drift = std::max(drift, std::abs(psi.norm() - 1.0));
    coh.add({format_number(t), format_number(xs.back()), format_number(psi.norm())});
    if (k == steps) break;
    stepper.step(psi);
    if (q.madelung_check && t < period) {
      const Madelung md = madelung_decompose(psi, pm.hbar);
      pc = continuity_step(pc, phi, md.phi, q.gamma, q.dt);
      phi = md.phi;
      if (t + q.dt >= period) continuity_l1 = l1_distance(pc, md.p);
    }
  }
  c.table("coherent.csv", coh, line_spec("time", {"mean_q"}, "Coherent state position mean"));
  const double omega = crossing_frequency(ts, xs);
  const double w_rel = std::abs(omega - q.omega) / q.omega;
  s["omega_estimate"] = omega;
  s["omega_rel_error"] = w_rel;
  s["norm_drift"] = drift;
  s["coherent_steps"] = steps;
  if (q.madelung_check) s["continuity_l1"] = continuity_l1;
  c.check("omega_rel_max", w_rel);
  c.check("norm_drift_max", drift);
  c.check("continuity_l1_max", continuity_l1);
}

void run_optimize(Context& c) {
  const auto& o = c.cfg.optimize;
  const LossLandscape& land = *c.cfg.land;
  const NoiseModel& noise = *c.cfg.noise;
  const Index dim = dimension(land);
  const OptRun base{land, noise, PowerLaw{0.0}, o.gammas.front(), o.steps,
                    c.cfg.seed, o.record_every, o.q0, o.estimator, o.target_grad_norm};

  CsvTable runs({"run", "metric", "gamma", "status", "steps_to_target", "final_loss", "final_grad_norm"});
  json best = json::array();
  std::size_t index = 0;
  for (const MetricSpec& spec : o.metrics) {
    std::optional<std::int64_t> best_steps;
    double best_gamma = 0.0;
    for (double gamma : o.gammas) {
      OptRun run = base;
      run.spec = spec;
      run.gamma = gamma;
      const std::string name = "convergence_" + std::to_string(index) + ".csv";
      std::string status = "ok", target, loss = "nan", gnorm = "nan";
      try {
        const ConvergenceRecord rec = run_benchmark(run);
        std::vector<std::string> header{"step", "loss", "grad_norm"};
        for (Index k = 0; k < dim; ++k) header.push_back(join_header("lambda_g_", k));
        CsvTable t(header);
        for (const auto& r : rec.rows) {
          std::vector<std::string> row{format_number(r.step), format_number(r.loss), format_number(r.grad_norm)};
          for (Index k = 0; k < dim; ++k) row.push_back(format_number(r.metric_eigenvalues[k]));
          t.add(std::move(row));
        }
        auto plot = line_spec("step", {"loss"}, describe(spec) + ", gamma " + format_number(gamma), true);
        plot.y_label = "U(q)";
        c.table(name, t, plot);
        if (rec.steps_to_target) {
          target = format_number(*rec.steps_to_target);
          if (!best_steps || *rec.steps_to_target < *best_steps) {
            best_steps = rec.steps_to_target;
            best_gamma = gamma;
          }
        }
        loss = format_number(rec.rows.back().loss);
        gnorm = format_number(rec.rows.back().grad_norm);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteState) throw;
        status = "diverged";
      }
      runs.add({format_number(index), describe(spec), format_number(gamma), status, target, loss, gnorm});
      ++index;
    }
    json entry{{"metric", describe(spec)}, {"best_gamma", nullptr}, {"steps_to_target", nullptr}};
    if (best_steps) entry["best_gamma"] = best_gamma, entry["steps_to_target"] = *best_steps;
    best.push_back(entry);
  }
  c.table("runs.csv", runs);
  c.summary()["best_fixed_gamma"] = best;

  if (!o.reductions) return;
  const auto& red = *o.reductions;
  auto& s = c.summary()["reductions"];

  // PowerLaw(0) against a hand-written SGD loop drawing the same noise.
  OptRun flat = base;
  flat.spec = PowerLaw{0.0};
  flat.gamma = red.gamma;
  flat.steps = red.steps;
  flat.record_every = 1;
  flat.target_grad_norm = 0.0;
  const ConvergenceRecord rec = run_benchmark(flat);
  Rng rng(splitmix64(c.cfg.seed));
  Vector q = o.q0;
  std::size_t mismatches = 0;
  for (std::int64_t k = 1; k <= red.steps; ++k) {
    const Vector g = gradient(land, q) + sample_noise_gradient(noise, q, rng);
    q = q - red.gamma * g;
    if (potential(land, q) != rec.rows[static_cast<std::size_t>(k)].loss) ++mismatches;
  }
  if (q != rec.final_state) ++mismatches;
  s["flat_mismatches"] = mismatches;
  c.check("flat_mismatch_max", static_cast<double>(mismatches));

  // Diagonal PowerLaw(1/2) against grad / sqrt(kappa_hat) after warmup.
  KappaEstimator est = KappaEstimator::make(dim, EstimatorMode::Diagonal, o.estimator.decay, o.estimator.epsilon_floor);
  Rng sr(splitmix64(c.cfg.seed ^ 0x5a5a5a5a5a5a5a5aull));
  for (std::int64_t k = 0; k < est.warmup_steps(); ++k) est.update(gradient(land, o.q0) + sample_noise_gradient(noise, o.q0, sr));
  double worst = 0.0;
  for (std::int64_t k = 0; k < red.samples; ++k) {
    const Vector g = gradient(land, o.q0) + sample_noise_gradient(noise, o.q0, sr);
    est.update(g);
    const Vector got = opt_step(o.q0, g, est, PowerLaw{0.5}, red.gamma);
    Vector step(dim);
    for (Index i = 0; i < dim; ++i) step[i] = red.gamma * g[i] / std::sqrt(est.cov(i, i) + est.epsilon_floor);
    const double scale = std::max(step.cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (got - (o.q0 - step)).cwiseAbs().maxCoeff() / scale);
  }
  s["sqrt_max_rel_deviation"] = worst;
  c.check("sqrt_rel_max", worst);

  const ReparamResult rp = reparametrization_check(land, noise, red.transform, o.q0, PowerLaw{1.0}, red.gamma,
                                                   red.presamples, red.steps, c.cfg.seed);
  s["reparam_max_deviation"] = rp.max_deviation;
  s["reparam_steps"] = rp.steps;
  c.check("reparam_max", rp.max_deviation);
}

void run_phase_sweep(Context& c) {
  const auto& sw = c.cfg.sweep;
  CsvTable points({"epsilon", "zeta", "epsilon_zeta", "lambda_kappa", "lambda_g", "alpha_eff", "regime"});
  CsvTable bands({"pair", "epsilon", "zeta", "band_points", "band_lo", "band_hi", "band_decades", "alpha_low", "alpha_high"});
  json pairs = json::array();
  for (std::size_t i = 0; i < sw.pairs.size(); ++i) {
    const auto [e, z] = sw.pairs[i];
    const auto [lo, hi] = sw.lambda_range.value_or(std::pair{e * e / sw.limit_factor, sw.limit_factor / (z * z)});
    const auto lams = log_grid(lo, hi, sw.points);
    const double eps[] = {e}, zet[] = {z};
    const auto sweep = phase_sweep(eps, zet, lams);
    for (const auto& p : sweep)
      points.add({format_number(p.epsilon), format_number(p.zeta), format_number(p.epsilon * p.zeta), format_number(p.lambda_kappa),
                  format_number(p.lambda_g), format_number(p.alpha), std::string(to_string(p.regime))});
    const BandExtent band = band_extent(sweep, Regime::Efficient);
    const double a_lo = sweep.front().alpha, a_hi = sweep.back().alpha;
    bands.add({format_number(i), format_number(e), format_number(z), format_number(band.points), format_number(band.lo),
               format_number(band.hi), format_number(band.decades), format_number(a_lo), format_number(a_hi)});
    pairs.push_back({{"epsilon", e},
                     {"zeta", z},
                     {"lambda_range", {lo, hi}},
                     {"band_points", band.points},
                     {"band_decades", band.decades},
                     {"alpha_low", a_lo},
                     {"alpha_high", a_hi}});
    const std::string key = "pair" + std::to_string(i) + "_";
    c.check(key + "band_decades_min", band.decades);
    c.check(key + "band_points_max", static_cast<double>(band.points));
    c.check(key + "limit_low_max", std::abs(a_lo));
    c.check(key + "limit_high_max", std::abs(1.0 - a_hi));
  }
  PlotSpec heat;
  heat.kind = PlotKind::Heatmap;
  heat.x = heat.x_label = "lambda_kappa";
  heat.y = {"epsilon_zeta"};
  heat.y_label = "epsilon_zeta";
  heat.value = "regime";
  heat.log_x = heat.log_y = true;
  heat.title = "Regime map";
  c.table("phase_sweep.csv", points, heat);
  c.table("bands.csv", bands);
  c.summary()["pairs"] = pairs;
}

json manifest(const ExperimentConfig& cfg, const std::string& resolved, const RunOutcome& out) {
  json checks = json::array();
  for (const auto& r : out.checks)
    checks.push_back({{"name", r.name},
                      {"value", r.value},
                      {"threshold", r.threshold},
                      {"bound", r.lower_bound ? "lower" : "upper"},
                      {"passed", r.passed}});
  const char* status = out.exit_code == kExitOk ? "ok" : out.exit_code == kExitCheck ? "check_failed" : "error";
  return {{"experiment", cfg.experiment},
          {"seed", cfg.seed},
          {"config_hash", [&] {
             char buf[17];
             std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(resolved)));
             return std::string(buf);
           }()},
          {"config", resolved},
          {"wall_time_s", out.wall_seconds},
          {"status", status},
          {"exit_code", out.exit_code},
          {"error", out.error.empty() ? json(nullptr) : json(out.error)},
          {"checks", checks},
          {"outputs", out.outputs},
          {"summary", out.summary},
          {"versions",
           {{"geolearn", GEOLEARN_VERSION},
            {"modules",
             {{"spd", GEOLEARN_VERSION},
              {"landscape", GEOLEARN_VERSION},
              {"langevin", GEOLEARN_VERSION},
              {"fokker_planck", GEOLEARN_VERSION},
              {"evolution", GEOLEARN_VERSION},
              {"quantum", GEOLEARN_VERSION},
              {"optimizer", GEOLEARN_VERSION},
              {"cli", GEOLEARN_VERSION}}},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__}}}};
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  RunOutcome out;
  out.dir = cfg.output.dir;
  out.summary = json::object();
  YAML::Emitter em;
  em << cfg.resolved;
  const std::string resolved = std::string(em.c_str()) + "\n";

  const auto start = std::chrono::steady_clock::now();
  try {
    std::filesystem::create_directories(out.dir);
    atomic_write(out.dir / "config.resolved.yaml", resolved);
    out.outputs.push_back("config.resolved.yaml");
    Context ctx(cfg, out);
    const std::string& ex = cfg.experiment;
    if (ex == "langevin") run_langevin(ctx);
    else if (ex == "fokker_planck") run_fokker_planck(ctx);
    else if (ex == "langevin_vs_fp") run_langevin_vs_fp(ctx);
    else if (ex == "evolution") run_evolution(ctx);
    else if (ex == "lande_check") run_lande(ctx);
    else if (ex == "quantum") run_quantum(ctx);
    else if (ex == "optimize") run_optimize(ctx);
    else if (ex == "phase_sweep") run_phase_sweep(ctx);
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ctx.check("runtime_max_s", out.wall_seconds);
    if (cfg.output.json) {
      atomic_write(out.dir / "summary.json", out.summary.dump(2) + "\n");
      out.outputs.push_back("summary.json");
    }
    const bool failed = std::any_of(out.checks.begin(), out.checks.end(), [](const CheckResult& r) { return !r.passed; });
    out.exit_code = failed ? kExitCheck : kExitOk;
  } catch (const std::exception& e) {
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.exit_code = kExitRuntime;
    out.error = e.what();
  }
  try {
    atomic_write(out.dir / "manifest.json", manifest(cfg, resolved, out).dump(2) + "\n");
  } catch (const std::exception& e) {
    if (out.error.empty()) out.error = e.what();
    out.exit_code = kExitRuntime;
  }
  return out;
}

std::optional<std::string> preset_text(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return std::string(p.text);
  return std::nullopt;
}

RunOutcome run_config_file(const std::string& path_or_preset, std::optional<std::string> out_dir,
                           std::optional<std::uint64_t> seed) {
  RunOutcome out;
  std::string text;
  if (std::filesystem::is_regular_file(path_or_preset)) {
    std::ifstream in(path_or_preset, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  } else if (auto p = preset_text(path_or_preset)) {
    text = *p;
  } else {
    out.exit_code = kExitConfig;
    out.error = "ParseError: no config file or preset named '" + path_or_preset + "'";
    return out;
  }
  ExperimentConfig cfg;
  try {
    cfg = parse_config(text, seed, std::move(out_dir));
  } catch (const ConfigError& e) {
    out.exit_code = kExitConfig;
    out.error = e.what();
    return out;
  }
  return run_experiment(cfg);
}

}  // namespace geolearn::cli
