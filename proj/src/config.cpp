#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "csv.hpp"

namespace geolearn::cli {

ConfigError::ConfigError(Kind kind, const std::string& what)
    : std::runtime_error([&] {
        switch (kind) {
          case Kind::Parse: return "ParseError: " + what;
          case Kind::UnknownKey: return "UnknownKey: " + what;
          case Kind::Invariant: return "InvariantViolation: " + what;
        }
        return what;
      }()),
      kind_(kind) {}

namespace detail {

YAML::Node to_node(double v) { return YAML::Node(format_number(v)); }

YAML::Node to_node(const std::vector<double>& v) {
  YAML::Node out(YAML::NodeType::Sequence);
  for (double x : v) out.push_back(to_node(x));
  return out;
}

YAML::Node to_node(const std::vector<std::vector<double>>& v) {
  YAML::Node out(YAML::NodeType::Sequence);
  for (const auto& row : v) out.push_back(to_node(row));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Section

Section::Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
  if (node_.IsDefined() && !node_.IsNull() && !node_.IsMap())
    throw ConfigError(ConfigError::Kind::Parse,
                      (path_.empty() ? std::string("document") : path_) + " must be a mapping (line " +
                          std::to_string(node_.Mark().line + 1) + ")");
}

bool Section::has(const std::string& key) const {
  const YAML::Node& n = node_;
  return n.IsMap() && n[key].IsDefined();
}

std::string Section::where(const std::string& key) const {
  const YAML::Node& n = node_;
  int line = -1;
  if (has(key))
    line = n[key].Mark().line;
  else if (n.IsDefined())
    line = n.Mark().line;
  return qualified(key) + (line >= 0 ? " (line " + std::to_string(line + 1) + ")" : "");
}

void Section::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(ConfigError::Kind::Parse, where(key) + " " + what);
}

void Section::order(const std::string& key) {
  if (std::find(keys_.begin(), keys_.end(), key) == keys_.end()) keys_.push_back(key);
}

bool Section::is_scalar(const std::string& key) const {
  const YAML::Node& n = node_;
  return has(key) && n[key].IsScalar();
}

std::string Section::scalar_text(const std::string& key) const {
  const YAML::Node& n = node_;
  return is_scalar(key) ? n[key].Scalar() : std::string();
}

Section& Section::child(const std::string& key) {
  auto it = sections_.find(key);
  if (it != sections_.end()) return *it->second;
  const YAML::Node& n = node_;
  used_.insert(key);
  order(key);
  auto s = std::make_shared<Section>(has(key) ? n[key] : YAML::Node(), qualified(key));
  sections_[key] = s;
  return *s;
}

std::vector<Section*> Section::children(const std::string& key) {
  const YAML::Node& n = node_;
  used_.insert(key);
  order(key);
  auto& list = lists_[key];
  list.clear();
  if (!has(key)) return {};
  if (!n[key].IsSequence()) fail(key, "must be a list");
  std::vector<Section*> out;
  for (std::size_t i = 0; i < n[key].size(); ++i) {
    list.push_back(std::make_shared<Section>(n[key][i], qualified(key) + "[" + std::to_string(i) + "]"));
    out.push_back(list.back().get());
  }
  return out;
}

void Section::finish() const {
  const YAML::Node& n = node_;
  if (n.IsMap()) {
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key))
        throw ConfigError(ConfigError::Kind::UnknownKey,
                          "unknown key '" + qualified(key) + "' (line " + std::to_string(kv.first.Mark().line + 1) + ")");
    }
  }
  for (const auto& [k, s] : sections_) s->finish();
  for (const auto& [k, l] : lists_)
    for (const auto& s : l) s->finish();
}

YAML::Node Section::emit() const {
  YAML::Node out(YAML::NodeType::Map);
  for (const auto& key : keys_) {
    if (auto s = sections_.find(key); s != sections_.end()) {
      out[key] = s->second->emit();
    } else if (auto l = lists_.find(key); l != lists_.end()) {
      YAML::Node seq(YAML::NodeType::Sequence);
      for (const auto& item : l->second) seq.push_back(item->emit());
      out[key] = seq;
    } else if (auto v = values_.find(key); v != values_.end()) {
      YAML::Node value = YAML::Clone(v->second);
      if (value.IsSequence()) value.SetStyle(YAML::EmitterStyle::Flow);
      out[key] = value;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

[[noreturn]] void invariant(const std::string& what) { throw ConfigError(ConfigError::Kind::Invariant, what); }

/// Runs a library constructor, reporting its failure as a violated invariant
/// of the section it was built from.
template <class F>
auto guarded(const Section& s, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    invariant((s.path().empty() ? std::string("document") : s.path()) + ": " + e.what());
  }
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

std::vector<double> from_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix read_matrix(Section& s, const std::string& key) {
  const auto rows = s.need<std::vector<std::vector<double>>>(key);
  if (rows.empty()) s.fail(key, "must be a non-empty list of rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) s.fail(key, "has rows of different lengths");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

Vector read_vector(Section& s, const std::string& key, Index dim, std::optional<double> fill = {}) {
  std::vector<double> v;
  if (fill && !s.has(key)) {
    v.assign(static_cast<std::size_t>(dim), *fill);
    s.set(key, v);
  } else {
    v = s.need<std::vector<double>>(key);
  }
  if (dim > 0 && static_cast<Index>(v.size()) != dim)
    invariant(s.where(key) + " must have " + std::to_string(dim) + " entries");
  return to_vector(v);
}

template <class E>
E read_enum(Section& s, const std::string& key, const std::string& fallback,
            std::initializer_list<std::pair<const char*, E>> options) {
  const auto text = s.get<std::string>(key, fallback);
  for (const auto& [name, value] : options)
    if (text == name) return value;
  std::string names;
  for (const auto& [name, value] : options) names += (names.empty() ? "" : ", ") + std::string(name);
  s.fail(key, "'" + text + "' is not one of {" + names + "}");
}

void positive(const Section& s, const std::string& key, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) invariant(s.where(key) + " must be positive");
}

void non_negative(const Section& s, const std::string& key, double v) {
  if (!(v >= 0.0) || !std::isfinite(v)) invariant(s.where(key) + " must be non-negative");
}

LossLandscape parse_landscape(Section& s) {
  if (!s.has("kind")) s.fail("kind", "is required");
  const auto kind = s.need<std::string>("kind");
  LossLandscape land = constant_landscape(1);
  if (kind == "quadratic") {
    Matrix h;
    if (s.has("diagonal")) {
      h = read_vector(s, "diagonal", 0).asDiagonal();
    } else {
      h = read_matrix(s, "hessian");
    }
    const Vector c = read_vector(s, "center", h.rows(), 0.0);
    land = guarded(s, [&] { return quadratic(SpdMatrix(h), c); });
  } else if (kind == "double_well") {
    const double barrier = s.get("barrier", 1.0);
    const double spacing = s.get("spacing", 1.0);
    land = guarded(s, [&] { return double_well(barrier, spacing); });
  } else if (kind == "rosenbrock") {
    const double a = s.get("a", 1.0);
    const double b = s.get("b", 100.0);
    land = rosenbrock(a, b);
  } else if (kind == "constant") {
    const auto dim = s.get<std::int64_t>("dim", 1);
    if (dim < 1) invariant(s.where("dim") + " must be at least 1");
    land = constant_landscape(dim, s.get("value", 0.0));
  } else {
    s.fail("kind", "'" + kind + "' is not one of {quadratic, double_well, rosenbrock, constant}");
  }
  land.offset = s.get("offset", 0.0);
  return land;
}

NoiseModel parse_noise(Section& s, Index dim) {
  const auto kind = s.get<std::string>("kind", "isotropic");
  if (kind == "isotropic") {
    const double sigma = s.get("sigma", 1.0);
    non_negative(s, "sigma", sigma);
    return isotropic_noise(dim, sigma);
  }
  if (kind == "diagonal") {
    const Vector sig = read_vector(s, "sigmas", dim);
    return guarded(s, [&] { return diagonal_noise(sig); });
  }
  if (kind == "full") {
    const Matrix k = read_matrix(s, "kappa");
    if (k.rows() != dim || k.cols() != dim) invariant(s.where("kappa") + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
    return guarded(s, [&] { return full_noise(SpdMatrix(k)); });
  }
  if (kind == "state_dependent") {
    const auto map = read_enum<DiagonalMap>(s, "map", "quadratic",
                                            {{"quadratic", DiagonalMap::Quadratic}, {"exponential", DiagonalMap::Exponential}});
    const Vector base = read_vector(s, "base", dim);
    const Vector slope = read_vector(s, "slope", dim);
    const Vector center = read_vector(s, "center", dim, 0.0);
    const double lo = s.get("domain_lo", -10.0);
    const double hi = s.get("domain_hi", 10.0);
    return guarded(s, [&] { return state_dependent_noise(map, base, slope, center, lo, hi); });
  }
  s.fail("kind", "'" + kind + "' is not one of {isotropic, diagonal, full, state_dependent}");
}

MetricSpec parse_metric(Section& s) {
  const auto kind = s.get<std::string>("kind", "power_law");
  MetricSpec spec;
  if (kind == "power_law") {
    spec = PowerLaw{s.get("alpha", 1.0)};
  } else if (kind == "interp12") {
    spec = Interp12{s.get("epsilon", 1.0)};
  } else if (kind == "interp123") {
    const double e = s.get("epsilon", 1.0);
    spec = Interp123{e, s.get("zeta", 1.0)};
  } else {
    s.fail("kind", "'" + kind + "' is not one of {power_law, interp12, interp123}");
  }
  guarded(s, [&] { validate(spec); return 0; });
  return spec;
}

GridSpec parse_grid(Section& s, int dims) {
  const Vector lo = read_vector(s, "lo", dims);
  const Vector hi = read_vector(s, "hi", dims);
  const auto cells = s.need<std::vector<std::int64_t>>("cells");
  if (static_cast<int>(cells.size()) != dims) invariant(s.where("cells") + " must have " + std::to_string(dims) + " entries");
  return guarded(s, [&] {
    return dims == 1 ? GridSpec::line(lo[0], hi[0], cells[0]) : GridSpec::plane(lo[0], hi[0], cells[0], lo[1], hi[1], cells[1]);
  });
}

InitialSpec parse_initial(Section& s, Index dim, const std::optional<GridSpec>& box) {
  InitialSpec init;
  init.kind = read_enum<InitialKind>(s, "kind", box ? "uniform" : "point",
                                     {{"point", InitialKind::Point}, {"uniform", InitialKind::Uniform}, {"gaussian", InitialKind::Gaussian}});
  switch (init.kind) {
    case InitialKind::Point:
      init.point = read_vector(s, "point", dim, 0.0);
      break;
    case InitialKind::Uniform: {
      std::optional<double> lo_fill, hi_fill;
      if (box && box->dims == 1) lo_fill = box->lo[0], hi_fill = box->hi[0];
      if (!box && (!s.has("lo") || !s.has("hi"))) invariant(s.path() + ": uniform initial states need lo and hi");
      if (box && box->dims == 2 && (!s.has("lo") || !s.has("hi"))) {
        init.lo = Vector(2), init.hi = Vector(2);
        init.lo << box->lo[0], box->lo[1];
        init.hi << box->hi[0], box->hi[1];
        s.set("lo", from_vector(init.lo));
        s.set("hi", from_vector(init.hi));
      } else {
        init.lo = read_vector(s, "lo", dim, lo_fill);
        init.hi = read_vector(s, "hi", dim, hi_fill);
      }
      for (Index k = 0; k < dim; ++k)
        if (!(init.lo[k] < init.hi[k])) invariant(s.path() + ": uniform box needs lo < hi");
      break;
    }
    case InitialKind::Gaussian:
      init.mean = read_vector(s, "mean", dim, 0.0);
      init.variance = s.get("variance", 1.0);
      positive(s, "variance", init.variance);
      break;
  }
  return init;
}

unsigned read_threads(Section& s) {
  const auto t = s.get<std::int64_t>("threads", 0);
  if (t < 0) invariant(s.where("threads") + " must be non-negative");
  return static_cast<unsigned>(t);
}

/// Solver built only to validate the time step against its stability bound.
void check_fp_dt(const Section& s, const std::string& key, const GridSpec& grid, const LossLandscape& land,
                 const NoiseModel& noise, const MetricSpec& metric, double gamma, const FpOptions& opt,
                 std::optional<double> dt) {
  const FokkerPlanckSolver solver = guarded(s, [&] { return FokkerPlanckSolver(grid, land, noise, metric, gamma, opt); });
  if (dt && opt.scheme == TimeScheme::Explicit && *dt > solver.stability_bound()) {
    std::ostringstream msg;
    msg.precision(6);
    msg << s.where(key) << " = " << *dt << " exceeds the explicit stability bound dt_max = " << solver.stability_bound();
    invariant(msg.str());
  }
}

std::optional<double> read_fp_dt(Section& s, const std::string& key) {
  if (!s.has(key) || s.scalar_text(key) == "auto") {
    s.set(key, std::string("auto"));
    return std::nullopt;
  }
  const double dt = s.need<double>(key);
  positive(s, key, dt);
  return dt;
}

FpOptions parse_fp_options(Section& s) {
  FpOptions opt;
  opt.form = read_enum<EquationForm>(s, "form", "general",
                                     {{"general", EquationForm::General}, {"covariant", EquationForm::Covariant}, {"flat", EquationForm::Flat}});
  opt.flat_epsilon = s.get("flat_epsilon", 1.0);
  positive(s, "flat_epsilon", opt.flat_epsilon);
  opt.scheme = read_enum<TimeScheme>(s, "scheme", "explicit",
                                     {{"explicit", TimeScheme::Explicit}, {"semi_implicit", TimeScheme::SemiImplicit}});
  return opt;
}

AcceptanceRule parse_rule(Section& s) {
  AcceptanceRule rule;
  rule.kind = read_enum<AcceptanceKind>(s, "rule", "sigmoid",
                                        {{"sigmoid", AcceptanceKind::Sigmoid}, {"metropolis", AcceptanceKind::Metropolis}});
  rule.beta = s.get("beta_selection", 1.0);
  non_negative(s, "beta_selection", rule.beta);
  return rule;
}

JumpModel parse_jump(Section& s, Index dim) {
  const auto kind = s.get<std::string>("kind", "isotropic");
  if (kind == "isotropic") {
    const double sigma = s.get("sigma", 1.0);
    positive(s, "sigma", sigma);
    return JumpModel::isotropic(dim, sigma);
  }
  if (kind == "full") {
    const Matrix c = read_matrix(s, "covariance");
    if (c.rows() != dim || c.cols() != dim) invariant(s.where("covariance") + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
    return guarded(s, [&] { return JumpModel::full(c); });
  }
  s.fail("kind", "'" + kind + "' is not one of {isotropic, full}");
}

const std::map<std::string, std::vector<std::string>>& check_names() {
  static const std::map<std::string, std::vector<std::string>> names{
      {"langevin", {"update_covariance_rel_max", "failures_max"}},
      {"fokker_planck", {"l1_max", "mass_error_max", "entropy_rel_max", "stationary_delta_s_max"}},
      {"langevin_vs_fp", {"ks_max"}},
      {"evolution", {"variance_rel_max", "ks_max", "balance_max"}},
      {"lande_check", {"max_z_max", "expansion_max"}},
      {"quantum", {"energy_rel_max", "vq_rel_max", "omega_rel_max", "norm_drift_max", "continuity_l1_max"}},
      {"optimize", {"flat_mismatch_max", "sqrt_rel_max", "reparam_max"}},
      {"phase_sweep", {}},
  };
  return names;
}

/// Phase-sweep checks are per pair: pair<N>_band_decades_min,
/// pair<N>_band_points_max, pair<N>_limit_low_max, pair<N>_limit_high_max.
bool pair_check(const std::string& name, std::size_t pairs) {
  static const std::vector<std::string> suffixes{"band_decades_min", "band_points_max", "limit_low_max", "limit_high_max"};
  if (name.rfind("pair", 0) != 0) return false;
  const auto us = name.find('_');
  if (us == std::string::npos || us == 4) return false;
  std::size_t idx = 0;
  for (std::size_t i = 4; i < us; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
    idx = idx * 10 + static_cast<std::size_t>(name[i] - '0');
  }
  return idx < pairs && std::find(suffixes.begin(), suffixes.end(), name.substr(us + 1)) != suffixes.end();
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"langevin",    "fokker_planck", "evolution",      "quantum",
                                              "optimize",    "phase_sweep",   "langevin_vs_fp", "lande_check"};
  return names;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override,
                              std::optional<std::string> out_override) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(ConfigError::Kind::Parse, "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!doc.IsMap()) throw ConfigError(ConfigError::Kind::Parse, "document must be a mapping of sections");
  Section root(doc, "");
  ExperimentConfig cfg;

  cfg.experiment = root.need<std::string>("experiment");
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), cfg.experiment) == names.end())
    root.fail("experiment", "'" + cfg.experiment + "' is not a known experiment");
  const std::string& ex = cfg.experiment;

  cfg.seed = root.get<std::uint64_t>("seed", 0);
  if (seed_override) {
    cfg.seed = *seed_override;
    root.set("seed", cfg.seed);
  }

  {
    Section& out = root.child("output");
    cfg.output.dir = out.get<std::string>("dir", "out/" + ex);
    if (out_override) {
      cfg.output.dir = *out_override;
      out.set("dir", cfg.output.dir);
    }
    const auto formats = out.get<std::vector<std::string>>("formats", {"csv", "json"});
    cfg.output.csv = cfg.output.json = cfg.output.svg = false;
    for (const auto& f : formats) {
      if (f == "csv") cfg.output.csv = true;
      else if (f == "json") cfg.output.json = true;
      else if (f == "svg") cfg.output.svg = true;
      else out.fail("formats", "entry '" + f + "' is not one of {csv, json, svg}");
    }
  }

  const bool needs_land = ex != "phase_sweep" && ex != "quantum";
  const bool needs_noise = ex == "langevin" || ex == "fokker_planck" || ex == "langevin_vs_fp" || ex == "optimize";
  const bool needs_metric = ex == "langevin" || ex == "fokker_planck" || ex == "langevin_vs_fp";
  if (needs_land || (ex == "quantum" && root.has("landscape"))) cfg.land = parse_landscape(root.child("landscape"));
  const Index dim = cfg.land ? dimension(*cfg.land) : 1;
  if (needs_noise) cfg.noise = parse_noise(root.child("noise"), dim);
  if (needs_metric) cfg.metric = parse_metric(root.child("metric"));

  Section& b = root.child(ex);
  if (ex == "langevin") {
    auto& l = cfg.langevin;
    l.sim.gamma = b.get("gamma", 1.0);
    l.sim.dt = b.get("dt", 0.01);
    l.sim.steps = b.get<std::int64_t>("steps", 100);
    l.sim.ensemble_size = b.get<std::int64_t>("ensemble_size", 1000);
    l.sim.seed = cfg.seed;
    l.sim.metric = cfg.metric;
    l.sim.drift_correction = read_enum<DriftCorrection>(
        b, "drift_correction", "auto", {{"auto", DriftCorrection::Auto}, {"on", DriftCorrection::On}, {"off", DriftCorrection::Off}});
    l.sim.snapshot_every = b.get<std::int64_t>("snapshot_every", 0);
    l.sim.threads = read_threads(b);
    l.initial = parse_initial(b.child("initial"), dim, std::nullopt);
    l.write_members = b.get<std::int64_t>("write_members", 1000);
    if (l.write_members < 0) invariant(b.where("write_members") + " must be non-negative");
    guarded(b, [&] { l.sim.validate(); return 0; });
  } else if (ex == "fokker_planck") {
    auto& f = cfg.fokker_planck;
    if (dim > 2) invariant("fokker_planck grids are 1D or 2D; the landscape has dimension " + std::to_string(dim));
    f.gamma = b.get("gamma", 1.0);
    positive(b, "gamma", f.gamma);
    f.dt = read_fp_dt(b, "dt");
    f.t_end = b.get("t_end", 1.0);
    positive(b, "t_end", f.t_end);
    f.grid = parse_grid(b.child("grid"), static_cast<int>(dim));
    f.options = parse_fp_options(b);
    f.initial = parse_initial(b.child("initial"), dim, f.grid);
    if (f.initial.kind == InitialKind::Point) invariant(b.path() + ".initial: a point mass is not a grid density");
    f.snapshots = b.get<std::int64_t>("snapshots", 10);
    if (f.snapshots < 1) invariant(b.where("snapshots") + " must be at least 1");
    if (b.has("stationary_probe")) {
      Section& p = b.child("stationary_probe");
      StationaryProbe probe;
      probe.land = parse_landscape(p.child("landscape"));
      if (dimension(probe.land) != dim) invariant(p.path() + ".landscape must match the grid dimension");
      probe.cells = p.get<std::int64_t>("cells", 1024);
      probe.t_end = p.get("t_end", 1.0);
      positive(p, "t_end", probe.t_end);
      f.probe = probe;
    }
    check_fp_dt(b, "dt", f.grid, *cfg.land, *cfg.noise, cfg.metric, f.gamma, f.options, f.dt);
  } else if (ex == "langevin_vs_fp") {
    auto& v = cfg.langevin_vs_fp;
    if (dim != 1) invariant("langevin_vs_fp compares 1D densities; the landscape has dimension " + std::to_string(dim));
    v.gamma = b.get("gamma", 1.0);
    positive(b, "gamma", v.gamma);
    v.t_end = b.get("t_end", 5.0);
    positive(b, "t_end", v.t_end);
    v.langevin_dt = b.get("langevin_dt", 0.01);
    positive(b, "langevin_dt", v.langevin_dt);
    v.ensemble_size = b.get<std::int64_t>("ensemble_size", 100000);
    if (v.ensemble_size < 2) invariant(b.where("ensemble_size") + " must be at least 2");
    v.threads = read_threads(b);
    v.fp_dt = read_fp_dt(b, "fp_dt");
    v.grid = parse_grid(b.child("grid"), 1);
    v.initial = parse_initial(b.child("initial"), 1, v.grid);
    if (v.initial.kind == InitialKind::Point) invariant(b.path() + ".initial: a point mass is not a grid density");
    check_fp_dt(b, "fp_dt", v.grid, *cfg.land, *cfg.noise, cfg.metric, v.gamma, {}, v.fp_dt);
  } else if (ex == "evolution") {
    auto& e = cfg.evolution;
    e.rule = parse_rule(b);
    e.jump = parse_jump(b.child("jump"), dim);
    e.steps = b.get<std::int64_t>("steps", 100000);
    if (e.steps < 1) invariant(b.where("steps") + " must be positive");
    e.burn_in = b.get("burn_in", 0.1);
    if (!(e.burn_in >= 0.0 && e.burn_in < 1.0)) invariant(b.where("burn_in") + " must lie in [0, 1)");
    e.q0 = read_vector(b, "q0", dim, 0.0);
    e.write_every = b.get<std::int64_t>("write_every", 1);
    if (e.write_every < 1) invariant(b.where("write_every") + " must be positive");
    if (b.has("detailed_balance")) {
      Section& d = b.child("detailed_balance");
      BalanceBlock bal;
      bal.pairs = d.get<std::int64_t>("pairs", 10000);
      bal.spread = d.get("spread", 3.0);
      positive(d, "spread", bal.spread);
      for (Section* item : d.children("landscapes")) bal.landscapes.push_back(parse_landscape(*item));
      if (bal.landscapes.empty()) bal.landscapes.push_back(*cfg.land);
      e.balance = std::move(bal);
    }
  } else if (ex == "lande_check") {
    auto& l = cfg.lande;
    l.rule = parse_rule(b);
    l.jump = parse_jump(b.child("jump"), dim);
    l.q0 = read_vector(b, "q0", dim, 0.0);
    l.lande.horizon = static_cast<std::size_t>(b.get<std::int64_t>("horizon", 400));
    l.lande.snapshots = static_cast<std::size_t>(b.get<std::int64_t>("snapshots", 20));
    l.lande.ensemble_size = static_cast<std::size_t>(b.get<std::int64_t>("ensemble_size", 10000));
    l.lande.rk4_substeps = static_cast<int>(b.get<std::int64_t>("rk4_substeps", 8));
    l.lande.expansion_limit = b.get("expansion_limit", 0.3);
    l.lande.threads = read_threads(b);
    l.lande.seed = cfg.seed;
    if (l.lande.snapshots < 1 || l.lande.horizon < l.lande.snapshots)
      invariant(b.path() + ": need 1 <= snapshots <= horizon");
    if (l.lande.ensemble_size < 2) invariant(b.where("ensemble_size") + " must be at least 2");
  } else if (ex == "quantum") {
    auto& q = cfg.quantum;
    q.gamma = b.get("gamma", 0.5);
    positive(b, "gamma", q.gamma);
    q.beta = b.get("beta_quantum", 1.0);
    positive(b, "beta_quantum", q.beta);
    q.f = b.get("f", 0.0);
    q.grid = parse_grid(b.child("grid"), 1);
    q.potential = read_enum<PotentialKind>(b, "potential", "harmonic",
                                           {{"harmonic", PotentialKind::Harmonic}, {"effective", PotentialKind::Effective}});
    if (q.potential == PotentialKind::Harmonic) {
      q.omega = b.get("omega", 1.0);
      positive(b, "omega", q.omega);
      q.center = b.get("center", 0.0);
    } else if (!cfg.land || dim != 1) {
      invariant(b.path() + ": the effective potential needs a 1D landscape section");
    }
    q.boundary = read_enum<Boundary>(b, "boundary", "hard_wall", {{"hard_wall", Boundary::HardWall}, {"periodic", Boundary::Periodic}});
    q.dt = b.get("dt", 0.005);
    positive(b, "dt", q.dt);
    q.periods = b.get("periods", 3.0);
    positive(b, "periods", q.periods);
    q.coherent_q0 = b.get("coherent_q0", 2.0);
    q.madelung_check = b.get("madelung_check", true);
  } else if (ex == "optimize") {
    auto& o = cfg.optimize;
    o.gammas = b.get<std::vector<double>>("gammas", {0.01});
    if (o.gammas.empty()) invariant(b.where("gammas") + " must not be empty");
    for (double g : o.gammas)
      if (!(g > 0.0)) invariant(b.where("gammas") + " entries must be positive");
    o.steps = b.get<std::int64_t>("steps", 1000);
    if (o.steps < 1) invariant(b.where("steps") + " must be positive");
    o.record_every = b.get<std::int64_t>("record_every", 1);
    if (o.record_every < 1) invariant(b.where("record_every") + " must be positive");
    o.q0 = read_vector(b, "q0", dim, 0.0);
    {
      Section& e = b.child("estimator");
      o.estimator.mode = read_enum<EstimatorMode>(e, "mode", "diagonal", {{"diagonal", EstimatorMode::Diagonal}, {"full", EstimatorMode::Full}});
      o.estimator.decay = e.get("decay", 0.99);
      if (!(o.estimator.decay >= 0.0 && o.estimator.decay < 1.0)) invariant(e.where("decay") + " must lie in [0, 1)");
      o.estimator.epsilon_floor = e.get("epsilon_floor", 1e-8);
      positive(e, "epsilon_floor", o.estimator.epsilon_floor);
    }
    o.target_grad_norm = b.get("target_grad_norm", 0.0);
    non_negative(b, "target_grad_norm", o.target_grad_norm);
    if (b.has("metrics")) {
      for (Section* item : b.children("metrics")) o.metrics.push_back(parse_metric(*item));
    } else {
      Section& m = b.child("metric");
      o.metrics.push_back(parse_metric(m));
    }
    if (o.metrics.empty()) invariant(b.where("metrics") + " must not be empty");
    if (b.has("reductions")) {
      Section& r = b.child("reductions");
      ReductionsBlock red;
      red.samples = r.get<std::int64_t>("samples", 1000);
      red.presamples = r.get<std::int64_t>("presamples", 2000);
      red.steps = r.get<std::int64_t>("steps", 200);
      red.gamma = r.get("gamma", 0.1);
      positive(r, "gamma", red.gamma);
      if (r.has("transform")) {
        red.transform = read_matrix(r, "transform");
      } else {
        red.transform = Matrix::Identity(dim, dim);
        for (Index i = 0; i < dim; ++i) red.transform(i, i) = 1.0 + static_cast<double>(i + 1);
        if (dim > 1) red.transform(0, 1) = 0.5;
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(dim));
        for (Index i = 0; i < dim; ++i) rows[static_cast<std::size_t>(i)] = from_vector(red.transform.row(i).transpose());
        r.set("transform", rows);
      }
      if (red.transform.rows() != dim || red.transform.cols() != dim)
        invariant(r.where("transform") + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
      if (std::abs(red.transform.determinant()) < 1e-12) invariant(r.where("transform") + " must be invertible");
      o.reductions = red;
    }
  } else if (ex == "phase_sweep") {
    auto& sw = cfg.sweep;
    if (b.has("pairs")) {
      const auto pairs = b.need<std::vector<std::vector<double>>>("pairs");
      for (const auto& p : pairs) {
        if (p.size() != 2) invariant(b.where("pairs") + " entries must be [epsilon, zeta]");
        sw.pairs.emplace_back(p[0], p[1]);
      }
    } else {
      const auto eps = b.get<std::vector<double>>("epsilons", {1e-3, 1e-2, 1e-1, 1.0});
      const auto zetas = b.get<std::vector<double>>("zetas", {1e-3, 1e-2, 1e-1, 1.0});
      for (double e : eps)
        for (double z : zetas) sw.pairs.emplace_back(e, z);
    }
    if (sw.pairs.empty()) invariant(b.path() + ": no (epsilon, zeta) pairs");
    for (const auto& [e, z] : sw.pairs)
      if (!(e > 0.0 && z > 0.0)) invariant(b.path() + ": epsilon and zeta must be positive");
    if (b.has("lambda_range")) {
      const auto r = b.need<std::vector<double>>("lambda_range");
      if (r.size() != 2 || !(r[0] > 0.0 && r[0] < r[1])) invariant(b.where("lambda_range") + " must be [lo, hi] with 0 < lo < hi");
      sw.lambda_range = std::pair{r[0], r[1]};
    } else {
      b.set("lambda_range", std::string("per_pair"));
    }
    sw.points = static_cast<std::size_t>(b.get<std::int64_t>("points", 2001));
    if (sw.points < 2) invariant(b.where("points") + " must be at least 2");
    sw.limit_factor = b.get("limit_factor", 1e6);
    if (!(sw.limit_factor > 1.0)) invariant(b.where("limit_factor") + " must exceed 1");
  }

  if (root.has("check")) {
    Section& c = root.child("check");
    const auto& allowed = check_names().at(ex);
    const YAML::Node checks = YAML::Clone(doc["check"]);
    if (checks.IsMap()) {
      for (const auto& kv : checks) {
        const auto name = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), name) != allowed.end() || name == "runtime_max_s" ||
            (ex == "phase_sweep" && pair_check(name, cfg.sweep.pairs.size())))
          cfg.checks[name] = c.need<double>(name);
      }
    }
  }

  root.finish();
  cfg.resolved = root.emit();
  return cfg;
}

}  // namespace geolearn::cli
