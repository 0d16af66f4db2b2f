#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "geolearn/geolearn.hpp"

namespace geolearn::cli {

class ConfigError : public std::runtime_error {
 public:
  enum class Kind { Parse, UnknownKey, Invariant };
  ConfigError(Kind kind, const std::string& what);
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

/// YAML nodes that print doubles in their shortest round-trip form.
YAML::Node to_node(double v);
YAML::Node to_node(const std::vector<double>& v);
YAML::Node to_node(const std::vector<std::vector<double>>& v);
template <class T>
YAML::Node to_node(const T& v) {
  return YAML::Node(v);
}

}  // namespace detail

/// Read-tracking view of a YAML mapping. Every key read is echoed, with its
/// effective value, into the resolved document; keys never read are
/// reported by finish().
class Section {
 public:
  Section(YAML::Node node, std::string path);

  bool has(const std::string& key) const;
  std::string where(const std::string& key) const;
  const std::string& path() const { return path_; }

  template <class T>
  T need(const std::string& key) {
    if (!has(key)) throw ConfigError(ConfigError::Kind::Parse, "missing required key " + qualified(key));
    return read<T>(key);
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    if (!has(key)) {
      set(key, fallback);
      return fallback;
    }
    return read<T>(key);
  }

  Section& child(const std::string& key);  // missing key: empty section
  std::vector<Section*> children(const std::string& key);  // sequence of mappings
  bool is_scalar(const std::string& key) const;
  std::string scalar_text(const std::string& key) const;

  template <class T>
  void set(const std::string& key, const T& value) {
    used_.insert(key);
    values_[key] = detail::to_node(value);
    order(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const;
  void finish() const;
  YAML::Node emit() const;

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void order(const std::string& key);

  template <class T>
  T read(const std::string& key) {
    try {
      T v = node_[key].template as<T>();
      used_.insert(key);
      values_[key] = detail::to_node(v);
      order(key);
      return v;
    } catch (const YAML::Exception&) {
      fail(key, "has the wrong type");
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
  std::vector<std::string> keys_;
  std::map<std::string, YAML::Node> values_;
  std::map<std::string, std::shared_ptr<Section>> sections_;
  std::map<std::string, std::vector<std::shared_ptr<Section>>> lists_;
};

struct OutputOptions {
  std::string dir = "out";
  bool csv = true;
  bool json = true;
  bool svg = false;
};

enum class InitialKind { Point, Uniform, Gaussian };

struct InitialSpec {
  InitialKind kind = InitialKind::Uniform;
  Vector point;
  Vector lo, hi;  // uniform box
  Vector mean;
  double variance = 1.0;
};

struct LangevinBlock {
  SimConfig sim;
  InitialSpec initial;
  std::int64_t write_members = 1000;
};

struct StationaryProbe {
  LossLandscape land = constant_landscape(1);
  Index cells = 1024;
  double t_end = 1.0;
};

struct FokkerPlanckBlock {
  double gamma = 1.0;
  std::optional<double> dt;  // absent: the explicit stability bound
  double t_end = 1.0;
  GridSpec grid;
  FpOptions options;
  InitialSpec initial;
  std::int64_t snapshots = 10;
  std::optional<StationaryProbe> probe;
};

struct LangevinVsFpBlock {
  double gamma = 1.0;
  double t_end = 5.0;
  double langevin_dt = 0.01;
  Index ensemble_size = 100000;
  unsigned threads = 0;
  std::optional<double> fp_dt;
  GridSpec grid;
  InitialSpec initial;
};

struct BalanceBlock {
  std::int64_t pairs = 10000;
  double spread = 3.0;
  std::vector<LossLandscape> landscapes;
};

struct EvolutionBlock {
  AcceptanceRule rule;
  JumpModel jump;
  std::int64_t steps = 100000;
  double burn_in = 0.1;
  Vector q0;
  std::int64_t write_every = 1;
  std::optional<BalanceBlock> balance;
};

struct LandeBlock {
  AcceptanceRule rule;
  JumpModel jump;
  Vector q0;
  LandeConfig lande;
};

enum class PotentialKind { Harmonic, Effective };

struct QuantumBlock {
  double gamma = 0.5;
  double beta = 1.0;
  double f = 0.0;
  GridSpec grid;
  PotentialKind potential = PotentialKind::Harmonic;
  double omega = 1.0;
  double center = 0.0;
  Boundary boundary = Boundary::HardWall;
  double dt = 0.005;
  double periods = 3.0;
  double coherent_q0 = 2.0;
  bool madelung_check = true;
};

struct ReductionsBlock {
  std::int64_t samples = 1000;
  Matrix transform;
  std::int64_t presamples = 2000;
  std::int64_t steps = 200;
  double gamma = 0.1;
};

struct OptimizeBlock {
  std::vector<double> gammas;
  std::int64_t steps = 1000;
  std::int64_t record_every = 1;
  Vector q0;
  EstimatorConfig estimator;
  double target_grad_norm = 0.0;
  std::vector<MetricSpec> metrics;
  std::optional<ReductionsBlock> reductions;
};

struct SweepBlock {
  std::vector<std::pair<double, double>> pairs;  // (epsilon, zeta)
  std::optional<std::pair<double, double>> lambda_range;  // absent: [1e-6 eps^2, 1e6 / zeta^2] per pair
  std::size_t points = 2001;
  double limit_factor = 1e6;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  OutputOptions output;
  std::optional<LossLandscape> land;
  std::optional<NoiseModel> noise;
  MetricSpec metric = PowerLaw{1.0};
  LangevinBlock langevin;
  FokkerPlanckBlock fokker_planck;
  LangevinVsFpBlock langevin_vs_fp;
  EvolutionBlock evolution;
  LandeBlock lande;
  QuantumBlock quantum;
  OptimizeBlock optimize;
  SweepBlock sweep;
  std::map<std::string, double> checks;  // names ending in _min are lower bounds, the rest upper bounds
  YAML::Node resolved;
};

const std::vector<std::string>& experiment_names();

/// Parses and validates a config document. Throws ConfigError.
ExperimentConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override = {},
                              std::optional<std::string> out_override = {});

/// FNV-1a of the text.
std::uint64_t fnv1a(std::string_view text);

}  // namespace geolearn::cli
