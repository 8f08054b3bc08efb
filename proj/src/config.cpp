#include "ata/config.hpp"

#include <fstream>
#include <sstream>

#include "ata/error.hpp"

namespace ata::io {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<Config::KeySpec>& Config::registry() {
  static const std::vector<KeySpec> specs = {
      {"data.static", "", "path to a PC3D file used as the alignment source"},
      {"data.dyn_train", "", "path to the PCV4 training clips"},
      {"data.dyn_test", "", "path to the PCV4 test clips"},
      {"model.dim", "64", "backbone token width"},
      {"model.blocks", "2", "backbone depth"},
      {"model.heads", "4", "attention heads"},
      {"model.num_classes", "0", "task classes; 0 = take from the training file"},
      {"model.eq4_literal", "false", "drop the attention skip (literal composition)"},
      {"model.dropout", "0.5", "dropout rate on the classification head input"},
      {"embedder.anchors", "16", "anchor points per anchor frame"},
      {"embedder.radius", "0.3", "ball-query radius"},
      {"embedder.neighbors", "8", "max neighbors per tube frame"},
      {"embedder.tube", "3", "temporal tube length, odd"},
      {"embedder.stride", "2", "anchor frame stride"},
      {"adapter.r", "16", "adapter bottleneck width"},
      {"adapter.kernel", "3", "temporal kernel size, odd"},
      {"adapter.depth", "-1", "adapted blocks; -1 = all"},
      {"adapter.activation", "gelu", "adapter activation: gelu | relu"},
      {"adapter.placement", "bypass", "bypass | prepend | post | middle"},
      {"adapter.zero_init_up", "true", "zero-init up-projections so tuning starts at identity"},
      {"adapter.conv_axis", "temporal", "temporal | flat (convolve the flattened sequence)"},
      {"toggles.pae", "true", "align and train the dynamic embedder"},
      {"toggles.sce", "true", "enable the spatial context encoder branch"},
      {"toggles.pva", "true", "enable the point video adapter branch"},
      {"ot.epsilon", "0.1", "entropic regularization"},
      {"ot.p", "2", "Wasserstein order"},
      {"ot.max_iter", "2000", "solver iteration cap"},
      {"ot.tol", "1e-6", "L1 marginal violation tolerance"},
      {"ot.normalize_cost", "false", "divide costs by their median before solving"},
      {"ot.debias", "false", "subtract self-transport terms from reported distances"},
      {"otdd.b", "32", "per-class subsample size"},
      {"otdd.rounds", "2", "subsample rounds per class"},
      {"otdd.inner_mode", "gaussian", "label conditional estimator: gaussian | exact"},
      {"otdd.solver", "sinkhorn", "transport solver: sinkhorn | exact"},
      {"stage1.metric", "otdd", "alignment metric: otdd | mmd | cka | euclid"},
      {"mmd.bandwidth", "1.0", "RBF bandwidth for the mmd metric"},
      {"schedule.stage1_epochs", "10", "alignment epochs"},
      {"schedule.stage2_epochs", "40", "adaptation epochs"},
      {"schedule.base_lr", "0.01", "stage-2 peak learning rate"},
      {"schedule.stage1_lr", "0.01", "stage-1 learning rate"},
      {"schedule.warmup_epochs", "10", "linear warmup epochs"},
      {"schedule.decay_epochs", "20,30", "step-decay epochs, strictly increasing"},
      {"schedule.decay_factor", "0.1", "multiplier applied at each decay epoch"},
      {"schedule.momentum", "0.9", "SGD momentum"},
      {"schedule.batch_size", "16", "minibatch size for both stages"},
      {"synth.kind", "dynamic", "gen-synth output: static | dynamic"},
      {"synth.classes", "4", "synthetic classes"},
      {"synth.per_class", "32", "samples per class"},
      {"synth.points", "128", "points per cloud / per frame"},
      {"synth.frames", "8", "frames per clip"},
      {"synth.noise", "0.02", "Gaussian jitter scale"},
      {"synth.motion_set", "mixed", "mixed | rotdir (direction-only two-class task)"},
  };
  return specs;
}

Config Config::defaults() {
  Config c;
  for (const auto& spec : registry()) c.values_[spec.key] = spec.def;
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  for (const auto& spec : registry()) {
    if (spec.key == key) {
      values_[key] = value;
      return;
    }
  }
  std::ostringstream os;
  os << "unknown config key '" << key << "'; valid keys:";
  for (const auto& spec : registry()) os << "\n  " << spec.key << " (default: " << spec.def << ")";
  fail(ErrorKind::BadConfig, os.str());
}

Config Config::from_text(const std::string& text) {
  Config c = defaults();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::BadConfig,
            "line " + std::to_string(lineno) + ": expected key=value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorKind::BadFile, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::BadConfig, "unregistered config key '" + key + "'");
  return it->second;
}

long Config::integer(const std::string& key) const {
  const std::string& v = raw(key);
  try {
    std::size_t used = 0;
    const long out = std::stol(v, &used);
    require(used == v.size(), ErrorKind::BadConfig, "");
    return out;
  } catch (...) {
    fail(ErrorKind::BadConfig, key + " must be an integer, got '" + v + "'");
  }
}

double Config::real(const std::string& key) const {
  const std::string& v = raw(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    require(used == v.size(), ErrorKind::BadConfig, "");
    return out;
  } catch (...) {
    fail(ErrorKind::BadConfig, key + " must be a number, got '" + v + "'");
  }
}

bool Config::boolean(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::BadConfig, key + " must be a boolean, got '" + v + "'");
}

std::vector<int> Config::int_list(const std::string& key) const {
  const std::string& v = raw(key);
  std::vector<int> out;
  if (v.empty()) return out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      out.push_back(std::stoi(trim(item)));
    } catch (...) {
      fail(ErrorKind::BadConfig, key + " must be a comma-separated integer list, got '" + v + "'");
    }
  }
  return out;
}

std::string Config::echo() const {
  std::ostringstream os;
  os << "# resolved configuration (all defaults materialized)\n";
  for (const auto& spec : registry())
    os << spec.key << " = " << values_.at(spec.key) << "  # " << spec.doc << "\n";
  return os.str();
}

}  // namespace ata::io
