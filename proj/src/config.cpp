#include "stc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stc/errors.hpp"

namespace stc::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

struct RawConfig {
  // section -> key -> value; insertion errors on duplicates.
  std::map<std::string, std::map<std::string, std::string>> values;

  void insert(const std::string& section, const std::string& key, const std::string& value,
              bool allow_overwrite) {
    auto& sec = values[section];
    if (!allow_overwrite && sec.contains(key)) {
      throw ConfigError("duplicate key '" + section + "." + key + "'");
    }
    sec[key] = value;
  }
};

RawConfig parse_ini(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.resize(comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      }
      raw.values.try_emplace(section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value, got '" +
                        line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' appears before any [section]");
    }
    raw.insert(section, key, value, /*allow_overwrite=*/false);
  }
  return raw;
}

/// Pulls typed values out of a RawConfig, tracking which keys were consumed
/// so leftovers can be reported as unknown.
class Extractor {
 public:
  explicit Extractor(RawConfig raw) : raw_(std::move(raw)) {}

  bool has(const std::string& section, const std::string& key) const {
    const auto sec = raw_.values.find(section);
    return sec != raw_.values.end() && sec->second.contains(key);
  }

  std::string take(const std::string& section, const std::string& key) {
    consumed_[section].insert(key);
    return raw_.values.at(section).at(key);
  }

  template <typename ParseFn>
  void maybe(const std::string& section, const std::string& key, ParseFn&& parse) {
    if (has(section, key)) parse(take(section, key), section + "." + key);
  }

  void finish() const {
    static const std::vector<std::string> known_sections{"env", "data", "phase1", "train", "run"};
    for (const auto& [section, keys] : raw_.values) {
      if (std::find(known_sections.begin(), known_sections.end(), section) ==
          known_sections.end()) {
        throw ConfigError("unknown section [" + section + "]");
      }
      const auto used = consumed_.find(section);
      for (const auto& [key, value] : keys) {
        if (used == consumed_.end() || !used->second.contains(key)) {
          throw ConfigError("unknown key '" + section + "." + key + "'");
        }
      }
    }
  }

 private:
  RawConfig raw_;
  std::map<std::string, std::set<std::string>> consumed_;
};

double parse_double(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + value + "' is not a number");
  }
}

long long parse_int(const std::string& value, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": '" + value + "' is not an integer");
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (out.empty()) out.push_back("");
  return out;
}

std::vector<float> parse_float_list(const std::string& value, const std::string& where) {
  std::vector<float> out;
  for (const auto& item : split_list(value)) {
    out.push_back(static_cast<float>(parse_double(item, where)));
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string format_float(float v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

std::string format_list(const std::vector<float>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_float(values[i]);
  }
  return out;
}

}  // namespace

envs::Quality ExperimentConfig::parse_quality(const std::string& q) const {
  if (q == "medium") return envs::Quality::kMedium;
  if (q == "expert") return envs::Quality::kExpert;
  throw ConfigError("quality must be 'medium' or 'expert', got '" + q + "'");
}

envs::PointMassConfig ExperimentConfig::source_env() const {
  envs::PointMassConfig env;
  env.gravity_scale = src_gravity_scale;
  env.friction_scale = src_friction_scale;
  env.gain_scale << src_gain_scale[0], src_gain_scale[1];
  env.dt = dt;
  env.episode_len = episode_len;
  env.base_gain = thrust_gain;
  env.start_velocity_bound = start_velocity_bound;
  env.kp = kp;
  env.kd = kd;
  env.validate();
  return env;
}

envs::PointMassConfig ExperimentConfig::target_env() const {
  envs::PointMassConfig env = source_env();
  env.gravity_scale = tar_gravity_scale;
  env.friction_scale = tar_friction_scale;
  env.gain_scale << tar_gain_scale[0], tar_gain_scale[1];
  env.validate();
  return env;
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  out << "[env]\n";
  out << "shift = " << shift << "\n";
  out << "src_gravity_scale = " << format_float(src_gravity_scale) << "\n";
  out << "src_friction_scale = " << format_float(src_friction_scale) << "\n";
  out << "src_gain_scale = " << format_float(src_gain_scale[0]) << ","
      << format_float(src_gain_scale[1]) << "\n";
  out << "tar_gravity_scale = " << format_float(tar_gravity_scale) << "\n";
  out << "tar_friction_scale = " << format_float(tar_friction_scale) << "\n";
  out << "tar_gain_scale = " << format_float(tar_gain_scale[0]) << ","
      << format_float(tar_gain_scale[1]) << "\n";
  out << "dt = " << format_float(dt) << "\n";
  out << "episode_len = " << episode_len << "\n";
  out << "thrust_gain = " << format_float(thrust_gain) << "\n";
  out << "start_velocity_bound = " << format_float(start_velocity_bound) << "\n";
  out << "kp = " << format_float(kp) << "\n";
  out << "kd = " << format_float(kd) << "\n";
  out << "\n[data]\n";
  out << "n_source = " << n_source << "\n";
  out << "n_target = " << n_target << "\n";
  out << "source_quality = " << source_quality << "\n";
  out << "target_quality = " << target_quality << "\n";
  out << "seed = " << data_seed << "\n";
  out << "\n[phase1]\n";
  out << "steps = " << phase1_steps << "\n";
  out << "batch_size = " << phase1_batch_size << "\n";
  out << "holdout_fraction = " << format_float(holdout_fraction) << "\n";
  out << "seed = " << phase1_seed << "\n";
  out << "\n[train]\n";
  out << "gradient_steps = " << gradient_steps << "\n";
  out << "lambda = " << format_list(lambda) << "\n";
  out << "alpha = " << format_list(alpha) << "\n";
  out << "beta = " << format_list(beta) << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "gamma = " << format_float(gamma) << "\n";
  out << "tau = " << format_float(tau) << "\n";
  out << "learning_rate = " << format_float(learning_rate) << "\n";
  out << "hidden = ";
  for (std::size_t i = 0; i < hidden.size(); ++i) out << (i ? "," : "") << hidden[i];
  out << "\n";
  out << "eval_every = " << eval_every << "\n";
  out << "eval_episodes = " << eval_episodes << "\n";
  out << "\n[run]\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << "\n";
  return out.str();
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides) {
  RawConfig raw = parse_ini(text);
  for (const auto& entry : overrides) {
    const auto eq = entry.find('=');
    const auto dot = entry.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + entry + "' must look like section.key=value");
    }
    raw.insert(trim(entry.substr(0, dot)), trim(entry.substr(dot + 1, eq - dot - 1)),
               trim(entry.substr(eq + 1)), /*allow_overwrite=*/true);
  }

  Extractor ex(std::move(raw));
  ExperimentConfig cfg;

  bool tar_gravity_set = false, tar_friction_set = false, tar_gain_set = false;

  ex.maybe("env", "shift", [&](const std::string& v, const std::string& where) {
    static const std::vector<std::string> allowed{"gravity", "friction", "morphology", "none",
                                                  "custom"};
    require(std::find(allowed.begin(), allowed.end(), v) != allowed.end(),
            where + ": must be gravity|friction|morphology|none|custom, got '" + v + "'");
    cfg.shift = v;
  });
  ex.maybe("env", "src_gravity_scale", [&](const std::string& v, const std::string& w) {
    cfg.src_gravity_scale = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("env", "src_friction_scale", [&](const std::string& v, const std::string& w) {
    cfg.src_friction_scale = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("env", "src_gain_scale", [&](const std::string& v, const std::string& w) {
    const auto list = parse_float_list(v, w);
    require(list.size() == 2, w + ": expected two comma-separated values");
    cfg.src_gain_scale = {list[0], list[1]};
  });
  ex.maybe("env", "tar_gravity_scale", [&](const std::string& v, const std::string& w) {
    cfg.tar_gravity_scale = static_cast<float>(parse_double(v, w));
    tar_gravity_set = true;
  });
  ex.maybe("env", "tar_friction_scale", [&](const std::string& v, const std::string& w) {
    cfg.tar_friction_scale = static_cast<float>(parse_double(v, w));
    tar_friction_set = true;
  });
  ex.maybe("env", "tar_gain_scale", [&](const std::string& v, const std::string& w) {
    const auto list = parse_float_list(v, w);
    require(list.size() == 2, w + ": expected two comma-separated values");
    cfg.tar_gain_scale = {list[0], list[1]};
    tar_gain_set = true;
  });
  ex.maybe("env", "dt", [&](const std::string& v, const std::string& w) {
    cfg.dt = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("env", "episode_len", [&](const std::string& v, const std::string& w) {
    cfg.episode_len = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("env", "thrust_gain", [&](const std::string& v, const std::string& w) {
    cfg.thrust_gain = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("env", "start_velocity_bound", [&](const std::string& v, const std::string& w) {
    cfg.start_velocity_bound = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("env", "kp", [&](const std::string& v, const std::string& w) {
    cfg.kp = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("env", "kd", [&](const std::string& v, const std::string& w) {
    cfg.kd = static_cast<float>(parse_double(v, w));
  });

  // Shift preset resolves the target scales not explicitly provided.
  cfg.tar_gravity_scale = tar_gravity_set ? cfg.tar_gravity_scale
                          : cfg.shift == "gravity" ? 0.5f * cfg.src_gravity_scale
                                                   : cfg.src_gravity_scale;
  cfg.tar_friction_scale = tar_friction_set ? cfg.tar_friction_scale
                           : cfg.shift == "friction" ? 0.5f * cfg.src_friction_scale
                                                     : cfg.src_friction_scale;
  if (!tar_gain_set) {
    cfg.tar_gain_scale = cfg.shift == "morphology"
                             ? std::array<float, 2>{0.5f * cfg.src_gain_scale[0],
                                                    cfg.src_gain_scale[1]}
                             : cfg.src_gain_scale;
  }

  ex.maybe("data", "n_source", [&](const std::string& v, const std::string& w) {
    cfg.n_source = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("data", "n_target", [&](const std::string& v, const std::string& w) {
    cfg.n_target = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("data", "source_quality",
           [&](const std::string& v, const std::string&) { cfg.source_quality = v; });
  ex.maybe("data", "target_quality",
           [&](const std::string& v, const std::string&) { cfg.target_quality = v; });
  ex.maybe("data", "seed", [&](const std::string& v, const std::string& w) {
    cfg.data_seed = static_cast<std::uint64_t>(parse_int(v, w));
  });

  ex.maybe("phase1", "steps", [&](const std::string& v, const std::string& w) {
    cfg.phase1_steps = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("phase1", "batch_size", [&](const std::string& v, const std::string& w) {
    cfg.phase1_batch_size = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("phase1", "holdout_fraction", [&](const std::string& v, const std::string& w) {
    cfg.holdout_fraction = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("phase1", "seed", [&](const std::string& v, const std::string& w) {
    cfg.phase1_seed = static_cast<std::uint64_t>(parse_int(v, w));
  });

  ex.maybe("train", "gradient_steps", [&](const std::string& v, const std::string& w) {
    cfg.gradient_steps = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("train", "lambda", [&](const std::string& v, const std::string& w) {
    cfg.lambda = parse_float_list(v, w);
  });
  ex.maybe("train", "alpha", [&](const std::string& v, const std::string& w) {
    cfg.alpha = parse_float_list(v, w);
  });
  ex.maybe("train", "beta", [&](const std::string& v, const std::string& w) {
    cfg.beta = parse_float_list(v, w);
  });
  ex.maybe("train", "batch_size", [&](const std::string& v, const std::string& w) {
    cfg.batch_size = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("train", "gamma", [&](const std::string& v, const std::string& w) {
    cfg.gamma = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("train", "tau", [&](const std::string& v, const std::string& w) {
    cfg.tau = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("train", "learning_rate", [&](const std::string& v, const std::string& w) {
    cfg.learning_rate = static_cast<float>(parse_double(v, w));
  });
  ex.maybe("train", "hidden", [&](const std::string& v, const std::string& w) {
    cfg.hidden.clear();
    for (const auto& item : split_list(v)) {
      cfg.hidden.push_back(static_cast<int>(parse_int(item, w)));
    }
  });
  ex.maybe("train", "eval_every", [&](const std::string& v, const std::string& w) {
    cfg.eval_every = static_cast<int>(parse_int(v, w));
  });
  ex.maybe("train", "eval_episodes", [&](const std::string& v, const std::string& w) {
    cfg.eval_episodes = static_cast<int>(parse_int(v, w));
  });

  ex.maybe("run", "seeds", [&](const std::string& v, const std::string& w) {
    cfg.seeds.clear();
    for (const auto& item : split_list(v)) {
      const long long s = parse_int(item, w);
      require(s >= 0, w + ": seeds must be non-negative");
      cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  });

  ex.finish();

  // Range validation, each failure naming its key.
  require(cfg.src_gravity_scale >= 0.0f && std::isfinite(cfg.src_gravity_scale),
          "env.src_gravity_scale out of range (must be >= 0)");
  require(cfg.tar_gravity_scale >= 0.0f && std::isfinite(cfg.tar_gravity_scale),
          "env.tar_gravity_scale out of range (must be >= 0)");
  require(cfg.src_friction_scale >= 0.0f, "env.src_friction_scale out of range (must be >= 0)");
  require(cfg.tar_friction_scale >= 0.0f, "env.tar_friction_scale out of range (must be >= 0)");
  require(cfg.src_gain_scale[0] >= 0.0f && cfg.src_gain_scale[1] >= 0.0f,
          "env.src_gain_scale out of range (must be >= 0)");
  require(cfg.tar_gain_scale[0] >= 0.0f && cfg.tar_gain_scale[1] >= 0.0f,
          "env.tar_gain_scale out of range (must be >= 0)");
  require(cfg.dt > 0.0f, "env.dt out of range (must be > 0)");
  require(cfg.episode_len >= 1, "env.episode_len out of range (must be >= 1)");
  require(cfg.thrust_gain >= 0.0f, "env.thrust_gain out of range (must be >= 0)");
  require(cfg.start_velocity_bound >= 0.0f,
          "env.start_velocity_bound out of range (must be >= 0)");
  require(cfg.n_source >= 1, "data.n_source out of range (must be >= 1)");
  require(cfg.n_target >= 1, "data.n_target out of range (must be >= 1)");
  cfg.parse_quality(cfg.source_quality);
  cfg.parse_quality(cfg.target_quality);
  require(cfg.phase1_steps >= 1, "phase1.steps out of range (must be >= 1)");
  require(cfg.phase1_batch_size >= 1, "phase1.batch_size out of range (must be >= 1)");
  require(cfg.holdout_fraction >= 0.0f && cfg.holdout_fraction < 1.0f,
          "phase1.holdout_fraction out of range (must be in [0, 1))");
  require(cfg.gradient_steps >= 0, "train.gradient_steps out of range (must be >= 0)");
  require(!cfg.lambda.empty(), "train.lambda must not be empty");
  for (float v : cfg.lambda) {
    require(v >= 0.0f && std::isfinite(v), "train.lambda out of range (must be >= 0)");
  }
  for (float v : cfg.alpha) {
    require(v >= 0.0f && std::isfinite(v), "train.alpha out of range (must be >= 0)");
  }
  for (float v : cfg.beta) {
    require(v >= 0.0f && std::isfinite(v), "train.beta out of range (must be >= 0)");
  }
  require(cfg.batch_size >= 2 && cfg.batch_size % 2 == 0,
          "train.batch_size out of range (must be even and >= 2)");
  require(cfg.gamma >= 0.0f && cfg.gamma < 1.0f, "train.gamma out of range (must be in [0, 1))");
  require(cfg.tau >= 0.0f && cfg.tau <= 1.0f, "train.tau out of range (must be in [0, 1])");
  require(cfg.learning_rate > 0.0f, "train.learning_rate out of range (must be > 0)");
  require(!cfg.hidden.empty(), "train.hidden must not be empty");
  for (int h : cfg.hidden) require(h >= 1, "train.hidden out of range (sizes must be >= 1)");
  require(cfg.eval_every >= 1, "train.eval_every out of range (must be >= 1)");
  require(cfg.eval_episodes >= 1, "train.eval_episodes out of range (must be >= 1)");
  require(!cfg.seeds.empty(), "run.seeds must not be empty");

  return cfg;
}

ExperimentConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
  if (path.empty()) return parse_config_text("", overrides);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), overrides);
}

}  // namespace stc::config
