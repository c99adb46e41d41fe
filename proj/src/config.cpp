#include "vidcorr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vidcorr {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated integer list, got '" + s + "'");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

// A settable field: parse from text + render back.
struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

struct Schema {
  // Insertion-ordered sections and keys so serialization is stable.
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, Field>>>> sections;

  std::vector<std::pair<std::string, Field>>& section(const std::string& name) {
    for (auto& [n, fields] : sections) {
      if (n == name) return fields;
    }
    sections.emplace_back(name, std::vector<std::pair<std::string, Field>>{});
    return sections.back().second;
  }

  Field* find(const std::string& section_name, const std::string& key) {
    for (auto& [n, fields] : sections) {
      if (n != section_name) continue;
      for (auto& [k, f] : fields) {
        if (k == key) return &f;
      }
    }
    return nullptr;
  }
};

void add_u64(Schema& s, const std::string& sec, const std::string& key, std::uint64_t& ref) {
  s.section(sec).emplace_back(key, Field{[&ref](const std::string& v) { ref = std::stoull(v); },
                                         [&ref] { return std::to_string(ref); }});
}

void add_int(Schema& s, const std::string& sec, const std::string& key, int& ref) {
  s.section(sec).emplace_back(key, Field{[&ref](const std::string& v) { ref = std::stoi(v); },
                                         [&ref] { return std::to_string(ref); }});
}

void add_i64(Schema& s, const std::string& sec, const std::string& key, std::int64_t& ref) {
  s.section(sec).emplace_back(key, Field{[&ref](const std::string& v) { ref = std::stoll(v); },
                                         [&ref] { return std::to_string(ref); }});
}

void add_size(Schema& s, const std::string& sec, const std::string& key, std::size_t& ref) {
  s.section(sec).emplace_back(key, Field{[&ref](const std::string& v) { ref = std::stoull(v); },
                                         [&ref] { return std::to_string(ref); }});
}

void add_double(Schema& s, const std::string& sec, const std::string& key, double& ref) {
  s.section(sec).emplace_back(key, Field{[&ref](const std::string& v) { ref = std::stod(v); },
                                         [&ref] { return format_double(ref); }});
}

void add_bool(Schema& s, const std::string& sec, const std::string& key, bool& ref) {
  s.section(sec).emplace_back(key, Field{[&ref](const std::string& v) { ref = parse_bool(v); },
                                         [&ref] { return ref ? std::string("true") : std::string("false"); }});
}

void add_int_list(Schema& s, const std::string& sec, const std::string& key,
                  std::vector<int>& ref) {
  s.section(sec).emplace_back(key,
                              Field{[&ref](const std::string& v) { ref = parse_int_list(v); },
                                    [&ref] { return format_int_list(ref); }});
}

void add_synth(Schema& s, const std::string& sec, SynthConfig& c) {
  add_i64(s, sec, "height", c.height);
  add_i64(s, sec, "width", c.width);
  add_int(s, sec, "length", c.length);
  add_int(s, sec, "sprite_count", c.sprite_count);
  add_int(s, sec, "texture_classes", c.texture_classes);
  add_int(s, sec, "sprite_min_size", c.sprite_min_size);
  add_int(s, sec, "sprite_max_size", c.sprite_max_size);
  add_int(s, sec, "motion_amplitude", c.motion_amplitude);
  add_double(s, sec, "texture_scale", c.texture_scale);
  add_bool(s, sec, "subpixel", c.subpixel);
  add_bool(s, sec, "occluder", c.occluder);
}

Schema build_schema(RunConfig& c) {
  Schema s;
  add_u64(s, "run", "seed", c.seed);

  add_int(s, "encoder", "in_channels", c.encoder.in_channels);
  add_int_list(s, "encoder", "stage_channels", c.encoder.stage_channels);
  add_int_list(s, "encoder", "stage_total_strides", c.encoder.stage_total_strides);
  add_u64(s, "encoder", "init_seed", c.encoder.init_seed);

  add_synth(s, "data", c.data);
  add_int(s, "data", "train_clips", c.train_clips);
  add_u64(s, "data", "seed", c.data_seed);

  add_int(s, "spatial", "steps", c.spatial.steps);
  add_int(s, "spatial", "batch", c.spatial.batch);
  add_size(s, "spatial", "queue_capacity", c.spatial.queue_capacity);
  add_double(s, "spatial", "tau_c", c.spatial.tau_c);
  add_double(s, "spatial", "key_momentum", c.spatial.key_momentum);
  add_i64(s, "spatial", "proj_hidden", c.spatial.proj_hidden);
  add_i64(s, "spatial", "proj_dim", c.spatial.proj_dim);
  add_double(s, "spatial", "min_crop_scale", c.spatial.augmentation.min_crop_scale);
  add_double(s, "spatial", "flip_prob", c.spatial.augmentation.flip_prob);
  add_double(s, "spatial", "jitter", c.spatial.augmentation.jitter);
  add_double(s, "spatial", "lr", c.spatial.optimizer.lr);

  add_int(s, "temporal", "steps", c.temporal.steps);
  add_int(s, "temporal", "pairs_per_step", c.temporal.pairs_per_step);
  add_double(s, "temporal", "alpha", c.temporal.weights.alpha);
  add_double(s, "temporal", "beta", c.temporal.weights.beta);
  add_double(s, "temporal", "tau", c.temporal.tau);
  add_int_list(s, "temporal", "window_sizes", c.temporal.window_sizes);
  s.section("temporal").emplace_back(
      "entropy", Field{[&c](const std::string& v) {
                         if (v == "as_written") {
                           c.temporal.entropy = EntropyConvention::AsWritten;
                         } else if (v == "shannon") {
                           c.temporal.entropy = EntropyConvention::Shannon;
                         } else {
                           throw ConfigError("entropy must be as_written or shannon, got '" + v + "'");
                         }
                       },
                       [&c] {
                         return c.temporal.entropy == EntropyConvention::AsWritten
                                    ? std::string("as_written")
                                    : std::string("shannon");
                       }});
  s.section("temporal").emplace_back(
      "threshold", Field{[&c](const std::string& v) {
                           if (v.rfind("quantile:", 0) == 0) {
                             c.temporal.threshold = ThresholdSpec::quantile(std::stod(v.substr(9)));
                           } else if (v.rfind("absolute:", 0) == 0) {
                             c.temporal.threshold = ThresholdSpec::absolute(std::stod(v.substr(9)));
                           } else {
                             throw ConfigError("threshold must be quantile:<q> or absolute:<t>");
                           }
                         },
                         [&c] {
                           const auto& t = c.temporal.threshold;
                           return (t.kind == ThresholdSpec::Kind::Quantile ? "quantile:" : "absolute:") +
                                  format_double(t.value);
                         }});
  add_bool(s, "temporal", "entropy_selection", c.temporal.entropy_selection);
  add_bool(s, "temporal", "pyramid", c.temporal.pyramid);
  add_bool(s, "temporal", "local_distillation", c.temporal.local_distillation);
  add_double(s, "temporal", "dropout_prob", c.temporal.dropout_prob);
  add_int(s, "temporal", "max_gap", c.temporal.max_gap);
  add_double(s, "temporal", "lr", c.temporal.optimizer.lr);

  add_double(s, "lab", "l_center", c.temporal.lab.l_center);
  add_double(s, "lab", "l_scale", c.temporal.lab.l_scale);
  add_double(s, "lab", "a_center", c.temporal.lab.a_center);
  add_double(s, "lab", "a_scale", c.temporal.lab.a_scale);
  add_double(s, "lab", "b_center", c.temporal.lab.b_center);
  add_double(s, "lab", "b_scale", c.temporal.lab.b_scale);

  add_int(s, "propagation", "r_eval", c.propagation.r_eval);
  add_int(s, "propagation", "top_k", c.propagation.top_k);
  add_double(s, "propagation", "tau", c.propagation.tau);
  add_int(s, "propagation", "memory", c.propagation.memory_size);

  add_int(s, "eval", "clips", c.eval_clips);
  add_int(s, "eval", "clip_length", c.eval_clip_length);
  add_u64(s, "eval", "seed", c.eval_seed);
  add_synth(s, "eval", c.eval_data);

  return s;
}

}  // namespace

RunConfig::RunConfig() {
  data.occluder = true;
  eval_data = data;
  eval_data.length = eval_clip_length;
  finalize();
}

void RunConfig::finalize() {
  encoder.validate();
  spatial.texture_classes = data.texture_classes;
  spatial.image_size = data.height;
  spatial.seed = seed ^ 0xa5a5a5a5ULL;
  spatial.optimizer.total_steps = spatial.steps;
  spatial.optimizer.cosine = true;
  temporal.seed = seed ^ 0x5a5a5a5aULL;
  temporal.optimizer.total_steps = temporal.steps;
  temporal.optimizer.cosine = true;
  spatial.lab = temporal.lab;
  propagation.lab = temporal.lab;
  propagation.tau = temporal.tau;
  eval_data.length = eval_clip_length;
}

std::string RunConfig::serialize() const {
  auto& self = const_cast<RunConfig&>(*this);
  Schema schema = build_schema(self);
  std::string out;
  for (const auto& [name, fields] : schema.sections) {
    out += "[" + name + "]\n";
    for (const auto& [key, field] : fields) {
      out += key + " = " + field.get() + "\n";
    }
    out += "\n";
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  Schema schema = build_schema(c);
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    Field* field = schema.find(section, key);
    if (!field) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + section +
                        "." + key + "'");
    }
    try {
      field->set(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" + section +
                        "." + key + "': " + e.what());
    }
  }
  c.finalize();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
  const auto dotpos = key.find('.');
  if (dotpos == std::string::npos) {
    throw ConfigError("override key must be section.key, got '" + key + "'");
  }
  Schema schema = build_schema(*this);
  Field* field = schema.find(key.substr(0, dotpos), key.substr(dotpos + 1));
  if (!field) throw ConfigError("unknown override key '" + key + "'");
  try {
    field->set(value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("bad value for override '" + key + "': " + e.what());
  }
  finalize();
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path);
  out << serialize();
}

}  // namespace vidcorr
