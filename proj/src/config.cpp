#include "cplab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "cplab/error.hpp"
#include "cplab/rng.hpp"

namespace cplab {

ExperimentKind parse_experiment_kind(std::string_view name) {
  if (name == "train") return ExperimentKind::kTrain;
  if (name == "surface") return ExperimentKind::kSurface;
  if (name == "boundary") return ExperimentKind::kBoundary;
  if (name == "ablation-target") return ExperimentKind::kAblationTarget;
  if (name == "ablation-bn") return ExperimentKind::kAblationBn;
  throw ConfigError("experiment", "unknown experiment '" + std::string(name) +
                                      "' (train, surface, boundary, ablation-target, ablation-bn)");
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTrain: return "train";
    case ExperimentKind::kSurface: return "surface";
    case ExperimentKind::kBoundary: return "boundary";
    case ExperimentKind::kAblationTarget: return "ablation-target";
    case ExperimentKind::kAblationBn: return "ablation-bn";
  }
  return "train";
}

void set_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.train.seed = derive_seed(seed, "train");
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  set_seed(c, 0);
  TrainConfig& t = c.train;
  t.sgd.base_lr = 0.01;
  t.sgd.epochs = 30;
  t.sgd.milestones = {10, 20};
  t.sgd.predictor_lr = 0.001;
  t.losses.cpl.target_bn = true;
  t.model.predictor.hidden_bn = true;
  for (const auto& name : loss_part_names()) t.losses.weights[name] = 1.0;
  switch (kind) {
    case ExperimentKind::kTrain:
      c.data.fixture = "separable";
      t.losses.enabled = {"ce"};
      t.sampler.p = 2;
      t.sampler.k = 16;
      break;
    case ExperimentKind::kSurface:
      c.data.fixture = "two-class";
      t.losses.enabled = {"cpl"};
      break;
    case ExperimentKind::kBoundary:
      c.data.fixture = "three-class";
      t.losses.enabled = {"ce", "cpl"};
      t.model.hidden = {32, 32};
      t.model.embedding_dim = 2;
      t.sampler.p = 3;
      t.sampler.k = 32;
      t.sgd.epochs = 150;
      t.sgd.milestones = {100};
      break;
    case ExperimentKind::kAblationTarget:
    case ExperimentKind::kAblationBn:
      c.data.fixture = "retrieval";
      t.losses.enabled = {"ce", "triplet", "cpl"};
      t.sampler.p = 8;
      t.sampler.k = 4;
      t.sgd.base_lr = 0.001;
      break;
  }
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename Int>
std::string join(const Int& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

std::string join_names(const std::vector<std::string>& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += v;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(v);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

template <typename Int>
std::vector<Int> to_uint_list(const std::string& key, const std::string& v) {
  std::vector<Int> out;
  for (const auto& item : split_list(v)) out.push_back(static_cast<Int>(to_uint(key, item)));
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
};

#define CPLAB_DOUBLE(name, member)                                                     \
  Field {                                                                              \
    name, [](const ExperimentConfig& c) { return fmt(c.member); },                     \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); } \
  }
#define CPLAB_UINT(name, member)                                                       \
  Field {                                                                              \
    name, [](const ExperimentConfig& c) { return std::to_string(c.member); },          \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {         \
          c.member = static_cast<decltype(c.member)>(to_uint(k, v));                   \
        }                                                                              \
  }
#define CPLAB_BOOL(name, member)                                                       \
  Field {                                                                              \
    name, [](const ExperimentConfig& c) { return fmt(c.member); },                     \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); } \
  }
#define CPLAB_STRING(name, member)                                                     \
  Field {                                                                              \
    name, [](const ExperimentConfig& c) { return c.member; },                          \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.member = v; } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f{
        CPLAB_UINT("seed", seed),
        CPLAB_UINT("train.seed", train.seed),
        CPLAB_STRING("output.dir", output_dir),
        CPLAB_STRING("data.source", data.source),
        CPLAB_STRING("data.fixture", data.fixture),
        CPLAB_STRING("data.path", data.path),
        CPLAB_UINT("data.per_class", data.per_class),
        CPLAB_UINT("data.dim", data.dim),
        Field{"data.cifar.classes", [](const ExperimentConfig& c) { return join(c.data.cifar_classes); },
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                auto list = to_uint_list<int>(k, v);
                c.data.cifar_classes = std::set<int>(list.begin(), list.end());
              }},
        CPLAB_UINT("data.cifar.max_per_class", data.cifar_max_per_class),
        CPLAB_UINT("data.cifar.downsample", data.cifar_downsample),
        CPLAB_UINT("data.retrieval.identities", data.retrieval.identities),
        CPLAB_UINT("data.retrieval.per_identity", data.retrieval.per_identity),
        CPLAB_UINT("data.retrieval.dim", data.retrieval.dim),
        CPLAB_UINT("data.retrieval.train_identities", data.train_identities),
        Field{"model.hidden", [](const ExperimentConfig& c) { return join(c.train.model.hidden); },
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.model.hidden = to_uint_list<std::size_t>(k, v);
              }},
        CPLAB_UINT("model.embedding_dim", train.model.embedding_dim),
        CPLAB_BOOL("predictor.enabled", train.losses.cpl_predictor),
        Field{"predictor.depth", [](const ExperimentConfig& c) { return std::to_string(c.train.model.predictor.depth); },
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.model.predictor.depth = static_cast<int>(to_uint(k, v));
              }},
        CPLAB_UINT("predictor.hidden", train.model.predictor.hidden),
        CPLAB_BOOL("predictor.bn.hidden", train.model.predictor.hidden_bn),
        CPLAB_BOOL("predictor.bn.output", train.model.predictor.output_bn),
        CPLAB_BOOL("predictor.identity_init", train.model.identity_init_predictor),
        Field{"loss.enabled", [](const ExperimentConfig& c) { return join_names(c.train.losses.enabled); },
              [](ExperimentConfig& c, const std::string&, const std::string& v) {
                c.train.losses.enabled = split_list(v);
              }},
    };
    for (const auto& name : loss_part_names()) {
      f.push_back(Field{"loss." + name + ".weight",
                        [name](const ExperimentConfig& c) {
                          auto it = c.train.losses.weights.find(name);
                          return fmt(it == c.train.losses.weights.end() ? 1.0 : it->second);
                        },
                        [name](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.train.losses.weights[name] = to_double(k, v);
                        }});
    }
    std::vector<Field> rest{
        CPLAB_DOUBLE("loss.triplet.margin", train.losses.margins.triplet_margin),
        CPLAB_DOUBLE("loss.circle.margin", train.losses.margins.circle_margin),
        CPLAB_DOUBLE("loss.circle.scale", train.losses.margins.circle_scale),
        CPLAB_DOUBLE("loss.lifted.margin", train.losses.margins.lifted_margin),
        CPLAB_DOUBLE("loss.rll.alpha", train.losses.margins.rll_alpha),
        CPLAB_DOUBLE("loss.rll.margin", train.losses.margins.rll_margin),
        Field{"loss.cpl.target_mode", [](const ExperimentConfig& c) { return std::string(to_string(c.train.losses.cpl.mode)); },
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                try {
                  c.train.losses.cpl.mode = parse_target_mode(v);
                } catch (const ContractError& e) {
                  throw ConfigError(k, e.what());
                }
              }},
        CPLAB_BOOL("loss.cpl.target_bn", train.losses.cpl.target_bn),
        CPLAB_DOUBLE("sgd.lr", train.sgd.base_lr),
        Field{"sgd.milestones", [](const ExperimentConfig& c) { return join(c.train.sgd.milestones); },
              [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.train.sgd.milestones = to_uint_list<std::size_t>(k, v);
              }},
        CPLAB_DOUBLE("sgd.decay", train.sgd.decay),
        CPLAB_UINT("sgd.epochs", train.sgd.epochs),
        CPLAB_DOUBLE("sgd.momentum", train.sgd.momentum),
        CPLAB_DOUBLE("sgd.predictor_lr", train.sgd.predictor_lr),
        CPLAB_UINT("sampler.p", train.sampler.p),
        CPLAB_UINT("sampler.k", train.sampler.k),
        CPLAB_BOOL("sampler.resample", train.sampler.allow_resample),
        CPLAB_UINT("snapshot.every", train.snapshot_every),
        CPLAB_STRING("surface.loss", surface_loss),
        CPLAB_UINT("refit.steps", refit.steps),
        CPLAB_DOUBLE("refit.lr", refit.lr),
        CPLAB_UINT("refit.hidden", refit_hidden),
        CPLAB_BOOL("eval.normalize", eval_normalize),
        CPLAB_DOUBLE("boundary.band", boundary_band),
    };
    f.insert(f.end(), rest.begin(), rest.end());
    return f;
  }();
  return table;
}

#undef CPLAB_DOUBLE
#undef CPLAB_UINT
#undef CPLAB_BOOL
#undef CPLAB_STRING

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::map<std::string, std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, std::size_t> seen;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
    if (seen.count(key)) throw ConfigError(key, "given more than once");
    seen[key] = lineno;
    entries.emplace_back(std::move(key), std::move(value));
  }
  for (const auto& [key, value] : overrides) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.first == key; });
    if (it != entries.end()) it->second = value;
    else entries.emplace_back(key, value);
  }

  auto kind_it = std::find_if(entries.begin(), entries.end(), [](const auto& e) { return e.first == "experiment"; });
  if (kind_it == entries.end()) throw ConfigError("experiment", "missing (required)");
  ExperimentConfig cfg = default_config(parse_experiment_kind(kind_it->second));

  bool train_seed_given = false;
  for (const auto& [key, value] : entries) {
    if (key == "experiment") continue;
    train_seed_given = train_seed_given || key == "train.seed";
    const auto& table = fields();
    auto f = std::find_if(table.begin(), table.end(), [&](const Field& x) { return x.key == key; });
    if (f == table.end()) throw ConfigError(key, "unknown key");
    f->set(cfg, key, value);
  }
  if (!train_seed_given) cfg.train.seed = derive_seed(cfg.seed, "train");
  validate_config(cfg);
  return cfg;
}

std::string echo_config(const ExperimentConfig& cfg, bool include_output) {
  std::string out = "experiment = " + std::string(to_string(cfg.kind)) + "\n";
  for (const auto& f : fields()) {
    if (!include_output && f.key == "output.dir") continue;
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void validate_config(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const auto& d = cfg.data;
  if (d.source != "fixture" && d.source != "csv" && d.source != "cifar")
    throw ConfigError("data.source", "must be fixture, csv or cifar");
  if (d.source == "fixture") {
    const auto names = fixture_names();
    if (std::find(names.begin(), names.end(), d.fixture) == names.end())
      throw ConfigError("data.fixture", "unknown fixture '" + d.fixture + "'");
  }
  if (d.source != "fixture" && d.path.empty()) throw ConfigError("data.path", "required for " + d.source + " data");
  for (int c : d.cifar_classes)
    if (c < 0 || c > 9) throw ConfigError("data.cifar.classes", "class ids must be in 0..9");
  if (d.cifar_downsample == 0 || 32 % d.cifar_downsample != 0)
    throw ConfigError("data.cifar.downsample", "must divide 32");
  if (d.retrieval.identities < 4) throw ConfigError("data.retrieval.identities", "must be >= 4");
  if (d.retrieval.per_identity < 4) throw ConfigError("data.retrieval.per_identity", "must be >= 4");
  if (d.train_identities < 2 || d.train_identities + 2 > d.retrieval.identities)
    throw ConfigError("data.retrieval.train_identities", "must leave >= 2 identities on each side");

  if (t.sampler.k < 2) throw ConfigError("sampler.k", "K must be >= 2 (CPL and triplet need a same-class partner)");
  if (t.sampler.p < 2) throw ConfigError("sampler.p", "P must be >= 2 (losses need another class in the batch)");
  if (t.model.embedding_dim == 0) throw ConfigError("model.embedding_dim", "must be >= 1");
  for (std::size_t h : t.model.hidden)
    if (h == 0) throw ConfigError("model.hidden", "layer widths must be >= 1");
  const auto& p = t.model.predictor;
  if (p.depth != 2 && p.depth != 4) throw ConfigError("predictor.depth", "must be 2 or 4");
  if (p.hidden == 0) throw ConfigError("predictor.hidden", "must be >= 1");
  if (t.model.identity_init_predictor && (p.hidden_bn || p.output_bn || p.hidden < 2 * t.model.embedding_dim))
    throw ConfigError("predictor.identity_init", "needs no predictor BN and hidden >= 2 * embedding_dim");

  const auto& known = loss_part_names();
  if (t.losses.enabled.empty()) throw ConfigError("loss.enabled", "at least one loss must be enabled");
  for (const auto& name : t.losses.enabled)
    if (std::find(known.begin(), known.end(), name) == known.end())
      throw ConfigError("loss.enabled", "unknown loss '" + name + "'");
  for (const auto& [name, w] : t.losses.weights)
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss." + name + ".weight", "must be finite and >= 0");
  const auto& m = t.losses.margins;
  if (m.triplet_margin < 0.0) throw ConfigError("loss.triplet.margin", "must be >= 0");
  if (m.circle_margin < 0.0) throw ConfigError("loss.circle.margin", "must be >= 0");
  if (!(m.circle_scale > 0.0)) throw ConfigError("loss.circle.scale", "gamma must be > 0");
  if (m.lifted_margin < 0.0) throw ConfigError("loss.lifted.margin", "must be >= 0");
  if (m.rll_margin < 0.0) throw ConfigError("loss.rll.margin", "must be >= 0");
  if (!(m.rll_alpha > m.rll_margin)) throw ConfigError("loss.rll.alpha", "α must exceed m");

  const auto& s = t.sgd;
  if (!(s.base_lr > 0.0)) throw ConfigError("sgd.lr", "must be > 0");
  if (!(s.decay > 0.0)) throw ConfigError("sgd.decay", "must be > 0");
  if (s.epochs == 0) throw ConfigError("sgd.epochs", "must be >= 1");
  if (s.momentum < 0.0) throw ConfigError("sgd.momentum", "must be >= 0");
  for (std::size_t i = 0; i < s.milestones.size(); ++i) {
    if (s.milestones[i] >= s.epochs) throw ConfigError("sgd.milestones", "milestones must be < epochs");
    if (i > 0 && s.milestones[i] <= s.milestones[i - 1])
      throw ConfigError("sgd.milestones", "must be strictly increasing");
  }
  if (cfg.surface_loss != "center" && cfg.surface_loss != "cpl")
    throw ConfigError("surface.loss", "must be center or cpl");
  if (cfg.refit_hidden < 2 * 2) throw ConfigError("refit.hidden", "must be >= 4");
  if (!(cfg.refit.lr > 0.0)) throw ConfigError("refit.lr", "must be > 0");
  if (!(cfg.boundary_band > 0.0 && cfg.boundary_band < 1.0))
    throw ConfigError("boundary.band", "must be in (0, 1)");
  if (cfg.kind == ExperimentKind::kBoundary && t.model.embedding_dim != 2)
    throw ConfigError("model.embedding_dim", "boundary experiment needs a 2-D embedding");
  if (cfg.kind == ExperimentKind::kBoundary && !t.losses.uses("cpl"))
    throw ConfigError("loss.enabled", "boundary experiment trains with cpl");
}

std::string config_hash(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

}  // namespace cplab
