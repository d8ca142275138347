#include "gcl/config.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <fstream>
#include <sstream>

#include "gcl/error.hpp"
#include "gcl/generators.hpp"

namespace gcl {

namespace {

using nlohmann::json;

std::string lowered(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string join(const std::vector<std::string>& keys) {
  std::string out;
  for (size_t i = 0; i < keys.size(); ++i) {
    if (i) out += ", ";
    out += keys[i];
  }
  return out;
}

// Rejects keys outside the section's schema, naming the level and the
// accepted keys.
void require_keys(const json& j, const std::string& level,
                  const std::vector<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigError("config: unknown key '" + it.key() + "' under '" +
                        level + "'; valid keys: " + join(allowed));
}

void require_object(const json& j, const std::string& level) {
  if (!j.is_object())
    throw ConfigError("config: '" + level + "' must be a JSON object");
}

template <typename T>
T jget(const json& j, const std::string& level, const std::string& key,
       const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + level + "." + key +
                      "' has the wrong type");
  }
}

// Enum field: read a string (or keep the default) and parse it, converting
// any parse failure into a ConfigError.
template <typename Parse>
auto jenum(const json& j, const std::string& level, const std::string& key,
           const std::string& fallback, Parse parse) {
  std::string name = jget<std::string>(j, level, key, fallback);
  try {
    return parse(name);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + level + "." + key + ": " +
                      e.what());
  }
}

// ---- flag value parsers ----------------------------------------------

double flag_double(const std::string& path, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: --" + path + " expects a number, got '" + v +
                    "'");
}

int flag_int(const std::string& path, const std::string& v) {
  try {
    size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos == v.size() && n >= INT_MIN && n <= INT_MAX)
      return static_cast<int>(n);
  } catch (const std::exception&) {
  }
  throw ConfigError("config: --" + path + " expects an integer, got '" + v +
                    "'");
}

std::uint64_t flag_uint(const std::string& path, const std::string& v) {
  try {
    if (!v.empty() && v[0] != '-') {
      size_t pos = 0;
      unsigned long long n = std::stoull(v, &pos);
      if (pos == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config: --" + path +
                    " expects a non-negative integer, got '" + v + "'");
}

bool flag_bool(const std::string& path, const std::string& v) {
  std::string s = lowered(v);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config: --" + path + " expects true or false, got '" +
                    v + "'");
}

template <typename Parse>
auto flag_enum(const std::string& path, const std::string& v, Parse parse) {
  try {
    return parse(v);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: --") + path + ": " + e.what());
  }
}

// ---- composite mode names --------------------------------------------

CompositeMode parse_compose(const std::string& name) {
  std::string s = lowered(name);
  if (s == "all") return CompositeMode::compose_all;
  if (s == "choice") return CompositeMode::random_choice;
  throw ValidationError("unknown compose mode '" + name +
                        "'; expected all or choice");
}

std::string compose_name(CompositeMode m) {
  return m == CompositeMode::compose_all ? "all" : "choice";
}

// ---- per-section serialization ----------------------------------------

const std::vector<std::string> kAugmentorFields = {
    "prob", "alpha", "k_steps", "eps_threshold", "walk_budget"};

json augmentor_to_json(const Augmentor& a) {
  return json{{"scheme", scheme_name(a.scheme)},
              {"prob", a.prob},
              {"alpha", a.alpha},
              {"k_steps", a.k_steps},
              {"eps_threshold", a.eps_threshold},
              {"walk_budget", a.walk_budget}};
}

Augmentor augmentor_from_json(const json& j, const std::string& level) {
  require_object(j, level);
  std::vector<std::string> allowed = kAugmentorFields;
  allowed.insert(allowed.begin(), "scheme");
  require_keys(j, level, allowed);
  if (!j.contains("scheme"))
    throw ConfigError("config: '" + level + "' needs a 'scheme'");
  Augmentor a;
  a.scheme = jenum(j, level, "scheme", "Identity", parse_scheme);
  a.prob = jget(j, level, "prob", a.prob);
  a.alpha = jget(j, level, "alpha", a.alpha);
  a.k_steps = jget(j, level, "k_steps", a.k_steps);
  a.eps_threshold = jget(j, level, "eps_threshold", a.eps_threshold);
  a.walk_budget = jget(j, level, "walk_budget", a.walk_budget);
  return a;
}

json composite_to_json(const Composite& c) {
  if (c.children.size() == 1 && c.mode == CompositeMode::compose_all)
    return augmentor_to_json(c.children.front());
  json children = json::array();
  for (const Augmentor& a : c.children) children.push_back(augmentor_to_json(a));
  return json{{"compose", compose_name(c.mode)},
              {"k", c.k},
              {"children", children}};
}

Composite composite_from_json(const json& j, const std::string& level) {
  require_object(j, level);
  Composite c;
  if (j.contains("scheme")) {  // flat single-augmentor form
    c.children = {augmentor_from_json(j, level)};
    return c;
  }
  if (!j.contains("children") || !j.at("children").is_array() ||
      j.at("children").empty())
    throw ConfigError("config: '" + level +
                      "' needs either a 'scheme' or a nonempty 'children' "
                      "array");
  require_keys(j, level, {"compose", "k", "children"});
  c.mode = jenum(j, level, "compose", "all", parse_compose);
  c.k = jget(j, level, "k", 1);
  int i = 0;
  for (const json& cj : j.at("children"))
    c.children.push_back(augmentor_from_json(
        cj, level + ".children[" + std::to_string(i++) + "]"));
  return c;
}

const std::vector<std::string> kSbmKeys = {
    "synth", "n_per_block", "n_blocks", "p_in", "p_out", "feature_dim",
    "noise_sigma"};
const std::vector<std::string> kGraphsKeys = {
    "synth", "n_graphs", "classes", "size_min", "size_max"};

json dataset_to_json(const DatasetSpec& d) {
  if (!d.path.empty()) return json{{"path", d.path}};
  if (d.synth == SynthKind::sbm)
    return json{{"synth", "sbm"},
                {"n_per_block", d.n_per_block},
                {"n_blocks", d.n_blocks},
                {"p_in", d.p_in},
                {"p_out", d.p_out},
                {"feature_dim", d.feature_dim},
                {"noise_sigma", d.noise_sigma}};
  return json{{"synth", "graphs"},
              {"n_graphs", d.n_graphs},
              {"classes", d.classes},
              {"size_min", d.size_min},
              {"size_max", d.size_max}};
}

DatasetSpec dataset_from_json(const json& j) {
  require_object(j, "dataset");
  DatasetSpec d;
  if (j.contains("path")) {
    require_keys(j, "dataset", {"path"});
    d.path = jget<std::string>(j, "dataset", "path", "");
    if (d.path.empty())
      throw ConfigError("config: 'dataset.path' must be a nonempty string");
    return d;
  }
  d.synth = jenum(j, "dataset", "synth", "sbm", parse_synth_kind);
  if (d.synth == SynthKind::sbm) {
    require_keys(j, "dataset", kSbmKeys);
    d.n_per_block = jget(j, "dataset", "n_per_block", d.n_per_block);
    d.n_blocks = jget(j, "dataset", "n_blocks", d.n_blocks);
    d.p_in = jget(j, "dataset", "p_in", d.p_in);
    d.p_out = jget(j, "dataset", "p_out", d.p_out);
    d.feature_dim = jget(j, "dataset", "feature_dim", d.feature_dim);
    d.noise_sigma = jget(j, "dataset", "noise_sigma", d.noise_sigma);
  } else {
    require_keys(j, "dataset", kGraphsKeys);
    d.n_graphs = jget(j, "dataset", "n_graphs", d.n_graphs);
    d.classes = jget(j, "dataset", "classes", d.classes);
    d.size_min = jget(j, "dataset", "size_min", d.size_min);
    d.size_max = jget(j, "dataset", "size_max", d.size_max);
  }
  return d;
}

json encoder_to_json(const EncoderSpec& e) {
  return json{{"kind", encoder_kind_name(e.kind)},
              {"layers", e.layers},
              {"hidden_dim", e.hidden_dim},
              {"activation", activation_name(e.activation)},
              {"use_batchnorm", e.use_batchnorm}};
}

EncoderSpec encoder_from_json(const json& j, const EncoderSpec& defaults) {
  require_object(j, "encoder");
  require_keys(j, "encoder",
               {"kind", "layers", "hidden_dim", "activation", "use_batchnorm"});
  EncoderSpec e = defaults;
  e.kind = jenum(j, "encoder", "kind", encoder_kind_name(e.kind),
                 parse_encoder_kind);
  e.layers = jget(j, "encoder", "layers", e.layers);
  e.hidden_dim = jget(j, "encoder", "hidden_dim", e.hidden_dim);
  e.activation = jenum(j, "encoder", "activation",
                       activation_name(e.activation), parse_activation);
  e.use_batchnorm = jget(j, "encoder", "use_batchnorm", e.use_batchnorm);
  return e;
}

json mode_to_json(const ModeSpec& m) {
  return json{{"mode", mode_name(m.mode)},
              {"branch", branch_name(m.branch)},
              {"intra_view_negatives", m.intra_view_negatives}};
}

ModeSpec mode_from_json(const json& j) {
  require_object(j, "mode");
  require_keys(j, "mode", {"mode", "branch", "intra_view_negatives"});
  ModeSpec m;
  m.mode = jenum(j, "mode", "mode", mode_name(m.mode), parse_mode);
  m.branch = jenum(j, "mode", "branch", branch_name(m.branch), parse_branch);
  m.intra_view_negatives =
      jget(j, "mode", "intra_view_negatives", m.intra_view_negatives);
  return m;
}

json objective_to_json(const ObjectiveSpec& o) {
  json j{{"loss", objective_name(o.kind)},
         {"tau", o.tau},
         {"epsilon", o.epsilon},
         {"mu", o.mu},
         {"gamma", o.gamma},
         {"ema_decay", o.ema_decay},
         {"bn",
          {{"encoder", o.bn.encoder},
           {"projector", o.bn.projector},
           {"predictor", o.bn.predictor}}}};
  j["lambda"] = o.lambda ? json(*o.lambda) : json(nullptr);
  return j;
}

ObjectiveSpec objective_from_json(const json& j) {
  require_object(j, "objective");
  require_keys(j, "objective",
               {"loss", "tau", "epsilon", "lambda", "mu", "gamma", "ema_decay",
                "bn"});
  ObjectiveSpec o;
  o.kind = jenum(j, "objective", "loss", objective_name(o.kind),
                 parse_objective);
  o.tau = jget(j, "objective", "tau", o.tau);
  o.epsilon = jget(j, "objective", "epsilon", o.epsilon);
  if (j.contains("lambda") && !j.at("lambda").is_null())
    o.lambda = jget(j, "objective", "lambda", 0.0);
  o.mu = jget(j, "objective", "mu", o.mu);
  o.gamma = jget(j, "objective", "gamma", o.gamma);
  o.ema_decay = jget(j, "objective", "ema_decay", o.ema_decay);
  if (j.contains("bn")) {
    const json& b = j.at("bn");
    require_object(b, "objective.bn");
    require_keys(b, "objective.bn", {"encoder", "projector", "predictor"});
    o.bn.encoder = jget(b, "objective.bn", "encoder", o.bn.encoder);
    o.bn.projector = jget(b, "objective.bn", "projector", o.bn.projector);
    o.bn.predictor = jget(b, "objective.bn", "predictor", o.bn.predictor);
  }
  return o;
}

json miner_to_json(const MinerSpec& m) {
  return json{{"kind", miner_name(m.kind)}, {"tau_plus", m.tau_plus},
              {"beta", m.beta},             {"s", m.s},
              {"k", m.k},                   {"l", m.l},
              {"u", m.u}};
}

MinerSpec miner_from_json(const json& j) {
  require_object(j, "miner");
  require_keys(j, "miner", {"kind", "tau_plus", "beta", "s", "k", "l", "u"});
  MinerSpec m;
  m.kind = jenum(j, "miner", "kind", miner_name(m.kind), parse_miner);
  m.tau_plus = jget(j, "miner", "tau_plus", m.tau_plus);
  m.beta = jget(j, "miner", "beta", m.beta);
  m.s = jget(j, "miner", "s", m.s);
  m.k = jget(j, "miner", "k", m.k);
  m.l = jget(j, "miner", "l", m.l);
  m.u = jget(j, "miner", "u", m.u);
  return m;
}

json optimizer_to_json(const OptimizerSpec& o) {
  return json{{"lr", o.lr},
              {"weight_decay", o.weight_decay},
              {"epochs", o.epochs},
              {"seed", o.seed}};
}

OptimizerSpec optimizer_from_json(const json& j) {
  require_object(j, "optimizer");
  require_keys(j, "optimizer", {"lr", "weight_decay", "epochs", "seed"});
  OptimizerSpec o;
  o.lr = jget(j, "optimizer", "lr", o.lr);
  o.weight_decay = jget(j, "optimizer", "weight_decay", o.weight_decay);
  o.epochs = jget(j, "optimizer", "epochs", o.epochs);
  o.seed = jget(j, "optimizer", "seed", o.seed);
  return o;
}

json eval_to_json(const EvalSpec& e) {
  return json{{"n_splits", e.n_splits}, {"l2_grid", e.l2_grid}};
}

EvalSpec eval_from_json(const json& j) {
  require_object(j, "eval");
  require_keys(j, "eval", {"n_splits", "l2_grid"});
  EvalSpec e;
  e.n_splits = jget(j, "eval", "n_splits", e.n_splits);
  e.l2_grid = jget(j, "eval", "l2_grid", e.l2_grid);
  return e;
}

// ---- override setters --------------------------------------------------

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> segs;
  std::string cur;
  for (char c : path) {
    if (c == ':') {
      if (cur.empty())
        throw ConfigError("config: override path '" + path +
                          "' has an empty segment");
      segs.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (cur.empty())
    throw ConfigError("config: override path '" + path +
                      "' has an empty segment");
  segs.push_back(cur);
  return segs;
}

void set_augmentor_field(Augmentor& a, const std::string& field,
                         const std::string& path, const std::string& value) {
  if (field == "prob")
    a.prob = flag_double(path, value);
  else if (field == "alpha")
    a.alpha = flag_double(path, value);
  else if (field == "k_steps")
    a.k_steps = flag_int(path, value);
  else if (field == "eps_threshold")
    a.eps_threshold = flag_double(path, value);
  else if (field == "walk_budget")
    a.walk_budget = flag_int(path, value);
  else
    throw ConfigError("config: unknown key '" + field + "' in '" + path +
                      "'; valid keys: " + join(kAugmentorFields));
}

void set_augmentor(Composite& c, const std::string& name,
                   const std::vector<std::string>& rest,
                   const std::string& path, const std::string& value) {
  auto sole_child = [&]() -> Augmentor& {
    if (c.children.size() != 1)
      throw ConfigError("config: " + name + " is a composite of " +
                        std::to_string(c.children.size()) +
                        " children; address them by scheme, e.g. " + name +
                        ":ER:prob");
    return c.children.front();
  };
  const std::string& key = rest.front();
  if (rest.size() == 1) {
    if (key == "compose") {
      c.mode = flag_enum(path, value, parse_compose);
    } else if (key == "k") {
      c.k = flag_int(path, value);
    } else if (key == "children") {
      throw ConfigError("config: --" + path +
                        " is list-valued; set it in the config file");
    } else if (key == "scheme") {
      sole_child().scheme = flag_enum(path, value, parse_scheme);
    } else if (std::find(kAugmentorFields.begin(), kAugmentorFields.end(),
                         key) != kAugmentorFields.end()) {
      set_augmentor_field(sole_child(), key, path, value);
    } else {
      throw ConfigError("config: unknown key '" + key + "' under '" + name +
                        "'; valid keys: scheme, " + join(kAugmentorFields) +
                        ", compose, k, or <scheme>:<field>");
    }
    return;
  }
  if (rest.size() == 2) {
    Scheme scheme;
    try {
      scheme = parse_scheme(key);
    } catch (const std::exception&) {
      throw ConfigError("config: unknown key '" + key + "' under '" + name +
                        "'; valid keys: scheme, " + join(kAugmentorFields) +
                        ", compose, k, or <scheme>:<field>");
    }
    std::vector<Augmentor*> matches;
    for (Augmentor& a : c.children)
      if (a.scheme == scheme) matches.push_back(&a);
    if (matches.empty()) {
      std::vector<std::string> present;
      for (const Augmentor& a : c.children)
        present.push_back(scheme_name(a.scheme));
      throw ConfigError("config: " + name + " has no " + scheme_name(scheme) +
                        " child; present schemes: " + join(present));
    }
    if (matches.size() > 1)
      throw ConfigError("config: " + name + " holds " +
                        std::to_string(matches.size()) + " " +
                        scheme_name(scheme) +
                        " children; the override is ambiguous");
    set_augmentor_field(*matches.front(), rest[1], path, value);
    return;
  }
  throw ConfigError("config: override path '" + path + "' is too deep for '" +
                    name + "'");
}

void set_dataset(DatasetSpec& d, const std::vector<std::string>& rest,
                 const std::string& path, const std::string& value) {
  if (rest.size() != 1)
    throw ConfigError("config: dataset keys are flat; '" + path +
                      "' is too deep");
  const std::string& key = rest.front();
  if (key == "path") {
    d.path = value;
    return;
  }
  if (key == "synth") {
    d.synth = flag_enum(path, value, parse_synth_kind);
    d.path.clear();  // switching to a generator drops the file source
    return;
  }
  if (key == "classes")
    throw ConfigError("config: --" + path +
                      " is list-valued; set it in the config file");
  if (!d.is_synth())
    throw ConfigError("config: dataset is file-backed ('" + d.path +
                      "'); set --dataset:synth first");
  bool sbm = d.synth == SynthKind::sbm;
  const std::vector<std::string>& family = sbm ? kSbmKeys : kGraphsKeys;
  if (std::find(family.begin(), family.end(), key) == family.end())
    throw ConfigError("config: unknown key '" + key + "' for the " +
                      synth_kind_name(d.synth) +
                      " dataset; valid keys: path, " + join(family));
  if (key == "n_per_block")
    d.n_per_block = flag_int(path, value);
  else if (key == "n_blocks")
    d.n_blocks = flag_int(path, value);
  else if (key == "p_in")
    d.p_in = flag_double(path, value);
  else if (key == "p_out")
    d.p_out = flag_double(path, value);
  else if (key == "feature_dim")
    d.feature_dim = flag_int(path, value);
  else if (key == "noise_sigma")
    d.noise_sigma = flag_double(path, value);
  else if (key == "n_graphs")
    d.n_graphs = flag_int(path, value);
  else if (key == "size_min")
    d.size_min = flag_int(path, value);
  else if (key == "size_max")
    d.size_max = flag_int(path, value);
}

void set_objective(ObjectiveSpec& o, const std::vector<std::string>& rest,
                   const std::string& path, const std::string& value) {
  const std::string valid =
      "loss, tau, epsilon, lambda, mu, gamma, ema_decay, bn:encoder, "
      "bn:projector, bn:predictor, or <loss>:<field>";
  const std::string& key = rest.front();
  if (key == "bn") {
    if (rest.size() != 2 ||
        (rest[1] != "encoder" && rest[1] != "projector" &&
         rest[1] != "predictor"))
      throw ConfigError(
          "config: '" + path +
          "': bn takes one of encoder, projector, predictor");
    bool b = flag_bool(path, value);
    if (rest[1] == "encoder")
      o.bn.encoder = b;
    else if (rest[1] == "projector")
      o.bn.projector = b;
    else
      o.bn.predictor = b;
    return;
  }
  if (rest.size() == 1) {
    if (key == "loss")
      o.kind = flag_enum(path, value, parse_objective);
    else if (key == "tau")
      o.tau = flag_double(path, value);
    else if (key == "epsilon")
      o.epsilon = flag_double(path, value);
    else if (key == "lambda")
      o.lambda = flag_double(path, value);
    else if (key == "mu")
      o.mu = flag_double(path, value);
    else if (key == "gamma")
      o.gamma = flag_double(path, value);
    else if (key == "ema_decay")
      o.ema_decay = flag_double(path, value);
    else
      throw ConfigError("config: unknown key '" + key +
                        "' under 'objective'; valid keys: " + valid);
    return;
  }
  // Loss-scoped form, e.g. obj:infonce:tau — asserts the configured loss.
  Objective scoped;
  try {
    scoped = parse_objective(key);
  } catch (const std::exception&) {
    throw ConfigError("config: unknown key '" + key +
                      "' under 'objective'; valid keys: " + valid);
  }
  if (scoped != o.kind)
    throw ConfigError("config: '" + path + "' addresses the " +
                      objective_name(scoped) +
                      " loss but the objective is " + objective_name(o.kind) +
                      "; set --obj:loss first");
  set_objective(o, {rest.begin() + 1, rest.end()}, path, value);
}

void set_encoder(EncoderSpec& e, const std::vector<std::string>& rest,
                 const std::string& path, const std::string& value) {
  if (rest.size() != 1)
    throw ConfigError("config: encoder keys are flat; '" + path +
                      "' is too deep");
  const std::string& key = rest.front();
  if (key == "kind")
    e.kind = flag_enum(path, value, parse_encoder_kind);
  else if (key == "layers")
    e.layers = flag_int(path, value);
  else if (key == "hidden_dim")
    e.hidden_dim = flag_int(path, value);
  else if (key == "activation")
    e.activation = flag_enum(path, value, parse_activation);
  else if (key == "use_batchnorm")
    e.use_batchnorm = flag_bool(path, value);
  else
    throw ConfigError(
        "config: unknown key '" + key +
        "' under 'encoder'; valid keys: kind, layers, hidden_dim, "
        "activation, use_batchnorm");
}

void set_mode(ModeSpec& m, const std::vector<std::string>& rest,
              const std::string& path, const std::string& value) {
  if (rest.size() != 1)
    throw ConfigError("config: mode keys are flat; '" + path +
                      "' is too deep");
  const std::string& key = rest.front();
  if (key == "mode")
    m.mode = flag_enum(path, value, parse_mode);
  else if (key == "branch")
    m.branch = flag_enum(path, value, parse_branch);
  else if (key == "intra_view_negatives")
    m.intra_view_negatives = flag_bool(path, value);
  else
    throw ConfigError("config: unknown key '" + key +
                      "' under 'mode'; valid keys: mode, branch, "
                      "intra_view_negatives");
}

void set_miner(MinerSpec& m, const std::vector<std::string>& rest,
               const std::string& path, const std::string& value) {
  if (rest.size() != 1)
    throw ConfigError("config: miner keys are flat; '" + path +
                      "' is too deep");
  const std::string& key = rest.front();
  if (key == "kind")
    m.kind = flag_enum(path, value, parse_miner);
  else if (key == "tau_plus")
    m.tau_plus = flag_double(path, value);
  else if (key == "beta")
    m.beta = flag_double(path, value);
  else if (key == "s")
    m.s = flag_int(path, value);
  else if (key == "k")
    m.k = flag_int(path, value);
  else if (key == "l")
    m.l = flag_double(path, value);
  else if (key == "u")
    m.u = flag_double(path, value);
  else
    throw ConfigError("config: unknown key '" + key +
                      "' under 'miner'; valid keys: kind, tau_plus, beta, "
                      "s, k, l, u");
}

void set_optimizer(OptimizerSpec& o, const std::vector<std::string>& rest,
                   const std::string& path, const std::string& value) {
  if (rest.size() != 1)
    throw ConfigError("config: optimizer keys are flat; '" + path +
                      "' is too deep");
  const std::string& key = rest.front();
  if (key == "lr")
    o.lr = flag_double(path, value);
  else if (key == "weight_decay")
    o.weight_decay = flag_double(path, value);
  else if (key == "epochs")
    o.epochs = flag_int(path, value);
  else if (key == "seed")
    o.seed = flag_uint(path, value);
  else
    throw ConfigError("config: unknown key '" + key +
                      "' under 'optimizer'; valid keys: lr, weight_decay, "
                      "epochs, seed");
}

void set_eval(EvalSpec& e, const std::vector<std::string>& rest,
              const std::string& path, const std::string& value) {
  if (rest.size() != 1)
    throw ConfigError("config: eval keys are flat; '" + path +
                      "' is too deep");
  const std::string& key = rest.front();
  if (key == "n_splits")
    e.n_splits = flag_int(path, value);
  else if (key == "l2_grid")
    throw ConfigError("config: --" + path +
                      " is list-valued; set it in the config file");
  else
    throw ConfigError("config: unknown key '" + key +
                      "' under 'eval'; valid keys: n_splits, l2_grid");
}

}  // namespace

SynthKind parse_synth_kind(const std::string& name) {
  std::string s = lowered(name);
  if (s == "sbm") return SynthKind::sbm;
  if (s == "graphs") return SynthKind::graphs;
  throw ValidationError("unknown synth dataset '" + name +
                        "'; expected sbm or graphs");
}

std::string synth_kind_name(SynthKind k) {
  return k == SynthKind::sbm ? "sbm" : "graphs";
}

int DatasetSpec::known_num_graphs() const {
  if (!is_synth()) return -1;
  return synth == SynthKind::sbm ? 1 : n_graphs;
}

void DatasetSpec::validate() const {
  if (!is_synth()) return;  // file contents are validated at load time
  if (synth == SynthKind::sbm) {
    if (n_per_block < 1 || n_blocks < 1)
      throw ConfigError("config: dataset block sizes must be positive");
    if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
      throw ConfigError("config: dataset edge probabilities must lie in [0,1]");
    if (feature_dim < 1)
      throw ConfigError("config: dataset feature_dim must be positive");
    if (noise_sigma < 0.0)
      throw ConfigError("config: dataset noise_sigma must be non-negative");
  } else {
    if (n_graphs < 1)
      throw ConfigError("config: dataset n_graphs must be positive");
    if (classes.empty())
      throw ConfigError("config: dataset classes must be nonempty");
    for (const std::string& c : classes) {
      try {
        parse_family(c);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config: dataset classes: ") + e.what());
      }
    }
    if (size_min < 1 || size_max < size_min)
      throw ConfigError(
          "config: dataset graph sizes need 1 <= size_min <= size_max");
  }
}

void OptimizerSpec::validate() const {
  if (!(lr > 0.0)) throw ConfigError("config: optimizer.lr must be positive");
  if (weight_decay < 0.0)
    throw ConfigError("config: optimizer.weight_decay must be non-negative");
  if (epochs < 0)
    throw ConfigError("config: optimizer.epochs must be non-negative");
}

void EvalSpec::validate() const {
  if (n_splits < 1)
    throw ConfigError("config: eval.n_splits must be positive");
  if (l2_grid.empty())
    throw ConfigError("config: eval.l2_grid must be nonempty");
  for (double l2 : l2_grid)
    if (!(l2 >= 0.0))
      throw ConfigError("config: eval.l2_grid entries must be non-negative");
}

ExperimentConfig::ExperimentConfig() {
  encoder.hidden_dim = 256;
  augmentor1.children = {Augmentor{}};
  augmentor2.children = {Augmentor{}};
}

void check_mode_graph_count(const ModeSpec& mode, int num_graphs) {
  if (num_graphs < 1)
    throw ValidationError("check_mode_graph_count: dataset holds no graphs");
  if (mode.mode == Mode::GG && num_graphs < 2)
    throw ConfigError(
        "config rule global-global-multi-graph: global-global contrast "
        "compares member graphs and needs a multi-graph dataset");
  if (mode.mode == Mode::GL && mode.branch == Branch::dual && num_graphs < 2)
    throw ConfigError(
        "config rule cross-scale-negatives: dual-branch global-local "
        "contrast draws negatives from other member graphs; a single-graph "
        "dataset needs branch = single");
}

void ExperimentConfig::validate() const {
  dataset.validate();
  augmentor1.validate();
  augmentor2.validate();
  // input_dim is filled from the dataset at trial time; 0 means deferred.
  EncoderSpec enc_check = encoder;
  if (enc_check.input_dim == 0) enc_check.input_dim = 1;
  enc_check.validate();
  objective.validate();
  miner.validate();
  optimizer.validate();
  eval.validate();

  bool cross_scale = mode.mode == Mode::GL;
  if (cross_scale && (objective.kind == Objective::barlow_twins ||
                      objective.kind == Objective::vicreg))
    throw ConfigError(
        "config rule same-scale-covariance: " +
        objective_name(objective.kind) +
        " computes feature covariances over aligned same-scale batches and "
        "cannot pair with the global-local mode");
  if (mode.branch == Branch::single && !cross_scale)
    throw ConfigError(
        "config rule single-branch-global-local: single-branch contrast "
        "draws negatives by corruption and applies only to the global-local "
        "mode");
  if (objective.kind == Objective::bootstrap && mode.branch == Branch::single)
    throw ConfigError(
        "config rule bootstrap-dual-branch: the bootstrap objective trains "
        "online and target branches over two augmented views and requires "
        "branch = dual");
  if (mode.intra_view_negatives && cross_scale)
    throw ConfigError(
        "config rule intra-view-same-scale: intra-view negatives extend the "
        "same-scale candidate set; the global-local mode has no intra-view "
        "pairs");
  if (miner.kind != Miner::none && !needs_negatives(objective.kind))
    throw ConfigError(
        "config rule miner-needs-negatives: negative mining requires an "
        "objective that consumes negative samples; " +
        objective_name(objective.kind) + " is negative-sample-free");
  if ((miner.kind == Miner::dcl || miner.kind == Miner::hbnm) &&
      objective.kind != Objective::infonce)
    throw ConfigError(
        "config rule estimator-family: DCL and HBNM reweight the infonce "
        "estimator; they require objective loss = infonce, not " +
        objective_name(objective.kind));
  if (dataset.is_synth())
    check_mode_graph_count(mode, dataset.known_num_graphs());
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  return json{{"dataset", dataset_to_json(config.dataset)},
              {"augmentor1", composite_to_json(config.augmentor1)},
              {"augmentor2", composite_to_json(config.augmentor2)},
              {"encoder", encoder_to_json(config.encoder)},
              {"readout", json{{"kind", readout_kind_name(config.readout.kind)}}},
              {"mode", mode_to_json(config.mode)},
              {"objective", objective_to_json(config.objective)},
              {"miner", miner_to_json(config.miner)},
              {"optimizer", optimizer_to_json(config.optimizer)},
              {"eval", eval_to_json(config.eval)}};
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  require_object(j, "config");
  require_keys(j, "config",
               {"dataset", "augmentor1", "augmentor2", "encoder", "readout",
                "mode", "objective", "miner", "optimizer", "eval"});
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
  if (j.contains("augmentor1"))
    c.augmentor1 = composite_from_json(j.at("augmentor1"), "augmentor1");
  if (j.contains("augmentor2"))
    c.augmentor2 = composite_from_json(j.at("augmentor2"), "augmentor2");
  if (j.contains("encoder"))
    c.encoder = encoder_from_json(j.at("encoder"), c.encoder);
  if (j.contains("readout")) {
    const json& r = j.at("readout");
    require_object(r, "readout");
    require_keys(r, "readout", {"kind"});
    c.readout.kind = jenum(r, "readout", "kind",
                           readout_kind_name(c.readout.kind),
                           parse_readout_kind);
  }
  if (j.contains("mode")) c.mode = mode_from_json(j.at("mode"));
  if (j.contains("objective"))
    c.objective = objective_from_json(j.at("objective"));
  if (j.contains("miner")) c.miner = miner_from_json(j.at("miner"));
  if (j.contains("optimizer"))
    c.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: failed to parse '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write '" + path + "'");
  out << config_to_json(config).dump(2) << "\n";
}

void apply_override(ExperimentConfig& config, const std::string& path,
                    const std::string& value) {
  std::vector<std::string> segs = split_path(path);
  const std::string& head = segs.front();
  std::vector<std::string> rest(segs.begin() + 1, segs.end());
  const std::string sections =
      "dataset, augmentor1, augmentor2, encoder, readout, mode, objective "
      "(alias obj), miner, optimizer, eval";
  if (rest.empty())
    throw ConfigError("config: override path '" + path +
                      "' needs a field after '" + head +
                      "'; valid sections: " + sections);
  if (head == "dataset")
    set_dataset(config.dataset, rest, path, value);
  else if (head == "augmentor1")
    set_augmentor(config.augmentor1, "augmentor1", rest, path, value);
  else if (head == "augmentor2")
    set_augmentor(config.augmentor2, "augmentor2", rest, path, value);
  else if (head == "encoder")
    set_encoder(config.encoder, rest, path, value);
  else if (head == "readout") {
    if (rest.size() != 1 || rest.front() != "kind")
      throw ConfigError("config: unknown key under 'readout'; valid keys: "
                        "kind");
    config.readout.kind = flag_enum(path, value, parse_readout_kind);
  } else if (head == "mode")
    set_mode(config.mode, rest, path, value);
  else if (head == "objective" || head == "obj")
    set_objective(config.objective, rest, path, value);
  else if (head == "miner")
    set_miner(config.miner, rest, path, value);
  else if (head == "optimizer")
    set_optimizer(config.optimizer, rest, path, value);
  else if (head == "eval")
    set_eval(config.eval, rest, path, value);
  else
    throw ConfigError("config: unknown section '" + head +
                      "'; valid sections: " + sections);
}

std::vector<std::pair<std::string, std::string>> parse_override_flags(
    const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& tok = args[i];
    if (tok.rfind("--", 0) != 0 || tok.size() <= 2)
      throw ConfigError("config: expected an override flag, got '" + tok +
                        "'");
    std::string body = tok.substr(2);
    size_t eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    if (i + 1 >= args.size() || args[i + 1].rfind("--", 0) == 0)
      throw ConfigError("config: flag '--" + body + "' is missing a value");
    out.emplace_back(body, args[++i]);
  }
  return out;
}

}  // namespace gcl
