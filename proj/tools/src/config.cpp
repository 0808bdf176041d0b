#include "cflow_lab/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace cflow::lab {

namespace {

enum class Kind { Int, UInt, Real, Bool, Text, IntList, UIntList, RealList, Choice, ChoiceList };

struct KeyDef {
  const char* section;
  const char* name;
  Kind kind;
  const char* fallback;  // default as text ("" = none / derived)
  const char* choices;   // '|' separated for Choice kinds
  double min = -HUGE_VAL;
};

// clang-format off
const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
    {"experiment", "command", Kind::Choice, "", "simulate|ode|sweep|verify-theorem1|moments-check|asymptotics"},
    {"experiment", "figure", Kind::Text, "", nullptr},
    {"experiment", "output_dir", Kind::Text, "out", nullptr},

    {"run", "N", Kind::Int, "784", nullptr, 1},
    {"run", "M", Kind::Int, "4", nullptr, 1},
    {"run", "K", Kind::Int, "4", nullptr, 1},
    {"run", "activation", Kind::Choice, "erf", "erf|relu|linear|lin"},
    {"run", "eta", Kind::Real, "0.2", nullptr, 0},
    {"run", "eta_w", Kind::Real, "", nullptr, 0},
    {"run", "eta_v", Kind::Real, "", nullptr, 0},
    {"run", "sigma", Kind::Real, "0", nullptr, 0},
    {"run", "kappa", Kind::Real, "0", nullptr, 0},
    {"run", "batch", Kind::Int, "1", nullptr, 1},
    {"run", "mode", Kind::Choice, "scm", "scm|both"},
    {"run", "steps", Kind::Int, "", nullptr, 0},
    {"run", "alpha", Kind::Real, "", nullptr, 0},
    {"run", "seed", Kind::UInt, "0", nullptr},
    {"run", "input", Kind::Choice, "gaussian", "gaussian|fixed|idx"},
    {"run", "P", Kind::Real, "1", nullptr, 1},
    {"run", "idx_path", Kind::Text, "", nullptr},
    {"run", "order", Kind::Choice, "shuffled", "shuffled|sequential"},
    {"run", "init_variance", Kind::Real, "0", nullptr},
    {"run", "v_star", Kind::Real, "1", nullptr},
    {"run", "v_init_std", Kind::Real, "1", nullptr, 0},
    {"run", "teacher", Kind::Choice, "gaussian", "gaussian|orthonormal"},
    {"run", "student_init", Kind::Choice, "random", "random|specialised|denoising"},
    {"run", "surplus_std", Kind::Real, "0.001", nullptr, 0},
    {"run", "record_alpha", Kind::Real, "1", nullptr, 0},
    {"run", "late_fraction", Kind::Real, "0.05", nullptr, 0},
    {"run", "ode_overlay", Kind::Bool, "false", nullptr},

    {"ode", "integrator", Kind::Choice, "euler", "euler|rk4"},
    {"ode", "d_alpha", Kind::Real, "0.001", nullptr, 0},
    {"ode", "alpha_max", Kind::Real, "", nullptr, 0},

    {"sweep", "K", Kind::IntList, "", nullptr, 1},
    {"sweep", "eta", Kind::RealList, "", nullptr, 0},
    {"sweep", "sigma", Kind::RealList, "", nullptr, 0},
    {"sweep", "seed", Kind::UIntList, "", nullptr},

    {"theorem1", "N_list", Kind::IntList, "250,1000,4000", nullptr, 1},
    {"theorem1", "horizon", Kind::Real, "10", nullptr, 0},
    {"theorem1", "seeds", Kind::Int, "10", nullptr, 1},
    {"theorem1", "bootstrap", Kind::Int, "1000", nullptr, 0},
    {"theorem1", "record_alpha", Kind::Real, "0.1", nullptr, 0},

    {"moments", "samples", Kind::Int, "1000000", nullptr, 1000},
    {"moments", "covariances", Kind::Int, "100", nullptr, 1},
    {"moments", "activations", Kind::ChoiceList, "erf,relu,linear", "erf|relu|linear|lin"},

    {"asymptotics", "L", Kind::IntList, "0", nullptr, 0},
    {"asymptotics", "T", Kind::Real, "1", nullptr, 0},
  };
  return table;
}
// clang-format on

std::string full_name(const KeyDef& k) { return std::string(k.section) + "." + k.name; }

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::Config, where + ": " + what);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

const KeyDef* find_key(std::string_view section, std::string_view name) {
  for (const KeyDef& k : key_table()) {
    if (section == k.section && name == k.name) return &k;
  }
  return nullptr;
}

// Bare names prefer [run], then [experiment], then a unique match elsewhere.
const KeyDef* resolve_bare(std::string_view name, const std::string& where) {
  if (const KeyDef* k = find_key("run", name)) return k;
  if (const KeyDef* k = find_key("experiment", name)) return k;
  const KeyDef* hit = nullptr;
  for (const KeyDef& k : key_table()) {
    if (name == k.name) {
      if (hit) fail(where, "key '" + std::string(name) + "' is ambiguous; qualify it with a section");
      hit = &k;
    }
  }
  if (!hit) fail(where, "unknown key '" + std::string(name) + "'");
  return hit;
}

struct Entry {
  std::string value;
  std::string where;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::string t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where, const std::string& key) {
  T value{};
  const char* b = text.data();
  const char* e = b + text.size();
  auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e) {
    fail(where, "'" + key + "' expects " +
                    (std::is_floating_point_v<T> ? std::string("a number")
                                                 : std::string("an integer")) +
                    ", got '" + text + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) fail(where, "'" + key + "' must be finite");
  }
  return value;
}

void check_min(double v, const KeyDef& k, const std::string& where) {
  if (v < k.min) {
    std::ostringstream msg;
    msg << "'" << k.name << "' must be >= " << k.min << ", got " << v;
    fail(where, msg.str());
  }
}

bool choice_ok(const KeyDef& k, const std::string& v) {
  std::istringstream in(k.choices);
  std::string c;
  while (std::getline(in, c, '|')) {
    if (c == v) return true;
  }
  return false;
}

void validate_entry(const KeyDef& k, const Entry& e) {
  const std::string key = k.name;
  switch (k.kind) {
    case Kind::Int: check_min(static_cast<double>(parse_number<std::int64_t>(e.value, e.where, key)), k, e.where); break;
    case Kind::UInt: parse_number<std::uint64_t>(e.value, e.where, key); break;
    case Kind::Real: check_min(parse_number<double>(e.value, e.where, key), k, e.where); break;
    case Kind::Bool: {
      const std::string v = lower(e.value);
      if (v != "true" && v != "false" && v != "1" && v != "0" && v != "yes" && v != "no") {
        fail(e.where, "'" + key + "' expects true/false, got '" + e.value + "'");
      }
      break;
    }
    case Kind::Text: break;
    case Kind::Choice:
      if (!choice_ok(k, lower(e.value))) {
        fail(e.where, "'" + key + "' must be one of " + k.choices + ", got '" + e.value + "'");
      }
      break;
    case Kind::IntList:
    case Kind::UIntList:
    case Kind::RealList:
    case Kind::ChoiceList: {
      const auto items = split_list(e.value);
      if (items.empty()) fail(e.where, "empty list for '" + key + "'");
      for (const std::string& it : items) {
        if (k.kind == Kind::IntList) check_min(static_cast<double>(parse_number<std::int64_t>(it, e.where, key)), k, e.where);
        if (k.kind == Kind::UIntList) parse_number<std::uint64_t>(it, e.where, key);
        if (k.kind == Kind::RealList) check_min(parse_number<double>(it, e.where, key), k, e.where);
        if (k.kind == Kind::ChoiceList && !choice_ok(k, lower(it))) {
          fail(e.where, "'" + key + "' entries must be one of " + k.choices + ", got '" + it + "'");
        }
      }
      break;
    }
  }
}

class Values {
 public:
  void set(const KeyDef& k, Entry e) {
    validate_entry(k, e);
    map_[full_name(k)] = std::move(e);
  }
  bool has(const char* section, const char* name) const {
    return map_.count(std::string(section) + "." + name) > 0;
  }
  const Entry* get(const char* section, const char* name) const {
    auto it = map_.find(std::string(section) + "." + name);
    return it == map_.end() ? nullptr : &it->second;
  }
  std::string text(const char* section, const char* name) const {
    if (const Entry* e = get(section, name)) return e->value;
    return find_key(section, name)->fallback;
  }
  std::string where(const char* section, const char* name) const {
    if (const Entry* e = get(section, name)) return e->where;
    return "default";
  }
  double real(const char* s, const char* n) const { return parse_number<double>(text(s, n), where(s, n), n); }
  std::int64_t integer(const char* s, const char* n) const {
    return parse_number<std::int64_t>(text(s, n), where(s, n), n);
  }
  std::uint64_t uinteger(const char* s, const char* n) const {
    return parse_number<std::uint64_t>(text(s, n), where(s, n), n);
  }
  bool boolean(const char* s, const char* n) const {
    const std::string v = lower(text(s, n));
    return v == "true" || v == "1" || v == "yes";
  }
  template <typename T>
  std::vector<T> list(const char* s, const char* n) const {
    std::vector<T> out;
    for (const std::string& it : split_list(text(s, n))) out.push_back(parse_number<T>(it, where(s, n), n));
    return out;
  }

 private:
  std::map<std::string, Entry> map_;
};

void apply_line(Values& values, const std::string& section, const std::string& line,
                const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) fail(where, "expected key = value, got '" + line + "'");
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  if (key.empty()) fail(where, "missing key before '='");

  const KeyDef* def = nullptr;
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    def = find_key(key.substr(0, dot), key.substr(dot + 1));
    if (!def) fail(where, "unknown key '" + key + "'");
  } else if (!section.empty()) {
    def = find_key(section, key);
    if (!def) fail(where, "unknown key '" + key + "' in section [" + section + "]");
  } else {
    def = resolve_bare(key, where);
  }
  values.set(*def, Entry{value, where});
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

}  // namespace

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Ode: return "ode";
    case Command::Sweep: return "sweep";
    case Command::VerifyTheorem1: return "verify-theorem1";
    case Command::MomentsCheck: return "moments-check";
    case Command::Asymptotics: return "asymptotics";
  }
  return "?";
}

std::optional<Command> parse_command(std::string_view name) {
  for (Command c : {Command::Simulate, Command::Ode, Command::Sweep, Command::VerifyTheorem1,
                    Command::MomentsCheck, Command::Asymptotics}) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

ExperimentSpec parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  Values values;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(where, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      const bool known = std::any_of(key_table().begin(), key_table().end(),
                                     [&](const KeyDef& k) { return section == k.section; });
      if (!known) fail(where, "unknown section [" + section + "]");
      continue;
    }
    apply_line(values, section, line, where);
  }
  for (const std::string& o : overrides) apply_line(values, "", trim(o), "override '" + o + "'");

  ExperimentSpec spec;
  if (!values.has("experiment", "command")) fail("config", "missing required key 'command'");
  spec.command = *parse_command(lower(values.text("experiment", "command")));
  spec.figure = values.text("experiment", "figure");
  if (spec.figure.empty()) spec.figure = std::string(to_string(spec.command));
  spec.output_dir = values.text("experiment", "output_dir");

  TrainConfig& t = spec.train;
  t.N = values.integer("run", "N");
  t.M = values.integer("run", "M");
  t.K = values.integer("run", "K");
  t.activation = parse_activation(lower(values.text("run", "activation")));
  const double eta = values.real("run", "eta");
  t.eta_w = values.has("run", "eta_w") ? values.real("run", "eta_w") : eta;
  t.eta_v = values.has("run", "eta_v") ? values.real("run", "eta_v") : eta;
  t.sigma = values.real("run", "sigma");
  t.kappa = values.real("run", "kappa");
  t.batch = values.integer("run", "batch");
  t.mode = lower(values.text("run", "mode")) == "both" ? TrainMode::BothLayers : TrainMode::SCM;
  if (values.has("run", "steps") && values.has("run", "alpha")) {
    fail(values.where("run", "alpha"), "give either 'steps' or 'alpha', not both");
  }
  if (values.has("run", "steps")) {
    t.steps = values.integer("run", "steps");
  } else if (values.has("run", "alpha")) {
    t.steps = std::llround(values.real("run", "alpha") * static_cast<double>(t.N));
  } else {
    t.steps = 200 * t.N;
  }
  t.seed = values.uinteger("run", "seed");
  const std::string input = lower(values.text("run", "input"));
  const EpochOrder order =
      lower(values.text("run", "order")) == "sequential" ? EpochOrder::Sequential : EpochOrder::Shuffled;
  if (input == "fixed") {
    t.input_source = FixedSetSpec{values.real("run", "P"), order};
  } else if (input == "idx") {
    if (!values.has("run", "idx_path")) fail("config", "input = idx needs 'idx_path'");
    t.input_source = IdxFileSpec{values.text("run", "idx_path"), order};
  }
  t.init_variance = values.real("run", "init_variance");
  t.v_star = values.real("run", "v_star");
  t.v_init_std = values.real("run", "v_init_std");
  t.teacher_init =
      lower(values.text("run", "teacher")) == "orthonormal" ? TeacherInit::Orthonormal : TeacherInit::Gaussian;
  const std::string init = lower(values.text("run", "student_init"));
  spec.student_init = init == "specialised" ? StudentInit::Specialised
                      : init == "denoising" ? StudentInit::Denoising
                                            : StudentInit::Random;
  spec.surplus_std = values.real("run", "surplus_std");
  spec.record_alpha = values.real("run", "record_alpha");
  if (!(spec.record_alpha > 0.0)) fail(values.where("run", "record_alpha"), "'record_alpha' must be > 0");
  spec.late_fraction = values.real("run", "late_fraction");
  if (!(spec.late_fraction > 0.0 && spec.late_fraction <= 1.0)) {
    fail(values.where("run", "late_fraction"), "'late_fraction' must lie in (0, 1]");
  }
  spec.ode_overlay = values.boolean("run", "ode_overlay");

  spec.integrator = lower(values.text("ode", "integrator")) == "rk4" ? Integrator::RK4 : Integrator::Euler;
  spec.d_alpha = values.real("ode", "d_alpha");
  if (!(spec.d_alpha > 0.0)) fail(values.where("ode", "d_alpha"), "'d_alpha' must be > 0");
  spec.alpha_max = values.has("ode", "alpha_max")
                       ? values.real("ode", "alpha_max")
                       : static_cast<double>(t.steps) / static_cast<double>(t.N);

  spec.sweep.K = values.has("sweep", "K") ? values.list<std::int64_t>("sweep", "K")
                                          : std::vector<std::int64_t>{t.K};
  spec.sweep.eta = values.has("sweep", "eta") ? values.list<double>("sweep", "eta")
                                              : std::vector<double>{t.eta_w};
  spec.sweep.sigma = values.has("sweep", "sigma") ? values.list<double>("sweep", "sigma")
                                                  : std::vector<double>{t.sigma};
  spec.sweep.seed = values.has("sweep", "seed") ? values.list<std::uint64_t>("sweep", "seed")
                                                : std::vector<std::uint64_t>{t.seed};

  spec.theorem1.N_list = values.list<std::int64_t>("theorem1", "N_list");
  spec.theorem1.horizon = values.real("theorem1", "horizon");
  spec.theorem1.seeds = static_cast<int>(values.integer("theorem1", "seeds"));
  spec.theorem1.bootstrap = static_cast<int>(values.integer("theorem1", "bootstrap"));
  spec.theorem1.record_alpha = values.real("theorem1", "record_alpha");
  if (!(spec.theorem1.record_alpha > 0.0)) {
    fail(values.where("theorem1", "record_alpha"), "'record_alpha' must be > 0");
  }

  spec.moments.samples = values.integer("moments", "samples");
  spec.moments.covariances = static_cast<int>(values.integer("moments", "covariances"));
  spec.moments.activations.clear();
  for (const std::string& a : split_list(values.text("moments", "activations"))) {
    spec.moments.activations.push_back(parse_activation(lower(a)));
  }

  spec.asymptotics.L = values.list<std::int64_t>("asymptotics", "L");
  spec.asymptotics.T = values.real("asymptotics", "T");

  if (spec.command == Command::VerifyTheorem1) {
    const auto& ns = spec.theorem1.N_list;
    if (ns.size() < 3) fail(values.where("theorem1", "N_list"), "verify-theorem1 needs at least 3 values of N");
    const auto [lo, hi] = std::minmax_element(ns.begin(), ns.end());
    if (*hi < 10 * *lo) fail(values.where("theorem1", "N_list"), "N values must span at least one decade");
  }

  try {
    t = validated(t);
  } catch (const Error& e) {
    fail("config", e.what());
  }

  for (const KeyDef& k : key_table()) {
    const std::string name = full_name(k);
    if (const Entry* e = values.get(k.section, k.name)) {
      spec.resolved[name] = e->value;
    } else if (k.fallback[0] != '\0') {
      spec.resolved[name] = k.fallback;
    }
  }
  spec.resolved["run.eta_w"] = join(std::vector<double>{t.eta_w});
  spec.resolved["run.eta_v"] = join(std::vector<double>{t.eta_v});
  spec.resolved["run.steps"] = std::to_string(t.steps);
  spec.resolved["ode.alpha_max"] = join(std::vector<double>{spec.alpha_max});
  spec.resolved["sweep.K"] = join(spec.sweep.K);
  spec.resolved["sweep.eta"] = join(spec.sweep.eta);
  spec.resolved["sweep.sigma"] = join(spec.sweep.sigma);
  spec.resolved["sweep.seed"] = join(spec.sweep.seed);
  return spec;
}

std::string describe_keys() {
  std::ostringstream out;
  std::string section;
  for (const KeyDef& k : key_table()) {
    if (section != k.section) {
      section = k.section;
      out << "[" << section << "]\n";
    }
    out << "  " << k.name;
    if (k.choices) out << " (" << k.choices << ")";
    if (k.fallback[0] != '\0') out << " = " << k.fallback;
    out << "\n";
  }
  return out.str();
}

}  // namespace cflow::lab
