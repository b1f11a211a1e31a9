#include "demo/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <variant>

namespace demo {

double OptimizerSettings::effective_beta() const {
  if (beta) return *beta;
  return kind == "demo" ? 0.999 : 0.9;
}

double OptimizerSettings::effective_weight_decay() const {
  if (weight_decay) return *weight_decay;
  return kind == "adamw" ? 0.1 : 0.0;
}

namespace {

struct Position {
  std::size_t line = 0;
  std::size_t column = 0;
};

using Value = std::variant<bool, long long, double, std::string>;

enum class Type { kBool, kInt, kReal, kString };

const char* type_name(Type t) {
  switch (t) {
    case Type::kBool: return "a boolean";
    case Type::kInt: return "an integer";
    case Type::kReal: return "a real number";
    case Type::kString: return "a quoted string";
  }
  return "?";
}

struct Field {
  std::string section;
  std::string key;
  Type type;
  std::function<void(RunConfig&, const Value&)> set;
  std::function<std::optional<std::string>(const RunConfig&)> show;
};

std::string show_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <class Member>
Field size_field(std::string sec, std::string key, Member member) {
  return Field{sec, key, Type::kInt,
               [member](RunConfig& c, const Value& v) {
                 const long long x = std::get<long long>(v);
                 if (x < 0) throw ConfigError("value must be non-negative");
                 std::invoke(member, c) = static_cast<std::size_t>(x);
               },
               [member](const RunConfig& c) -> std::optional<std::string> {
                 return std::to_string(std::invoke(member, c));
               }};
}

template <class Member>
Field real_field(std::string sec, std::string key, Member member) {
  return Field{sec, key, Type::kReal,
               [member](RunConfig& c, const Value& v) {
                 std::invoke(member, c) = std::holds_alternative<long long>(v)
                                              ? static_cast<double>(std::get<long long>(v))
                                              : std::get<double>(v);
               },
               [member](const RunConfig& c) -> std::optional<std::string> {
                 const auto& x = std::invoke(member, c);
                 if constexpr (std::is_same_v<std::decay_t<decltype(x)>, std::optional<double>>) {
                   if (!x) return std::nullopt;
                   return show_real(*x);
                 } else {
                   return show_real(x);
                 }
               }};
}

template <class Member>
Field string_field(std::string sec, std::string key, Member member,
                   std::vector<std::string> allowed = {}) {
  return Field{sec, key, Type::kString,
               [member, allowed](RunConfig& c, const Value& v) {
                 const auto& s = std::get<std::string>(v);
                 if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
                   std::string options;
                   for (const auto& a : allowed) options += (options.empty() ? "" : ", ") + a;
                   throw ConfigError("\"" + s + "\" is not one of: " + options);
                 }
                 std::invoke(member, c) = s;
               },
               [member](const RunConfig& c) -> std::optional<std::string> {
                 return quote(std::invoke(member, c));
               }};
}

template <class Member>
Field bool_field(std::string sec, std::string key, Member member) {
  return Field{sec, key, Type::kBool,
               [member](RunConfig& c, const Value& v) { std::invoke(member, c) = std::get<bool>(v); },
               [member](const RunConfig& c) -> std::optional<std::string> {
                 return std::invoke(member, c) ? "true" : "false";
               }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(string_field("model", "kind", [](auto& c) -> auto& { return c.model.kind; },
                             {"quadratic", "linear", "logistic", "mlp"}));
    f.push_back(size_field("model", "hidden", [](auto& c) -> auto& { return c.model.hidden; }));
    f.push_back(size_field("model", "hidden2", [](auto& c) -> auto& { return c.model.hidden2; }));
    f.push_back(string_field("model", "activation",
                             [](auto& c) -> auto& { return c.model.activation; },
                             {"tanh", "relu"}));
    f.push_back(bool_field("model", "bias", [](auto& c) -> auto& { return c.model.bias; }));

    f.push_back(size_field("data", "samples", [](auto& c) -> auto& { return c.data.samples; }));
    f.push_back(size_field("data", "heldout", [](auto& c) -> auto& { return c.data.heldout; }));
    f.push_back(size_field("data", "features", [](auto& c) -> auto& { return c.data.features; }));
    f.push_back(size_field("data", "classes", [](auto& c) -> auto& { return c.data.classes; }));
    f.push_back(size_field("data", "outputs", [](auto& c) -> auto& { return c.data.outputs; }));
    f.push_back(real_field("data", "separation", [](auto& c) -> auto& { return c.data.separation; }));
    f.push_back(real_field("data", "noise", [](auto& c) -> auto& { return c.data.noise; }));
    f.push_back(size_field("data", "batch", [](auto& c) -> auto& { return c.data.batch; }));

    f.push_back(Field{"data", "seed", Type::kInt,
                      [](RunConfig& c, const Value& v) {
                        const long long x = std::get<long long>(v);
                        if (x < 0) throw ConfigError("value must be non-negative");
                        c.data.seed = static_cast<std::uint64_t>(x);
                      },
                      [](const RunConfig& c) -> std::optional<std::string> {
                        if (!c.data.seed) return std::nullopt;
                        return std::to_string(*c.data.seed);
                      }});

    f.push_back(string_field("optimizer", "kind",
                             [](auto& c) -> auto& { return c.optimizer.kind; },
                             {"demo", "sgd", "signum", "adamw"}));
    f.push_back(real_field("optimizer", "lr", [](auto& c) -> auto& { return c.optimizer.lr; }));
    f.push_back(real_field("optimizer", "beta", [](auto& c) -> auto& { return c.optimizer.beta; }));
    f.push_back(real_field("optimizer", "beta2", [](auto& c) -> auto& { return c.optimizer.beta2; }));
    f.push_back(real_field("optimizer", "eps", [](auto& c) -> auto& { return c.optimizer.eps; }));
    f.push_back(real_field("optimizer", "weight_decay",
                           [](auto& c) -> auto& { return c.optimizer.weight_decay; }));
    f.push_back(size_field("optimizer", "s", [](auto& c) -> auto& { return c.optimizer.s; }));
    f.push_back(size_field("optimizer", "k", [](auto& c) -> auto& { return c.optimizer.k; }));
    f.push_back(bool_field("optimizer", "signum", [](auto& c) -> auto& { return c.optimizer.signum; }));
    f.push_back(string_field("optimizer", "merge",
                             [](auto& c) -> auto& { return c.optimizer.merge; },
                             {"contributor", "world"}));

    f.push_back(string_field("transport", "kind",
                             [](auto& c) -> auto& { return c.transport.kind; },
                             {"memory", "tcp"}));
    f.push_back(string_field("transport", "host", [](auto& c) -> auto& { return c.transport.host; }));
    f.push_back(size_field("transport", "base_port",
                           [](auto& c) -> auto& { return c.transport.base_port; }));
    f.push_back(real_field("transport", "timeout_s",
                           [](auto& c) -> auto& { return c.transport.timeout_s; }));

    f.push_back(size_field("run", "workers", [](auto& c) -> auto& { return c.run.workers; }));
    f.push_back(size_field("run", "steps", [](auto& c) -> auto& { return c.run.steps; }));
    f.push_back(Field{"run", "seed", Type::kInt,
                      [](RunConfig& c, const Value& v) {
                        const long long x = std::get<long long>(v);
                        if (x < 0) throw ConfigError("value must be non-negative");
                        c.run.seed = static_cast<std::uint64_t>(x);
                      },
                      [](const RunConfig& c) -> std::optional<std::string> {
                        return std::to_string(c.run.seed);
                      }});
    f.push_back(size_field("run", "eval_every", [](auto& c) -> auto& { return c.run.eval_every; }));
    f.push_back(string_field("run", "dtype", [](auto& c) -> auto& { return c.run.dtype; },
                             {"f32", "f64"}));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  for (const auto& f : fields()) {
    if (f.section == section) return true;
  }
  return false;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Parses one value token. `loose_strings` accepts bare words as strings.
Value parse_value(std::string_view text, Type expected, bool loose_strings, Position pos) {
  if (text.empty()) throw ConfigError("missing value", pos.line, pos.column);
  if (text.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < text.size() && text[i] != '"'; ++i) {
      if (text[i] == '\\') {
        if (++i == text.size()) break;
      }
      out += text[i];
    }
    if (i >= text.size()) throw ConfigError("unterminated string", pos.line, pos.column);
    if (i + 1 != text.size()) {
      throw ConfigError("unexpected text after string", pos.line, pos.column + i + 1);
    }
    return out;
  }
  if (text == "true") return true;
  if (text == "false") return false;

  long long as_int = 0;
  auto [iend, iec] = std::from_chars(text.data(), text.data() + text.size(), as_int);
  if (iec == std::errc() && iend == text.data() + text.size()) return as_int;

  double as_real = 0.0;
  auto [rend, rec] = std::from_chars(text.data(), text.data() + text.size(), as_real);
  if (rec == std::errc() && rend == text.data() + text.size()) return as_real;

  if (loose_strings && expected == Type::kString) return std::string(text);
  throw ConfigError("cannot parse value '" + std::string(text) + "'", pos.line, pos.column);
}

void assign(RunConfig& cfg, const Field& field, const Value& v, Position pos) {
  const bool ok = (field.type == Type::kBool && std::holds_alternative<bool>(v)) ||
                  (field.type == Type::kInt && std::holds_alternative<long long>(v)) ||
                  (field.type == Type::kReal &&
                   (std::holds_alternative<double>(v) || std::holds_alternative<long long>(v))) ||
                  (field.type == Type::kString && std::holds_alternative<std::string>(v));
  if (!ok) {
    throw ConfigError(field.section + "." + field.key + " expects " + type_name(field.type),
                      pos.line, pos.column);
  }
  try {
    field.set(cfg, v);
  } catch (const ConfigError& e) {
    throw ConfigError(field.section + "." + field.key + ": " + e.what(), pos.line, pos.column);
  }
}

// Position of the first '#' outside a quoted string, or npos.
std::size_t comment_start(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (in_string && line[i] == '\\') {
      ++i;
    } else if (line[i] == '"') {
      in_string = !in_string;
    } else if (!in_string && line[i] == '#') {
      return i;
    }
  }
  return std::string_view::npos;
}

}  // namespace

void RunConfig::validate() const {
  if (run.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (run.workers > 256) throw ConfigError("run.workers must be <= 256");
  if (data.batch < 1) throw ConfigError("data.batch must be >= 1");
  if (data.samples < run.workers) throw ConfigError("data.samples must cover every worker");
  if (data.features < 1) throw ConfigError("data.features must be >= 1");
  if ((model.kind == "logistic" || model.kind == "mlp") && data.classes < 2) {
    throw ConfigError("data.classes must be >= 2 for classifiers");
  }
  if (model.kind == "linear" && data.outputs < 1) throw ConfigError("data.outputs must be >= 1");
  if (model.kind == "mlp" && model.hidden < 1) throw ConfigError("model.hidden must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
  const double beta = optimizer.effective_beta();
  if (optimizer.kind == "demo") {
    if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("optimizer.beta must lie in (0, 1) for demo");
    if (optimizer.s < 1) throw ConfigError("optimizer.s must be >= 1");
    if (optimizer.k < 1) throw ConfigError("optimizer.k must be >= 1");
  } else if (!(beta >= 0.0 && beta < 1.0)) {
    throw ConfigError("optimizer.beta must lie in [0, 1)");
  }
  if (optimizer.effective_weight_decay() < 0.0) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(transport.timeout_s > 0.0)) throw ConfigError("transport.timeout_s must be > 0");
  if (transport.base_port > 65535 - run.workers) throw ConfigError("transport.base_port out of range");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string_view raw = text.substr(start, nl == std::string_view::npos ? text.size() - start
                                                                             : nl - start);
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::size_t hash = comment_start(raw);
    std::string_view body = raw.substr(0, hash);
    const std::string_view content = trim(body);
    if (content.empty()) continue;
    const std::size_t indent = body.find_first_not_of(" \t") + 1;

    if (content.front() == '[') {
      if (content.back() != ']') throw ConfigError("unterminated section header", line_no, indent);
      section = std::string(trim(content.substr(1, content.size() - 2)));
      if (!known_section(section)) {
        throw ConfigError("unknown section [" + section + "]", line_no, indent + 1);
      }
      continue;
    }

    const std::size_t eq = content.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("expected `key = value`", line_no, indent);
    }
    const std::string key(trim(content.substr(0, eq)));
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section", line_no, indent);
    const Field* field = find_field(section, key);
    if (!field) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no, indent);
    const std::string full = section + "." + key;
    if (!seen.insert(full).second) throw ConfigError("duplicate key '" + full + "'", line_no, indent);

    const std::string_view rhs = content.substr(eq + 1);
    const std::size_t lead = rhs.find_first_not_of(" \t");
    const std::size_t value_col =
        indent + eq + 1 + (lead == std::string_view::npos ? 0 : lead);
    const Position pos{line_no, value_col};
    assign(cfg, *field, parse_value(trim(rhs), field->type, false, pos), pos);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const std::size_t eq = assignment.find('=');
  const std::size_t dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override must look like section.key=value, got '" +
                      std::string(assignment) + "'");
  }
  const std::string section(trim(assignment.substr(0, dot)));
  const std::string key(trim(assignment.substr(dot + 1, eq - dot - 1)));
  const Field* field = find_field(section, key);
  if (!field) throw ConfigError("unknown key '" + section + "." + key + "'");
  const Value v = parse_value(trim(assignment.substr(eq + 1)), field->type, true, Position{});
  assign(cfg, *field, v, Position{});
  cfg.validate();
}

std::string to_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    if (auto shown = f.show(cfg)) os << f.key << " = " << *shown << '\n';
  }
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.section + "." + f.key);
  return keys;
}

}  // namespace demo
