#include "vcn/config.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <utility>

#include "vcn/errors.hpp"
#include "vcn/io.hpp"

namespace vcn {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v, const std::string& where) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(where + ": not a number: '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(where + ": not a non-negative integer: '" + v + "'");
  return out;
}

int to_int(const std::string& v, const std::string& where) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(where + ": not an integer: '" + v + "'");
  return out;
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where + ": not a boolean: '" + v + "'");
}

std::vector<double> to_list(const std::string& v, const std::string& where) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    std::size_t comma = v.find(',', pos);
    std::string item =
        trim(std::string_view(v).substr(pos, comma == std::string::npos
                                                 ? std::string::npos
                                                 : comma - pos));
    if (!item.empty()) out.push_back(to_double(item, where));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Sectioned key = value text, full-line comments with '#' or ';'.
// Every key must be consumed exactly once; leftovers are an error.
class Parsed {
 public:
  explicit Parsed(const std::string& text) {
    std::string section;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      std::size_t nl = text.find('\n', pos);
      std::string line = trim(std::string_view(text).substr(
          pos, nl == std::string::npos ? std::string::npos : nl - pos));
      ++line_no;
      pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError("line " + fmt_u64(line_no) +
                            ": malformed section header: " + line);
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        if (section.empty())
          throw ConfigError("line " + fmt_u64(line_no) + ": empty section name");
        sections_.insert(section);
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + fmt_u64(line_no) +
                          ": expected 'key = value': " + line);
      std::string key = trim(std::string_view(line).substr(0, eq));
      std::string value = trim(std::string_view(line).substr(eq + 1));
      if (key.empty())
        throw ConfigError("line " + fmt_u64(line_no) + ": empty key");
      if (section.empty())
        throw ConfigError("line " + fmt_u64(line_no) +
                          ": key '" + key + "' outside any section");
      auto [it, fresh] = values_.emplace(section + "." + key, value);
      (void)it;
      if (!fresh)
        throw ConfigError("duplicate key '" + key + "' in section [" +
                          section + "]");
    }
  }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count(section + "." + key) != 0;
  }

  // Marks the key consumed.  Missing keys keep the caller's default.
  const std::string* take(const std::string& section, const std::string& key) {
    auto it = values_.find(section + "." + key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(it->first);
    return &it->second;
  }

  void expect_known_sections(const std::set<std::string>& known) const {
    for (const auto& s : sections_)
      if (!known.count(s)) throw ConfigError("unknown section [" + s + "]");
  }

  void expect_all_consumed() const {
    for (const auto& [k, v] : values_) {
      (void)v;
      if (!consumed_.count(k)) {
        std::size_t dot = k.find('.');
        throw ConfigError("unknown key '" + k.substr(dot + 1) +
                          "' in section [" + k.substr(0, dot) + "]");
      }
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> sections_;
  std::set<std::string> consumed_;
};

struct Cursor {
  Parsed& in;
  std::string section;

  std::string where(const std::string& key) const {
    return "[" + section + "] " + key;
  }
  void get(const std::string& key, double& out) {
    if (const std::string* v = in.take(section, key))
      out = to_double(*v, where(key));
  }
  void get(const std::string& key, int& out) {
    if (const std::string* v = in.take(section, key))
      out = to_int(*v, where(key));
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const std::string* v = in.take(section, key))
      out = to_u64(*v, where(key));
  }
  void get(const std::string& key, bool& out) {
    if (const std::string* v = in.take(section, key))
      out = to_bool(*v, where(key));
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const std::string* v = in.take(section, key))
      out = to_list(*v, where(key));
  }
  void get(const std::string& key, std::string& out) {
    if (const std::string* v = in.take(section, key)) out = *v;
  }
};

std::string join_path(const std::string& dir, const std::string& file) {
  if (file.empty() || file.front() == '/' || dir.empty()) return file;
  if (dir.back() == '/') return dir + file;
  return dir + "/" + file;
}

InitialCondition parse_initial(Parsed& in, const std::string& base_dir) {
  Cursor c{in, "initial"};
  std::string kind = "point";
  c.get("kind", kind);
  if (kind == "point") {
    PointInit pt{0.0, 0.0};
    c.get("v", pt.v);
    c.get("g", pt.g);
    return pt;
  }
  if (kind == "box") {
    BoxInit box{0.0, 0.0, 0.0, 0.0};
    c.get("v_lo", box.v_lo);
    c.get("v_hi", box.v_hi);
    c.get("g_lo", box.g_lo);
    c.get("g_hi", box.g_hi);
    return box;
  }
  if (kind == "samples") {
    std::string file;
    c.get("file", file);
    if (file.empty())
      throw ConfigError("[initial] kind = samples requires file = <path>");
    SampleInit s;
    s.points = read_samples_csv(join_path(base_dir, file));
    return s;
  }
  throw ConfigError("[initial] kind: expected point, box, or samples, got '" +
                    kind + "'");
}

Scheme parse_scheme(const std::string& v) {
  if (v == "implicit") return Scheme::implicit;
  if (v == "explicit") return Scheme::explicit_euler;
  throw ConfigError("[pde] scheme: expected implicit or explicit, got '" + v +
                    "'");
}

PdeRunConfig::Mode parse_pde_mode(const std::string& v) {
  if (v == "steady") return PdeRunConfig::Mode::steady;
  if (v == "transient") return PdeRunConfig::Mode::transient;
  if (v == "both") return PdeRunConfig::Mode::both;
  throw ConfigError("[pde] mode: expected steady, transient, or both, got '" +
                    v + "'");
}

StudyMode parse_study_mode(const std::string& v) {
  if (v == "pde") return StudyMode::pde;
  if (v == "particle") return StudyMode::particle;
  throw ConfigError("[ergodicity] study_mode: expected pde or particle, got '" +
                    v + "'");
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text,
                               const std::string& base_dir) {
  Parsed in(text);
  in.expect_known_sections({"model", "run", "particle", "initial", "pde",
                            "ergodicity", "validate"});

  RunConfig rc;
  rc.config_hash = fnv1a64(text);

  {
    Cursor c{in, "model"};
    c.get("g_L", rc.model.g_L);
    c.get("V_E", rc.model.V_E);
    c.get("V_R", rc.model.V_R);
    c.get("V_F", rc.model.V_F);
    c.get("a", rc.model.a);
    c.get("g_in", rc.model.g_in);
  }
  {
    Cursor c{in, "run"};
    c.get("seed", rc.seed);
    c.get("threads", rc.threads);
    c.get("out_dir", rc.out_dir);
    if (rc.threads < 1) throw ConfigError("[run] threads must be >= 1");
  }
  {
    Cursor c{in, "particle"};
    c.get("dt", rc.particle.dt);
    c.get("horizon", rc.particle.horizon);
    c.get("n", rc.particle.n_particles);
    c.get("snapshot_times", rc.particle.snapshot_times);
    c.get("record_spikes", rc.particle.record_spikes);
    c.get("zero_noise", rc.particle.zero_noise);
  }
  rc.initial = parse_initial(in, base_dir);
  {
    Cursor c{in, "pde"};
    c.get("n_v", rc.pde.n_v);
    c.get("n_g", rc.pde.n_g);
    c.get("g_max", rc.pde.g_max);
    c.get("dt", rc.pde.dt);
    std::string s;
    c.get("scheme", s);
    if (!s.empty()) rc.pde.scheme = parse_scheme(s);
    std::string m;
    c.get("mode", m);
    if (!m.empty()) rc.pde.mode = parse_pde_mode(m);
    c.get("horizon", rc.pde.horizon);
    c.get("snapshot_dt", rc.pde.snapshot_dt);
    c.get("steady_tol", rc.pde.steady_tol);
    c.get("steady_max_iter", rc.pde.steady_max_iter);
    c.get("steady_dt", rc.pde.steady_dt);
  }
  {
    Cursor c{in, "ergodicity"};
    auto& e = rc.ergodicity;
    c.get("beta", e.beta);
    c.get("R", e.R);
    c.get("R_compare", e.R_compare);
    c.get("v_r", e.v_r);
    c.get("g_r", e.g_r);
    c.get("lyapunov_R", e.lyapunov_R);
    c.get("lyapunov_points_v", e.lyapunov_points_v);
    c.get("lyapunov_points_g", e.lyapunov_points_g);
    c.get("lyapunov_samples", e.lyapunov_samples);
    c.get("lyapunov_horizon", e.lyapunov_horizon);
    c.get("lyapunov_times", e.lyapunov_times);
    c.get("minor_points_v", e.minor.points_v);
    c.get("minor_points_g", e.minor.points_g);
    c.get("minor_n_per_point", e.minor.n_per_point);
    c.get("minor_dt", e.minor.dt);
    c.get("hist_nv", e.minor.hist_nv);
    c.get("hist_ng", e.minor.hist_ng);
    c.get("hist_gmax", e.minor.hist_gmax);
    c.get("block_v", e.minor.block_v);
    c.get("block_g", e.minor.block_g);
    c.get("study_horizon", e.study_horizon);
    c.get("study_snapshot_dt", e.study_snapshot_dt);
    c.get("study_dt", e.study_dt);
    std::string m;
    c.get("study_mode", m);
    if (!m.empty()) e.study_mode = parse_study_mode(m);
    c.get("study_floor", e.study_floor);
  }
  {
    Cursor c{in, "validate"};
    auto& v = rc.validation;
    c.get("times", v.times);
    c.get("n", v.n);
    c.get("particle_dt", v.particle_dt);
    c.get("window_lo", v.window_lo);
    c.get("window_hi", v.window_hi);
    c.get("c1", v.budget.c1);
    c.get("c2", v.budget.c2);
    c.get("agg_v", v.budget.agg_v);
    c.get("agg_g", v.budget.agg_g);
    c.get("flux_tol", v.flux_tol);
    c.get("marginal_tol", v.marginal_tol);
    c.get("rate_tol", v.rate_tol);
    c.get("profile_tol", v.profile_tol);
    c.get("marginal_horizon", v.marginal_horizon);
    c.get("marginal_snapshot_dt", v.marginal_snapshot_dt);
  }
  in.expect_all_consumed();

  rc.model.validate();
  rc.particle.seed = rc.seed;
  rc.particle.threads = rc.threads;
  rc.ergodicity.minor.seed = rc.seed;
  rc.ergodicity.minor.threads = rc.threads;
  validate_initial(rc.initial, rc.model);
  return rc;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::string text = read_file(path);
  std::size_t slash = path.find_last_of('/');
  std::string dir = slash == std::string::npos ? "." : path.substr(0, slash);
  return from_text(text, dir);
}

std::vector<std::pair<double, double>> read_samples_csv(
    const std::string& path) {
  std::string text = read_file(path);
  std::vector<std::pair<double, double>> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = trim(std::string_view(text).substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos));
    ++line_no;
    pos = nl == std::string::npos ? text.size() : nl + 1;
    if (line.empty() || line[0] == '#') continue;
    std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw ConfigError(path + ":" + fmt_u64(line_no) +
                        ": expected 'v,g' per line");
    std::string where = path + ":" + fmt_u64(line_no);
    double v = to_double(trim(std::string_view(line).substr(0, comma)), where);
    double g = to_double(trim(std::string_view(line).substr(comma + 1)), where);
    out.emplace_back(v, g);
  }
  if (out.empty()) throw ConfigError(path + ": no samples");
  return out;
}

}  // namespace vcn
