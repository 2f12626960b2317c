#include "core/sysfile.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "core/catalog.hpp"

namespace almreg {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& s, int line) {
  double v;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FileParseError("expected a number, got '" + s + "'", line);
  return v;
}

Eigen::VectorXd to_vector(const std::string& s, int line) {
  std::istringstream iss(s);
  std::vector<double> vals;
  std::string tok;
  while (iss >> tok) vals.push_back(to_double(tok, line));
  Eigen::VectorXd v(vals.size());
  for (size_t i = 0; i < vals.size(); ++i) v[i] = vals[i];
  return v;
}

std::string unquote(const std::string& s, int line) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
    return s.substr(1, s.size() - 2);
  throw FileParseError("expression values must be double-quoted", line);
}

}  // namespace

SystemSpec parse_system_text(const std::string& text) {
  SystemSpec spec;
  std::istringstream iss(text);
  std::string line;
  std::string section;
  int line_no = 0;
  bool have_dim = false;
  while (std::getline(iss, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw FileParseError("unterminated [section]", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (section != "params" && section != "lagrangian" && section != "seed" &&
          section != "primary" && section != "integration" && section != "u")
        throw FileParseError("unknown section '" + section + "'", line_no);
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw FileParseError("expected key = value", line_no);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) throw FileParseError("empty key or value", line_no);

    if (section.empty()) {
      if (key == "name") {
        spec.name = val;
      } else if (key == "dim") {
        double d = to_double(val, line_no);
        if (d < 1 || d != std::floor(d)) throw FileParseError("dim must be an integer >= 1", line_no);
        spec.dim = static_cast<int>(d);
        have_dim = true;
      } else {
        throw FileParseError("unknown top-level key '" + key + "'", line_no);
      }
    } else if (section == "params") {
      spec.params.emplace_back(key, to_double(val, line_no));
    } else if (section == "lagrangian") {
      if (key != "L") throw FileParseError("lagrangian section expects L = \"...\"", line_no);
      spec.lagrangian = unquote(val, line_no);
    } else if (section == "seed") {
      if (key == "q")
        spec.seed_q = to_vector(val, line_no);
      else if (key == "v")
        spec.seed_v = to_vector(val, line_no);
      else
        throw FileParseError("seed section expects q or v", line_no);
    } else if (section == "primary") {
      if (key != "candidate") throw FileParseError("primary section expects candidate = \"...\"", line_no);
      spec.primary_candidates.push_back(unquote(val, line_no));
    } else if (section == "integration") {
      if (key == "t0")
        spec.t0 = to_double(val, line_no);
      else if (key == "t1")
        spec.t1 = to_double(val, line_no);
      else if (key == "dt") {
        spec.dt = to_double(val, line_no);
        if (spec.dt <= 0) throw FileParseError("dt must be > 0", line_no);
      } else if (key == "project")
        spec.project = (val == "true" || val == "1") ? true
                       : (val == "false" || val == "0")
                           ? false
                           : throw FileParseError("project must be true or false", line_no);
      else
        throw FileParseError("unknown integration key '" + key + "'", line_no);
    } else if (section == "u") {
      spec.u_exprs.push_back(unquote(val, line_no));
    }
  }
  if (!have_dim) throw FileParseError("missing dim", line_no);
  if (spec.lagrangian.empty()) throw FileParseError("missing [lagrangian] L", line_no);
  if (spec.seed_q.size() > 0 && spec.seed_q.size() != spec.dim)
    throw FileParseError("seed q has wrong length", line_no);
  if (spec.seed_v.size() > 0 && spec.seed_v.size() != spec.dim)
    throw FileParseError("seed v has wrong length", line_no);
  if (spec.name.empty()) spec.name = "system";
  return spec;
}

SystemSpec load_system_source(const std::string& path_or_at) {
  if (!path_or_at.empty() && path_or_at.front() == '@') {
    const SystemSpec* e = catalog_find(path_or_at.substr(1));
    if (!e) throw InputError("no catalog system named '" + path_or_at.substr(1) + "'");
    return *e;
  }
  std::ifstream in(path_or_at);
  if (!in) throw InputError("cannot open '" + path_or_at + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_system_text(buf.str());
}

LagrangianSystem build_from_spec(const SystemSpec& spec) {
  ParseOptions opts;
  opts.dim = spec.dim;
  for (const auto& [k, v] : spec.params) opts.params.push_back(k);
  Expr L = parse_expression(spec.lagrangian, opts);
  return build_system(L, spec.dim, spec.params, spec.name);
}

}  // namespace almreg
