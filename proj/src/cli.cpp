#include "fplab/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "fplab/operators.hpp"

namespace fplab::cli {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using Json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Comma-separated items; double quotes protect commas and are stripped.
std::vector<std::string> split_list(const std::string& value, const std::string& field) {
  std::vector<std::string> items;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (char c : value) {
    if (c == '"') {
      quoted = !quoted;
      was_quoted = true;
    } else if (c == ',' && !quoted) {
      items.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else if (!quoted && was_quoted && c != ' ' && c != '\t') {
      throw ConfigError(fmt::format("{}: text after closing quote", field));
    } else if (quoted || !was_quoted) {
      cur += c;
    }
  }
  if (quoted) throw ConfigError(fmt::format("{}: unterminated quote", field));
  if (was_quoted || !trim(cur).empty()) items.push_back(was_quoted ? cur : trim(cur));
  for (const auto& item : items) {
    if (item.empty()) throw ConfigError(fmt::format("{}: empty list item", field));
  }
  return items;
}

double to_double(const std::string& text, const std::string& field) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", field, text));
  }
  return v;
}

long long to_integer(const std::string& text, const std::string& field) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", field, text));
  }
  return v;
}

std::vector<double> to_doubles(const std::string& value, const std::string& field) {
  std::vector<double> out;
  for (const auto& item : split_list(value, field)) out.push_back(to_double(item, field));
  return out;
}

PhiKind phi_from_string(const std::string& name, const std::string& field) {
  for (PhiKind k : {PhiKind::power, PhiKind::variance, PhiKind::boltzmann,
                    PhiKind::gauss_isoperimetry}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError(fmt::format("{}: unknown Phi '{}'", field, name));
}

void require_keys(const pt::ptree& section, const std::string& name,
                  const std::set<std::string>& allowed) {
  for (const auto& [key, value] : section) {
    if (!allowed.contains(key)) {
      throw ConfigError(fmt::format("[{}] {}: unknown key", name, key));
    }
  }
}

std::optional<std::string> get(const pt::ptree& section, const std::string& key) {
  if (auto v = section.get_optional<std::string>(key)) return trim(*v);
  return std::nullopt;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("line {}: {}", e.line(), e.message()),
                      static_cast<int>(e.line()));
  }
  for (const auto& [name, section] : tree) {
    if (name != "model" && name != "solver" && name != "verify" && name != "output") {
      throw ConfigError(fmt::format("unknown section [{}]", name));
    }
    if (section.empty() && !section.data().empty()) {
      throw ConfigError(fmt::format("{}: key outside of a section", name));
    }
  }

  RunConfig cfg;
  const pt::ptree empty;
  const auto& m = tree.get_child("model", empty);
  const auto& s = tree.get_child("solver", empty);
  const auto& v = tree.get_child("verify", empty);
  const auto& o = tree.get_child("output", empty);
  if (m.empty()) throw ConfigError("[model] section is required");

  require_keys(m, "model",
               {"dim", "lower", "upper", "cells", "diffusion", "drift", "potential", "perturbation"});
  auto& model = cfg.model;
  if (auto x = get(m, "dim")) model.dim = static_cast<int>(to_integer(*x, "[model] dim"));
  if (model.dim != 1 && model.dim != 2) throw ConfigError("[model] dim: must be 1 or 2");
  auto need = [&](const char* key) {
    auto x = get(m, key);
    if (!x) throw ConfigError(fmt::format("[model] {}: required", key));
    return *x;
  };
  model.lower = to_doubles(need("lower"), "[model] lower");
  model.upper = to_doubles(need("upper"), "[model] upper");
  for (const auto& c : split_list(need("cells"), "[model] cells")) {
    model.cells.push_back(static_cast<int>(to_integer(c, "[model] cells")));
  }
  const std::size_t dim = static_cast<std::size_t>(model.dim);
  if (model.lower.size() != dim || model.upper.size() != dim || model.cells.size() != dim) {
    throw ConfigError(fmt::format("[model] lower, upper and cells need {} entries each", dim));
  }
  model.diffusion = split_list(need("diffusion"), "[model] diffusion");
  if (auto x = get(m, "drift")) model.drift = split_list(*x, "[model] drift");
  if (auto x = get(m, "potential")) model.potential = *x;
  if (auto x = get(m, "perturbation")) model.perturbation = split_list(*x, "[model] perturbation");
  if (model.potential) {
    auto items = split_list(*model.potential, "[model] potential");
    if (items.size() != 1) throw ConfigError("[model] potential: one expression expected");
    model.potential = items.front();
    if (!model.drift.empty()) throw ConfigError("[model] drift and potential are exclusive");
  } else if (model.drift.empty()) {
    throw ConfigError("[model] drift or potential: required");
  } else if (!model.perturbation.empty()) {
    throw ConfigError("[model] perturbation: needs potential");
  }

  require_keys(s, "solver", {"dt", "t_end", "scheme", "snapshots", "initial"});
  auto& solver = cfg.solver;
  if (auto x = get(s, "dt")) solver.dt = to_double(*x, "[solver] dt");
  if (auto x = get(s, "t_end")) solver.t_end = to_double(*x, "[solver] t_end");
  if (auto x = get(s, "scheme")) {
    try {
      solver.scheme = scheme_from_string(*x);
    } catch (const Error& e) {
      throw ConfigError(fmt::format("[solver] scheme: {}", e.what()));
    }
  }
  if (auto x = get(s, "snapshots")) solver.snapshots = to_doubles(*x, "[solver] snapshots");
  if (auto x = get(s, "initial")) {
    auto items = split_list(*x, "[solver] initial");
    if (items.size() != 1) throw ConfigError("[solver] initial: one expression expected");
    solver.initial = items.front();
  }
  if (!(solver.dt > 0.0)) throw ConfigError("[solver] dt: must be positive");
  if (!(solver.t_end >= 0.0)) throw ConfigError("[solver] t_end: must be nonnegative");

  require_keys(v, "verify", {"checks", "phi", "p", "seed", "battery", "dynamic", "times", "t",
                             "rho", "entropy_constant", "core"});
  auto& ver = cfg.verify;
  if (auto x = get(v, "checks")) {
    for (const auto& name : split_list(*x, "[verify] checks")) {
      auto id = check_from_string(name);
      if (!id) throw ConfigError(fmt::format("[verify] checks: unknown check '{}'", name));
      ver.checks.push_back(*id);
    }
  }
  if (auto x = get(v, "phi")) {
    ver.phis.clear();
    for (const auto& name : split_list(*x, "[verify] phi")) {
      ver.phis.push_back(phi_from_string(name, "[verify] phi"));
    }
  }
  if (auto x = get(v, "p")) ver.p = to_doubles(*x, "[verify] p");
  for (double p : ver.p) {
    if (!(p > 1.0 && p <= 2.0)) {
      throw ConfigError(fmt::format("[verify] p: {} outside ]1,2]", p));
    }
  }
  if (auto x = get(v, "seed")) {
    const long long seed = to_integer(*x, "[verify] seed");
    if (seed < 0) throw ConfigError("[verify] seed: must be nonnegative");
    ver.seed = static_cast<std::uint64_t>(seed);
  }
  if (auto x = get(v, "battery")) ver.battery = static_cast<int>(to_integer(*x, "[verify] battery"));
  if (auto x = get(v, "dynamic")) ver.dynamic = static_cast<int>(to_integer(*x, "[verify] dynamic"));
  if (ver.battery < 1) throw ConfigError("[verify] battery: must be positive");
  if (ver.dynamic < 1) throw ConfigError("[verify] dynamic: must be positive");
  if (auto x = get(v, "times")) ver.times = to_doubles(*x, "[verify] times");
  for (double t : ver.times) {
    if (!(t > 0.0)) throw ConfigError("[verify] times: must be positive");
  }
  if (auto x = get(v, "t")) ver.t = to_double(*x, "[verify] t");
  if (!(ver.t > 0.0)) throw ConfigError("[verify] t: must be positive");
  if (auto x = get(v, "rho")) ver.rho = to_double(*x, "[verify] rho");
  if (auto x = get(v, "entropy_constant")) {
    ver.entropy_constant = to_double(*x, "[verify] entropy_constant");
    if (!(*ver.entropy_constant > 0.0)) throw ConfigError("[verify] entropy_constant: must be positive");
  }
  if (auto x = get(v, "core")) ver.core = to_double(*x, "[verify] core");
  if (!(ver.core > 0.0 && ver.core <= 1.0)) throw ConfigError("[verify] core: must lie in ]0,1]");

  require_keys(o, "output", {"directory", "formats"});
  if (auto x = get(o, "directory")) {
    auto items = split_list(*x, "[output] directory");
    if (items.size() != 1) throw ConfigError("[output] directory: one path expected");
    cfg.output.directory = items.front();
  }
  if (auto x = get(o, "formats")) {
    cfg.output.json = cfg.output.csv = false;
    for (const auto& f : split_list(*x, "[output] formats")) {
      if (f == "json") {
        cfg.output.json = true;
      } else if (f == "csv") {
        cfg.output.csv = true;
      } else {
        throw ConfigError(fmt::format("[output] formats: unknown format '{}'", f));
      }
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

GridPtr make_grid(const RunConfig& config) {
  const auto& m = config.model;
  std::vector<std::array<double, 2>> bounds;
  for (int k = 0; k < m.dim; ++k) bounds.push_back({m.lower[k], m.upper[k]});
  try {
    return build_grid(bounds, m.cells);
  } catch (const InvalidArgument& e) {
    throw ConfigError(fmt::format("[model] grid: {}", e.what()));
  }
}

Model make_model(const RunConfig& config) {
  const auto& m = config.model;
  const std::size_t entries = m.dim == 1 ? 1 : 3;
  if (m.diffusion.size() != entries) {
    throw ConfigError(fmt::format("[model] diffusion: {} entries expected (upper triangle)", entries));
  }
  if (m.potential) {
    if (!m.perturbation.empty() && m.perturbation.size() != static_cast<std::size_t>(m.dim)) {
      throw ConfigError(fmt::format("[model] perturbation: {} components expected", m.dim));
    }
    return Model::with_potential(m.dim, m.diffusion, *m.potential, m.perturbation);
  }
  if (m.drift.size() != static_cast<std::size_t>(m.dim)) {
    throw ConfigError(fmt::format("[model] drift: {} components expected", m.dim));
  }
  return Model::with_drift(m.dim, m.diffusion, m.drift);
}

CdSummary estimate_rho(const Model& model, const GridPtr& grid) {
  discretize_model(model, grid);
  if (model.constant_diffusion()) return {cd_rho_constant_D(model, grid), false};
  return {cd_rho_sampled(model, grid, default_cd_test_fields(grid)), true};
}

namespace {

// Point reflection through the box centre.
Field symmetrize(const Field& f) {
  const Grid& g = f.grid();
  Eigen::VectorXd out(f.size());
  for (Index i = 0; i < f.size(); ++i) {
    const auto mi = g.multi_index(i);
    const Index j = g.dim() == 1 ? g.index(g.cells(0) - mi[0])
                                 : g.index(g.cells(0) - mi[0], g.cells(1) - mi[1]);
    out[i] = 0.5 * (f[i] + f[j]);
  }
  return Field(f.grid_ptr(), std::move(out));
}

Field sample_expression(const GridPtr& grid, const std::string& text) {
  const auto e = expr::Expression::parse(text, grid->dim());
  return Field::sample(grid, [&](std::span<const double> x) { return e.eval(x.first(grid->dim())); });
}

std::vector<PhiFunction> expand_phis(const VerifySection& v) {
  std::vector<PhiFunction> out;
  for (PhiKind k : v.phis) {
    if (k == PhiKind::power) {
      for (double p : v.p) out.push_back(make_phi(k, p));
    } else {
      out.push_back(make_phi(k));
    }
  }
  return out;
}

std::string slug(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  }
  return s;
}

Json to_json(const CheckResult& r) {
  Json j;
  j["check"] = to_string(r.id);
  j["anchor"] = r.anchor;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["margin"] = r.margin;
  j["tolerance"] = r.tolerance;
  j["pass"] = r.pass;
  Json ctx = Json::object();
  for (const auto& [key, value] : r.context) {
    std::visit([&](const auto& v) { ctx[key] = v; }, value);
  }
  j["context"] = std::move(ctx);
  return j;
}

Json config_json(const RunConfig& c) {
  Json m;
  m["dim"] = c.model.dim;
  m["lower"] = c.model.lower;
  m["upper"] = c.model.upper;
  m["cells"] = c.model.cells;
  m["diffusion"] = c.model.diffusion;
  if (c.model.potential) {
    m["potential"] = *c.model.potential;
    m["perturbation"] = c.model.perturbation;
  } else {
    m["drift"] = c.model.drift;
  }
  Json s;
  s["dt"] = c.solver.dt;
  s["t_end"] = c.solver.t_end;
  s["scheme"] = to_string(c.solver.scheme);
  s["snapshots"] = c.solver.snapshots;
  if (c.solver.initial) s["initial"] = *c.solver.initial;
  Json v;
  std::vector<std::string> checks, phis;
  for (auto id : c.verify.checks) checks.push_back(to_string(id));
  for (auto k : c.verify.phis) phis.push_back(to_string(k));
  v["checks"] = checks;
  v["phi"] = phis;
  v["p"] = c.verify.p;
  v["seed"] = c.verify.seed;
  v["battery"] = c.verify.battery;
  v["dynamic"] = c.verify.dynamic;
  v["times"] = c.verify.times;
  v["t"] = c.verify.t;
  if (c.verify.rho) v["rho"] = *c.verify.rho;
  if (c.verify.entropy_constant) v["entropy_constant"] = *c.verify.entropy_constant;
  v["core"] = c.verify.core;
  Json out;
  out["model"] = std::move(m);
  out["solver"] = std::move(s);
  out["verify"] = std::move(v);
  return out;
}

std::string timestamp() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw ConfigError(fmt::format("[output] directory: cannot create {}", dir.string()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
}

// Maps library errors onto exit codes and prints a diagnostic.
template <typename Body>
int guarded(std::ostream& err, Body body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config_error;
  } catch (const ParseError& e) {
    err << "config error: expression: " << e.what() << " at offset " << e.position() << '\n';
    return exit_config_error;
  } catch (const EvalFault& e) {
    err << "model invalid: " << e.what() << '\n';
    return exit_model_invalid;
  } catch (const ModelError& e) {
    err << "model invalid: " << e.what() << '\n';
    return exit_model_invalid;
  } catch (const NumericalError& e) {
    err << "model invalid: " << e.what() << '\n';
    return exit_model_invalid;
  } catch (const Inconclusive& e) {
    err << "model invalid: " << e.what() << '\n';
    return exit_model_invalid;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config_error;
  }
}

}  // namespace

VerifyOutcome run_verify(const RunConfig& config, const Model& model, const GridPtr& grid) {
  const VerifySection& v = config.verify;
  VerifyOutcome outcome;
  if (v.checks.empty()) return outcome;

  if (v.rho) {
    outcome.rho = *v.rho;
    outcome.rho_source = "config";
  } else {
    const CdSummary cd = estimate_rho(model, grid);
    outcome.rho = cd.estimate.rho;
    outcome.rho_source = cd.sampled ? "sampled Gamma_2 (upper bound)" : to_string(cd.estimate.method);
  }

  const Lab lab = Lab::build(model, grid);
  const auto positive = test_battery(grid, v.seed, v.battery, BatteryRange::positive);
  const auto unit = test_battery(grid, v.seed, v.battery, BatteryRange::unit_interval);
  const auto phis = expand_phis(v);
  const PhiFunction gauss = make_phi(PhiKind::gauss_isoperimetry);
  const int dynamic = std::min(v.dynamic, v.battery);
  std::optional<Field> u0;
  if (config.solver.initial) u0 = sample_expression(grid, *config.solver.initial);

  CheckContext base;
  base.lab = &lab;
  base.rho = outcome.rho;
  base.entropy_constant = v.entropy_constant;
  base.dt = config.solver.dt;
  base.scheme = config.solver.scheme;
  base.core_fraction = v.core;
  base.t_end = config.solver.t_end;

  auto battery_for = [&](const PhiFunction& phi) -> const std::vector<TestFunction>& {
    return phi.kind() == PhiKind::gauss_isoperimetry ? unit : positive;
  };
  auto need_u0 = [&](CheckId id) -> const Field& {
    if (!u0) throw ConfigError(fmt::format("[solver] initial: required by {}", to_string(id)));
    return *u0;
  };
  auto emit = [&](CheckResult r) { outcome.results.push_back(std::move(r)); };
  auto emit_decay = [&](CheckResult r, const std::string& stem) {
    const std::string file = fmt::format("decay_{:03d}_{}.csv", outcome.decays.size(), slug(stem));
    r.context.emplace_back("csv", file);
    outcome.decays.emplace_back(file, *r.decay);
    emit(std::move(r));
  };

  for (CheckId id : v.checks) {
    CheckContext ctx = base;
    switch (id) {
      case CheckId::global_phi:
        for (const auto& phi : phis) {
          for (const auto& tf : battery_for(phi)) {
            ctx.phi = phi;
            ctx.f = tf.values;
            ctx.f_label = tf.label;
            emit(run_check(id, ctx));
          }
        }
        break;
      case CheckId::beckner:
      case CheckId::refined_global:
      case CheckId::beckner_vs_refined:
      case CheckId::integral_criterion:
        for (double p : v.p) {
          for (const auto& tf : positive) {
            ctx.p = p;
            ctx.f = tf.values;
            ctx.f_label = tf.label;
            emit(run_check(id, ctx));
          }
        }
        break;
      case CheckId::refined_local:
      case CheckId::refined_reverse:
        ctx.scheme = Scheme::crank_nicolson;
        for (double p : v.p) {
          for (const auto& tf : positive) {
            ctx.p = p;
            ctx.f = tf.values;
            ctx.f_label = tf.label;
            for (auto& r : local_inequality_scan(id, ctx, v.times)) emit(std::move(r));
          }
        }
        break;
      case CheckId::iso_local:
      case CheckId::iso_reverse:
        ctx.scheme = Scheme::crank_nicolson;
        ctx.phi = gauss;
        for (const auto& tf : unit) {
          ctx.f = tf.values;
          ctx.f_label = tf.label;
          for (auto& r : local_inequality_scan(id, ctx, v.times)) emit(std::move(r));
        }
        break;
      case CheckId::iso_global:
      case CheckId::iso_sharper:
        ctx.phi = gauss;
        for (const auto& tf : unit) {
          ctx.f = tf.values;
          ctx.f_label = tf.label;
          emit(run_check(id, ctx));
        }
        break;
      case CheckId::entropy_production:
        ctx.scheme = Scheme::crank_nicolson;
        ctx.t = v.t;
        for (const auto& phi : phis) {
          const auto& fs = battery_for(phi);
          for (int k = 0; k < dynamic; ++k) {
            ctx.phi = phi;
            ctx.f = fs[k].values;
            ctx.f_label = fs[k].label;
            emit(run_check(id, ctx));
          }
        }
        break;
      case CheckId::exp_decay:
        for (const auto& phi : phis) {
          // Odd parts (affine members) symmetrize to constants and are skipped.
          int used = 0;
          for (const auto& tf : battery_for(phi)) {
            if (used == dynamic) break;
            Field g = symmetrize(tf.values);
            if (g.max() - g.min() < 1e-8 * std::abs(g.max())) continue;
            ctx.phi = phi;
            ctx.f = std::move(g);
            ctx.f_label = tf.label + " (point-symmetrized)";
            emit_decay(run_check(id, ctx), fmt::format("exp_{}_{}", phi.label(), tf.label));
            ++used;
          }
        }
        break;
      case CheckId::rho_zero_rate:
        for (double p : v.p) {
          if (p == 2.0) continue;  // alpha = 0: the bound is the trivial monotonicity
          for (int k = 0; k < dynamic; ++k) {
            ctx.p = p;
            ctx.f = positive[k].values;
            ctx.f_label = positive[k].label;
            emit(run_check(id, ctx));
          }
        }
        break;
      case CheckId::fp_decay:
      case CheckId::fp_dissipation: {
        ctx.u0 = need_u0(id);
        ctx.f_label = *config.solver.initial;
        if (id == CheckId::fp_dissipation) {
          ctx.scheme = Scheme::crank_nicolson;
          ctx.t = v.t;
        }
        for (const auto& phi : phis) {
          if (phi.kind() == PhiKind::gauss_isoperimetry) continue;  // u/u_inf is not [0,1]-valued
          ctx.phi = phi;
          if (id == CheckId::fp_decay) {
            emit_decay(run_check(id, ctx), fmt::format("fp_{}", phi.label()));
          } else {
            emit(run_check(id, ctx));
          }
        }
        break;
      }
      case CheckId::duality:
        ctx.u0 = need_u0(id);
        ctx.f_label = *config.solver.initial;
        ctx.t = v.t;
        emit(run_check(id, ctx));
        break;
    }
  }
  return outcome;
}

void write_decay_csv(const fs::path& path, const DecayReport& report) {
  std::string text = "t,entropy,bound,dissipation\n";
  for (std::size_t k = 0; k < report.times.size(); ++k) {
    text += fmt::format("{},{},{},{}\n", report.times[k], report.entropy[k], report.bound[k],
                        report.dissipation[k]);
  }
  write_text(path, text);
}

void write_snapshot_csv(const fs::path& path, const Field& density) {
  const Grid& g = density.grid();
  std::string text = g.dim() == 1 ? "x1,density\n" : "x1,x2,density\n";
  for (Index i = 0; i < density.size(); ++i) {
    const auto x = g.point(i);
    text += g.dim() == 1 ? fmt::format("{},{}\n", x[0], density[i])
                         : fmt::format("{},{},{}\n", x[0], x[1], density[i]);
  }
  write_text(path, text);
}

int cmd_check_cd(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GridPtr grid = make_grid(config);
    const Model model = make_model(config);
    const CdSummary cd = estimate_rho(model, grid);
    Json j;
    j["rho"] = cd.estimate.rho;
    j["method"] = to_string(cd.estimate.method);
    std::vector<double> argmin(cd.estimate.argmin.begin(), cd.estimate.argmin.begin() + grid->dim());
    j["argmin"] = argmin;
    j["upper_bound_only"] = cd.estimate.upper_bound_only;
    const std::string text = j.dump(2) + "\n";
    out << text;
    if (config.output.json) {
      ensure_directory(config.output.directory);
      write_text(config.output.directory / "cd.json", text);
    }
    return int{exit_ok};
  });
}

int cmd_solve(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GridPtr grid = make_grid(config);
    const Model model = make_model(config);
    if (!config.solver.initial) throw ConfigError("[solver] initial: required by solve");
    discretize_model(model, grid);
    const Field u0 = sample_expression(grid, *config.solver.initial);
    const Propagator prop = assemble(model, grid);
    const Trajectory traj = solve_fokker_planck(prop, u0, config.solver.t_end, config.solver.dt,
                                                config.solver.scheme, config.solver.snapshots);
    ensure_directory(config.output.directory);
    Json j;
    j["scheme"] = to_string(config.solver.scheme);
    j["steps"] = traj.step_times.size() - 1;
    j["max_relative_mass_drift"] = traj.max_relative_mass_drift();
    j["min_density"] = traj.min_value();
    Json snaps = Json::array();
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
      const std::string file = fmt::format("snapshot_{:03d}.csv", k);
      if (config.output.csv) write_snapshot_csv(config.output.directory / file, traj.snapshots[k]);
      Json s;
      s["t"] = traj.times[k];
      s["file"] = file;
      snaps.push_back(std::move(s));
    }
    j["snapshots"] = std::move(snaps);
    const std::string text = j.dump(2) + "\n";
    out << text;
    if (config.output.json) write_text(config.output.directory / "solve.json", text);
    return int{exit_ok};
  });
}

int cmd_verify(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GridPtr grid = make_grid(config);
    const Model model = make_model(config);
    discretize_model(model, grid);
    const VerifyOutcome outcome = run_verify(config, model, grid);
    ensure_directory(config.output.directory);

    Json report;
    report["timestamp"] = timestamp();
    report["config"] = config_json(config);
    if (!config.verify.checks.empty()) {
      report["rho"] = outcome.rho;
      report["rho_source"] = outcome.rho_source;
    }
    Json checks = Json::array();
    int failed = 0;
    for (const auto& r : outcome.results) {
      checks.push_back(to_json(r));
      if (!r.pass) {
        ++failed;
        err << fmt::format("FAIL {} margin {:.3e} tolerance {:.3e}", to_string(r.id), r.margin,
                           r.tolerance);
        if (!r.context.empty()) {
          for (const auto& [key, value] : r.context) {
            if (key == "function" || key == "phi" || key == "p" || key == "t") {
              std::visit([&](const auto& x) { err << fmt::format(" {}={}", key, x); }, value);
            }
          }
        }
        err << '\n';
      }
    }
    report["checks"] = std::move(checks);
    Json decays = Json::array();
    for (const auto& [file, rep] : outcome.decays) {
      if (config.output.csv) write_decay_csv(config.output.directory / file, rep);
      Json d;
      d["file"] = file;
      d["label"] = rep.label;
      d["theoretical_rate"] = rep.theoretical_rate;
      d["fitted_rate"] = rep.fitted_rate ? Json(*rep.fitted_rate) : Json(nullptr);
      d["degenerate"] = rep.degenerate;
      d["violation"] = rep.violation;
      decays.push_back(std::move(d));
    }
    report["decay_reports"] = std::move(decays);
    Json summary;
    summary["total"] = outcome.results.size();
    summary["passed"] = outcome.results.size() - static_cast<std::size_t>(failed);
    summary["failed"] = failed;
    report["summary"] = std::move(summary);
    if (config.output.json) write_text(config.output.directory / "report.json", report.dump(2) + "\n");

    out << fmt::format("{} checks, {} passed, {} failed\n", outcome.results.size(),
                       outcome.results.size() - static_cast<std::size_t>(failed), failed);
    return failed == 0 ? int{exit_ok} : int{exit_checks_failed};
  });
}

int cmd_report(const fs::path& directory, std::ostream& out, std::ostream& err) {
  const fs::path path = directory / "report.json";
  std::ifstream in(path);
  if (!in) {
    err << "config error: cannot read " << path.string() << '\n';
    return exit_config_error;
  }
  Json report;
  try {
    report = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << path.string() << ": " << e.what() << '\n';
    return exit_config_error;
  }
  // Aggregate per check: count, failures, worst margin.
  struct Row {
    int count = 0;
    int failed = 0;
    double worst = std::numeric_limits<double>::infinity();
  };
  std::vector<std::string> order;
  std::map<std::string, Row> rows;
  for (const auto& c : report.value("checks", Json::array())) {
    const std::string id = c.value("check", "?");
    if (!rows.contains(id)) order.push_back(id);
    Row& row = rows[id];
    ++row.count;
    if (!c.value("pass", false)) ++row.failed;
    if (c["margin"].is_number()) row.worst = std::min(row.worst, c["margin"].get<double>());
  }
  int failed = 0;
  out << fmt::format("{:<20} {:>6} {:>6} {:>14}  {}\n", "check", "runs", "failed", "worst margin",
                     "status");
  for (const auto& id : order) {
    const Row& r = rows[id];
    failed += r.failed;
    out << fmt::format("{:<20} {:>6} {:>6} {:>14.6e}  {}\n", id, r.count, r.failed, r.worst,
                       r.failed == 0 ? "PASS" : "FAIL");
  }
  return failed == 0 ? int{exit_ok} : int{exit_checks_failed};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Phi-entropy inequalities and Fokker-Planck decay on discretized diffusions"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt, t_end;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "config file");
    if (needs_config) opt->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "test battery seed");
    sub->add_option("--dt", dt, "time step");
    sub->add_option("--t-end", t_end, "final time");
  };
  auto* check_cd = app.add_subcommand("check-cd", "estimate the curvature constant rho");
  auto* solve = app.add_subcommand("solve", "evolve the Fokker-Planck equation");
  auto* verify = app.add_subcommand("verify", "run the configured inequality checks");
  auto* report = app.add_subcommand("report", "summarize an existing report.json");
  add_common(check_cd, true);
  add_common(solve, true);
  add_common(verify, true);
  add_common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config_error;
  }

  if (report->parsed()) {
    fs::path dir = out_dir.value_or(".");
    if (!out_dir && !config_path.empty()) {
      try {
        dir = load_config(config_path).output.directory;
      } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config_error;
      }
    }
    return cmd_report(dir, out, err);
  }

  RunConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config_error;
  }
  if (out_dir) config.output.directory = *out_dir;
  if (seed) config.verify.seed = *seed;
  if (dt) {
    if (!(*dt > 0.0)) {
      err << "config error: --dt must be positive\n";
      return exit_config_error;
    }
    config.solver.dt = *dt;
  }
  if (t_end) {
    if (!(*t_end >= 0.0)) {
      err << "config error: --t-end must be nonnegative\n";
      return exit_config_error;
    }
    config.solver.t_end = *t_end;
  }

  if (check_cd->parsed()) return cmd_check_cd(config, out, err);
  if (solve->parsed()) return cmd_solve(config, out, err);
  return cmd_verify(config, out, err);
}

}  // namespace fplab::cli
