// Command-line front end: reproducible experiments with JSON/CSV/SVG outputs.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcsq/certify.hpp"
#include "mcsq/exponents.hpp"
#include "mcsq/field.hpp"
#include "mcsq/functionals.hpp"
#include "mcsq/geometry.hpp"
#include "mcsq/highlow.hpp"
#include "mcsq/weights.hpp"

using json = nlohmann::json;
using namespace mcsq;

namespace {

constexpr const char* kTool = "mcsq";
constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutDirEnv = "MCSQ_OUT_DIR";
constexpr double kReplayTol = 1e-9;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest(const json& j) { return hex64(fnv1a(j.dump())); }

// ---- argument parsing helpers ----

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) throw UsageError(what + ": empty entry in list '" + text + "'");
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + tok + "' is not a number");
    }
    if (used != tok.size() || !std::isfinite(v)) throw UsageError(what + ": '" + tok + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

std::vector<double> parse_scales(const std::string& text, int n, const std::string& what) {
  auto v = parse_list(text, what);
  for (double R : v)
    if (!is_admissible_scale(n, R))
      {
      std::ostringstream os;
      os << what << ": R = " << R << " is not a power of 2^" << n;
      throw UsageError(os.str());
    }
  return v;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

int pick_oversample(int n, int requested) { return requested > 0 ? requested : default_oversample(n); }

json grid_json(const Grid& g) { return {{"sides", g.sides}, {"box", g.box}}; }

json field_grid(int n, double R, int oversample) {
  auto L = make_field_lattice(n, R, oversample);
  return grid_json(make_field_grid(*L, 2));
}

json to_json(const CascadeTrace& tr) {
  json steps = json::array();
  for (const auto& s : tr.steps)
    steps.push_back({{"step", s.step},
                     {"level", s.level},
                     {"branch", s.branch},
                     {"sigma", s.sigma},
                     {"constant", s.constant},
                     {"margin", std::isfinite(s.margin) ? json(s.margin) : json(nullptr)},
                     {"low_integral", s.low_integral},
                     {"high_integral", s.high_integral},
                     {"regroup", s.regroup}});
  return {{"steps", steps},
          {"start", tr.start},
          {"final_unsmoothed", tr.final_unsmoothed},
          {"final_smoothed", tr.final_smoothed},
          {"final_constant", tr.final_constant},
          {"terminated", tr.terminated},
          {"step_cap", tr.step_cap},
          {"message", tr.message}};
}

// ---- commands ----
// A command enumerates entry parameters, evaluates one entry, and summarizes.

struct Command {
  std::function<std::vector<json>(const json&)> plan;
  std::function<json(const json&, const json&)> eval;
  std::function<json(const json&, const std::vector<json>&)> summarize;
  std::function<json(const json&)> grid = [](const json&) { return json(nullptr); };
  std::function<json(const json&)> seeds = [](const json&) { return json::array(); };
};

std::map<std::string, Command>& registry() {
  static std::map<std::string, Command> r;
  return r;
}

json entry_values(const std::vector<json>& entries, const std::string& key) {
  json out = json::array();
  for (const auto& e : entries) out.push_back(e["values"][key]);
  return out;
}

void register_commands() {
  auto& reg = registry();

  reg["exponents"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (int n = 1; n <= c["n_max"].get<int>(); ++n) p.push_back({{"n", n}});
        p.push_back({{"pprops", true}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        if (q.contains("pprops")) {
          PpropsReport r = verify_pprops(c["n_max"].get<int>());
          json props = json::array();
          for (int i = 0; i < 4; ++i)
            props.push_back({{"property", i + 1}, {"checked", r.checked[i]}, {"failed", r.failed[i]}, {"pass", r.failed[i] == 0}});
          json fails = json::array();
          for (const auto& e : r.entries) fails.push_back({{"property", e.property}, {"n", e.n}, {"k", e.k}, {"detail", e.detail}});
          return {{"properties", props}, {"failures", fails}, {"pass", r.all_pass()}};
        }
        int n = q["n"].get<int>();
        Rational p = critical_exponent(n);
        return {{"n", n}, {"p", p.str()}, {"p_tilde", even_exponent(n)}, {"next_even_index", next_even_index(p)}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        return {{"pass", es.back()["values"]["pass"].get<bool>()}};
      }};

  reg["geometry census"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double R : c["R"]) p.push_back({{"R", R}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        OverlapCensus oc = sumset_overlap_census(c["n"].get<int>(), q["R"].get<double>(), c["thickness"].get<double>());
        json hist = json::object();
        for (const auto& [k, v] : oc.histogram) hist[std::to_string(k)] = v;
        return {{"R", oc.R}, {"max_overlap", oc.max_overlap}, {"diagonal_min", oc.diagonal_min}, {"histogram", hist}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        json mx = entry_values(es, "max_overlap");
        bool identical = true, ok = true;
        for (const auto& e : es) {
          identical = identical && e["values"]["max_overlap"] == mx[0];
          ok = ok && e["values"]["diagonal_min"].get<int>() >= 1;
        }
        return {{"max_overlap", mx}, {"identical_across_R", identical}, {"pass", ok}};
      }};

  reg["geometry nesting"] = Command{
      [](const json&) { return std::vector<json>{json::object()}; },
      [](const json& c, const json&) -> json {
        NestingReport r = cone_nesting_check(c["n"].get<int>(), c["m"].get<int>(), c["R"].get<double>(), c["r"].get<double>(),
                                             c["samples"].get<int>(), c["seed"].get<std::uint64_t>());
        return {{"violations", r.violations},
                {"samples", r.samples},
                {"witness_fine_minus_coarse", r.witness_fine_minus_coarse},
                {"witness_coarse_minus_fine", r.witness_coarse_minus_fine},
                {"symmetric_difference_empty", r.symmetric_difference_empty}};
      },
      [](const json& c, const std::vector<json>& es) -> json {
        const json& v = es[0]["values"];
        bool ok = c["m"].get<int>() == 0 ? v["violations"].get<int>() == 0
                                         : (v["witness_fine_minus_coarse"].get<bool>() || v["symmetric_difference_empty"].get<bool>());
        return {{"pass", ok}};
      },
      [](const json&) { return json(nullptr); },
      [](const json& c) { return json::array({c["seed"]}); }};

  reg["geometry l2tech"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double r : c["r"]) p.push_back({{"r", r}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        L2TechConfig cfg;
        cfg.C = c["C"].get<double>();
        cfg.seed = c["seed"].get<std::uint64_t>();
        L2TechProbe pr = l2tech_overlap_probe(c["n"].get<int>(), q["r"].get<double>(), c["lambda"].get<double>(),
                                              c["trials"].get<int>(), cfg);
        return {{"r", pr.r}, {"max_T", pr.max_T}, {"normalized", pr.normalized}, {"admissible_systems", pr.admissible_systems}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        double lo = INFINITY, hi = 0.0;
        for (const auto& e : es) {
          double v = e["values"]["normalized"].get<double>();
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        return {{"C", hi}, {"spread", lo > 0.0 ? hi / lo : INFINITY}, {"pass", std::isfinite(hi)}};
      },
      [](const json&) { return json(nullptr); },
      [](const json& c) { return json::array({c["seed"]}); }};

  reg["weights verify"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double s : c["sides"]) p.push_back({{"sides", static_cast<int>(s)}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        WeightCalculusReport r = verify_weight_calculus(c["n"].get<int>(), c["kappa"].get<double>(), q["sides"].get<int>(),
                                                        c["box"].get<double>());
        return {{"sides", r.sides},
                {"decay_lower", r.decay_lower},
                {"decay_upper", r.decay_upper},
                {"min_on_unit_ball", r.min_on_unit_ball},
                {"fourier_mass_outside", r.fourier_mass_outside},
                {"self_convolution", r.self_convolution},
                {"monotonicity", r.monotonicity},
                {"mixed_decay", r.mixed_decay},
                {"grid_mass", r.grid_mass},
                {"note", r.note}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        auto drift = [&](const char* k) {
          double lo = INFINITY, hi = 0.0;
          for (const auto& e : es) {
            double v = e["values"][k].get<double>();
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
          return hi > 0.0 ? (hi - lo) / hi : 0.0;
        };
        bool ok = true;
        for (const auto& e : es) {
          const json& v = e["values"];
          ok = ok && v["min_on_unit_ball"].get<double>() > 0.0 && v["fourier_mass_outside"].get<double>() < 1e-6 &&
               std::isfinite(v["self_convolution"].get<double>());
        }
        double d1 = drift("self_convolution"), d2 = drift("mixed_decay");
        return {{"self_convolution_drift", d1}, {"mixed_decay_drift", d2}, {"pass", ok && d1 < 0.1 && d2 < 0.1}};
      },
      [](const json& c) {
        json gs = json::array();
        for (double s : c["sides"]) gs.push_back({{"sides", std::vector<int>(c["n"].get<int>(), static_cast<int>(s))}, {"box", c["box"]}});
        return gs;
      }};

  reg["ratio-scan"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double R : c["R"])
          for (int s = 0; s < c["seeds"].get<int>(); ++s) p.push_back({{"R", R}, {"seed", c["seed_base"].get<std::uint64_t>() + s}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        int n = c["n"].get<int>();
        double R = q["R"].get<double>();
        auto L = make_field_lattice(n, R, c["oversample"].get<int>());
        Grid g = make_field_grid(*L, 2);
        ProfileSpec ps;
        ps.kind = parse_profile(c["profile"].get<std::string>());
        DiscreteField f = synthesize(L, g, ps, q["seed"].get<std::uint64_t>());
        RatioReport r = sq_constant(f, c["p"].get<double>(), c["refine"].get<int>());
        return {{"R", R}, {"seed", q["seed"]}, {"numerator", r.numerator}, {"denominator", r.denominator}, {"ratio", r.ratio}};
      },
      [](const json& c, const std::vector<json>& es) -> json {
        std::vector<double> Rs, mean, mx;
        for (double R : c["R"]) {
          double s = 0.0, m = 0.0;
          int cnt = 0;
          for (const auto& e : es)
            if (e["values"]["R"].get<double>() == R) {
              double v = e["values"]["ratio"].get<double>();
              s += v;
              m = std::max(m, v);
              ++cnt;
            }
          Rs.push_back(R);
          mean.push_back(s / cnt);
          mx.push_back(m);
        }
        json out = {{"R", Rs}, {"mean_ratio", mean}, {"max_ratio", mx}, {"pass", true}};
        if (Rs.size() >= 2) {
          out["slope_mean"] = loglog_slope(Rs, mean);
          out["slope_max"] = loglog_slope(Rs, mx);
        }
        return out;
      },
      [](const json& c) {
        json gs = json::array();
        for (double R : c["R"]) gs.push_back(field_grid(c["n"].get<int>(), R, c["oversample"].get<int>()));
        return gs;
      },
      [](const json& c) {
        json s = json::array();
        for (int i = 0; i < c["seeds"].get<int>(); ++i) s.push_back(c["seed_base"].get<std::uint64_t>() + i);
        return s;
      }};

  reg["optimize"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (int s = 0; s < c["starts"].get<int>(); ++s) p.push_back({{"seed", c["seed_base"].get<std::uint64_t>() + s}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        int n = c["n"].get<int>();
        auto L = make_field_lattice(n, c["R"].get<double>(), c["oversample"].get<int>());
        Grid g = make_field_grid(*L, 2);
        ProfileSpec ps;
        ps.kind = parse_profile(c["profile"].get<std::string>());
        DiscreteField f = synthesize(L, g, ps, q["seed"].get<std::uint64_t>());
        OptimizeOptions opt;
        opt.budget = c["budget"].get<int>();
        opt.amplitudes = c["amplitudes"].get<bool>();
        OptimizeResult r = maximize_ratio(f, c["p"].get<double>(), opt);
        return {{"seed", q["seed"]},
                {"initial_ratio", r.initial_ratio},
                {"ratio", r.ratio},
                {"iterations", r.iterations},
                {"rejected", r.rejected},
                {"stop_reason", r.stop_reason},
                {"trace", r.trace}};
      },
      [](const json& c, const std::vector<json>& es) -> json {
        double best = 0.0;
        for (const auto& e : es) best = std::max(best, e["values"]["ratio"].get<double>());
        bool ok = c["p"].get<double>() != 2.0 || best <= 1.0 + 1e-6;
        return {{"best_ratio", best}, {"pass", ok}};
      },
      [](const json& c) { return field_grid(c["n"].get<int>(), c["R"].get<double>(), c["oversample"].get<int>()); },
      [](const json& c) {
        json s = json::array();
        for (int i = 0; i < c["starts"].get<int>(); ++i) s.push_back(c["seed_base"].get<std::uint64_t>() + i);
        return s;
      }};

  reg["highlow run"] = Command{
      [](const json&) { return std::vector<json>{{{"part", "levels"}}, {{"part", "cascade"}}}; },
      [](const json& c, const json& q) -> json {
        HighLowConfig h;
        h.n = c["n"].get<int>();
        h.R = c["R"].get<double>();
        h.oversample = c["oversample"].get<int>();
        h.epsilon = c["epsilon"].get<double>();
        h.K = c["K"].get<double>();
        h.A_factor = c["A_factor"].get<double>();
        h.profile = parse_profile(c["profile"].get<std::string>());
        h.seed = c["seed"].get<std::uint64_t>();
        if (q["part"] == "cascade") {
          auto L = make_field_lattice(h.n, h.R, h.oversample);
          Grid g = make_field_grid(*L, 2);
          ProfileSpec ps;
          ps.kind = h.profile;
          DiscreteField f = synthesize(L, g, ps, h.seed);
          ScaleLadder lad = build_ladder(h.n, h.R, h.epsilon, h.K, h.A_factor, h.N0);
          return to_json(unwind_cascade(f, lad, c["p"].get<double>()));
        }
        HighLowResult r = run_highlow(h);
        json levels = json::array();
        for (const auto& l : r.levels)
          levels.push_back({{"k", l.k},
                            {"low_ratio", l.low_ratio},
                            {"high_leakage", l.high_leakage},
                            {"omega", l.omega},
                            {"violations", l.violations},
                            {"steep", l.steep},
                            {"steep_violations", l.steep_violations},
                            {"pruning_error", l.pruning_error},
                            {"pruned", l.pruned},
                            {"tiles", l.tiles}});
        return {{"ladder", {{"N", r.ladder.N}, {"scales", r.ladder.scales}, {"block_scales", r.ladder.block_scales}, {"kappa", r.ladder.kappa}}},
                {"alpha", r.alpha},
                {"beta", r.beta},
                {"D", r.D},
                {"A", r.A},
                {"U", r.U},
                {"low_set", r.low_set},
                {"low_error", r.low_error},
                {"prune_bound", r.prune_bound},
                {"monotonicity_violations", r.monotonicity_violations},
                {"levels", levels}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        const json& lv = es[0]["values"];
        const json& tr = es[1]["values"];
        bool ok = tr["terminated"].get<bool>() && lv["monotonicity_violations"].get<std::int64_t>() == 0 &&
                  lv["low_error"].get<double>() <= 1.0;
        for (const auto& l : lv["levels"]) ok = ok && l["violations"].get<std::int64_t>() == 0 && l["pruning_error"].get<double>() <= 1.0;
        for (const auto& s : tr["steps"]) ok = ok && std::isfinite(s["constant"].get<double>());
        return {{"D", lv["D"]}, {"A", lv["A"]}, {"final_constant", tr["final_constant"]}, {"pass", ok}};
      },
      [](const json& c) { return field_grid(c["n"].get<int>(), c["R"].get<double>(), c["oversample"].get<int>()); },
      [](const json& c) { return json::array({c["seed"]}); }};

  reg["certify snmm"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double e : c["epsilon"]) p.push_back({{"epsilon", e}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        RecursionConfig rc;
        rc.epsilon = q["epsilon"].get<double>();
        rc.n = c["n"].get<int>();
        rc.c_small = c["c_small"].get<double>();
        rc.c_large = c["c_large"].get<double>();
        rc.n_factor = c["n_factor"].get<double>();
        SnmmResult r = snmm_halting_check(rc);
        json ws = json::array();
        bool all = r.pass;
        // witnesses at r >= K must hold; the one below K shows minimality
        for (const auto& w : r.witnesses) {
          bool at_K = w.log2_r >= r.minimal_log2K;
          bool holds = snmm_witness_holds(rc, r.minimal_log2K, w);
          if (at_K) all = all && holds;
          ws.push_back({{"k", w.k}, {"log2_r", w.log2_r}, {"log_value", w.log_value}, {"holds", holds}});
        }
        return {{"epsilon", rc.epsilon},
                {"pass", r.pass},
                {"minimal_log2K", r.minimal_log2K},
                {"k_peak", r.k_peak},
                {"k_turn", r.k_turn},
                {"tail_slope", r.tail_slope},
                {"witnesses", ws},
                {"witnesses_hold", all},
                {"message", r.message}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        bool ok = true;
        for (const auto& e : es) ok = ok && e["values"]["pass"].get<bool>() && e["values"]["witnesses_hold"].get<bool>();
        return {{"minimal_log2K", entry_values(es, "minimal_log2K")}, {"pass", ok}};
      }};

  reg["certify s1bd"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double e : c["eta"]) p.push_back({{"eta", e}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        S1bdConstants k;
        k.n = c["n"].get<int>();
        k.c_first = c["c_first"].get<double>();
        S1bdResult r = s1bd_closure_check(q["eta"].get<double>(), k);
        return {{"eta", q["eta"]},
                {"admissible", r.admissible},
                {"epsilon", r.epsilon},
                {"epsilon1", r.epsilon1},
                {"exponents", {r.exponents[0], r.exponents[1], r.exponents[2]}},
                {"message", r.message}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        bool ok = true;
        for (const auto& e : es) ok = ok && e["values"]["admissible"].get<bool>();
        return {{"pass", ok}};
      }};

  reg["certify fixed-point"] = Command{
      [](const json&) { return std::vector<json>{json::object()}; },
      [](const json& c, const json&) -> json {
        FixedPointConfig f;
        f.epsilon = c["epsilon"].get<double>();
        f.N0 = c["N0"].get<double>();
        f.eps1 = c["eps1"].get<double>();
        f.K_const = c["K"].get<double>();
        f.T_base = c["T_base"].get<double>();
        const double thr = fixed_point_threshold(f);
        f.delta = c["delta"].get<double>() > 0.0 ? c["delta"].get<double>() : thr + 1.0;
        f.log2R_max = c["log2R_max"].get<double>();
        FixedPointTrajectory t = multiscale_fixed_point(f);
        json lt = json::array();
        for (double v : t.log2T) lt.push_back(std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "-inf"));
        return {{"threshold", std::isfinite(thr) ? json(thr) : json(nullptr)},
                {"delta", f.delta},
                {"log2R", t.log2R},
                {"log2T", lt},
                {"bounded", t.bounded},
                {"diverged", t.diverged},
                {"max_log2_ratio", std::isfinite(t.max_log2_ratio) ? json(t.max_log2_ratio) : json(nullptr)},
                {"message", t.message}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        const json& v = es[0]["values"];
        return {{"threshold", v["threshold"]}, {"bounded", v["bounded"]}, {"diverged", v["diverged"]}, {"pass", true}};
      }};

  reg["certify ingredients"] = Command{
      [](const json& c) {
        std::vector<json> p;
        for (double e : c["epsilon"])
          for (double l : {16.0, 64.0, 256.0, 1024.0}) p.push_back({{"epsilon", e}, {"log2_ratio", l}});
        return p;
      },
      [](const json& c, const json& q) -> json {
        double e = q["epsilon"].get<double>(), l = q["log2_ratio"].get<double>();
        double A = c["A"].get<double>(), B = c["B"].get<double>();
        IngredientResult r = ingredient_composition_check(ingredient_rule(e, A, B, l));
        double bound = ingredient_rule_constant_log2(e, A, B) + e * l;
        return {{"epsilon", e}, {"log2_ratio", l}, {"log2_constant", r.log2_constant}, {"log2_bound", bound},
                {"depth", r.depth}, {"resolved", r.resolved}, {"within_bound", r.log2_constant <= bound + 1e-9}};
      },
      [](const json&, const std::vector<json>& es) -> json {
        bool ok = true;
        for (const auto& e : es) ok = ok && e["values"]["within_bound"].get<bool>();
        return {{"pass", ok}};
      }};
}

// ---- running and reporting ----

json run_command(const std::string& name, const json& config) {
  const Command& cmd = registry().at(name);
  json entries = json::array();
  std::vector<json> es;
  int id = 0;
  for (const json& q : cmd.plan(config)) {
    json values = cmd.eval(config, q);
    json e = {{"id", id++}, {"params", q}, {"values", values}, {"digest", digest(values)}};
    es.push_back(e);
    entries.push_back(e);
  }
  json summary = cmd.summarize(config, es);
  return {{"tool", kTool},
          {"version", kVersion},
          {"command", name},
          {"config", config},
          {"config_hash", digest(config)},
          {"seeds", cmd.seeds(config)},
          {"grid", cmd.grid(config)},
          {"entries", entries},
          {"summary", summary},
          {"summary_digest", digest(summary)}};
}

std::string default_out(const std::string& name, const std::string& ext) {
  const char* dir = std::getenv(kOutDirEnv);
  if (!dir || !*dir) return "";
  std::string slug = name;
  for (auto& ch : slug)
    if (ch == ' ') ch = '-';
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / (slug + ext)).string();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write " + path);
  os << text;
}

void write_csv(const json& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write " + path);
  os << "# " << kTool << " " << kVersion << " config_hash=" << report["config_hash"].get<std::string>() << "\n";
  os << "R,seed,numerator,denominator,ratio\n";
  os.precision(17);
  for (const auto& e : report["entries"]) {
    const json& v = e["values"];
    os << v["R"].get<double>() << "," << v["seed"].get<std::uint64_t>() << "," << v["numerator"].get<double>() << ","
       << v["denominator"].get<double>() << "," << v["ratio"].get<double>() << "\n";
  }
}

// log2 of the mean and max ratio against log2 R
void write_svg(const json& report, const std::string& path) {
  const json& s = report["summary"];
  std::vector<double> x, y1, y2;
  for (std::size_t i = 0; i < s["R"].size(); ++i) {
    x.push_back(std::log2(s["R"][i].get<double>()));
    y1.push_back(std::log2(s["mean_ratio"][i].get<double>()));
    y2.push_back(std::log2(s["max_ratio"][i].get<double>()));
  }
  const double W = 480, H = 320, pad = 40;
  double x0 = *std::min_element(x.begin(), x.end()), x1 = *std::max_element(x.begin(), x.end());
  double y0 = std::min(*std::min_element(y1.begin(), y1.end()), 0.0), yt = *std::max_element(y2.begin(), y2.end());
  if (x1 == x0) x1 = x0 + 1;
  if (yt == y0) yt = y0 + 1;
  auto px = [&](double v) { return pad + (v - x0) / (x1 - x0) * (W - 2 * pad); };
  auto py = [&](double v) { return H - pad - (v - y0) / (yt - y0) * (H - 2 * pad); };
  std::ofstream os(path);
  if (!os) throw UsageError("cannot write " + path);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad << "\" stroke=\"black\"/>\n";
  auto line = [&](const std::vector<double>& y, const char* color) {
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) os << px(x[i]) << "," << py(y[i]) << " ";
    os << "\"/>\n";
  };
  line(y1, "steelblue");
  line(y2, "firebrick");
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\">log2 R</text>\n";
  os << "<text x=\"12\" y=\"" << H / 2 << "\" transform=\"rotate(-90 12 " << H / 2 << ")\" text-anchor=\"middle\">log2 ratio</text>\n";
  os << "</svg>\n";
}

std::optional<std::string> compare(const json& a, const json& b, const std::string& where) {
  if (a.is_number() && b.is_number()) {
    double x = a.get<double>(), y = b.get<double>();
    double scale = std::max({1.0, std::abs(x), std::abs(y)});
    if (!(std::abs(x - y) <= kReplayTol * scale)) return where + ": recorded " + a.dump() + " recomputed " + b.dump();
    return std::nullopt;
  }
  if (a.type() != b.type()) return where + ": type differs";
  if (a.is_object()) {
    if (a.size() != b.size()) return where + ": key set differs";
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) return where + "." + it.key() + ": missing";
      if (auto m = compare(it.value(), b[it.key()], where + "." + it.key())) return m;
    }
    return std::nullopt;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return where + ": length differs";
    for (std::size_t i = 0; i < a.size(); ++i)
      if (auto m = compare(a[i], b[i], where + "[" + std::to_string(i) + "]")) return m;
    return std::nullopt;
  }
  if (a != b) return where + ": recorded " + a.dump() + " recomputed " + b.dump();
  return std::nullopt;
}

int replay(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    std::cerr << "replay: cannot open " << path << "\n";
    return 2;
  }
  json rep;
  try {
    rep = json::parse(is);
  } catch (const std::exception& e) {
    std::cerr << "replay: " << path << " is not valid JSON: " << e.what() << "\n";
    return 2;
  }
  auto fail = [&](const std::string& msg) {
    std::cout << json({{"replay", path}, {"pass", false}, {"location", msg}}).dump(2) << "\n";
    return 1;
  };
  for (const char* k : {"command", "config", "config_hash", "entries", "summary", "summary_digest"})
    if (!rep.contains(k)) return fail(std::string("missing field ") + k);
  const std::string name = rep["command"].get<std::string>();
  if (!registry().count(name)) return fail("unknown command " + name);
  if (digest(rep["config"]) != rep["config_hash"].get<std::string>()) return fail("config_hash mismatch");
  if (digest(rep["summary"]) != rep["summary_digest"].get<std::string>()) return fail("summary: digest mismatch");
  const json& entries = rep["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!entries[i].contains("values") || digest(entries[i]["values"]) != entries[i].value("digest", ""))
      return fail("entries[" + std::to_string(i) + "]: digest mismatch");
  const Command& cmd = registry().at(name);
  std::vector<json> plan = cmd.plan(rep["config"]);
  if (plan.size() != entries.size()) return fail("entries: count differs from plan");
  std::vector<std::size_t> idx(entries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(fnv1a(rep["config_hash"].get<std::string>()));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t take = std::max<std::size_t>(1, (entries.size() + 9) / 10);
  json checked = json::array();
  for (std::size_t t = 0; t < take && t < idx.size(); ++t) {
    std::size_t i = idx[t];
    if (auto m = compare(entries[i]["params"], plan[i], "entries[" + std::to_string(i) + "].params")) return fail(*m);
    json v = cmd.eval(rep["config"], plan[i]);
    if (auto m = compare(entries[i]["values"], v, "entries[" + std::to_string(i) + "].values")) return fail(*m);
    checked.push_back(i);
  }
  std::cout << json({{"replay", path}, {"pass", true}, {"checked", checked}, {"entries", entries.size()}}).dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  register_commands();
  CLI::App app{"Square-function experiments on moment-curve partitions"};
  app.set_version_flag("--version", std::string(kTool) + " " + kVersion);
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (1 = bit-exact)")->check(CLI::PositiveNumber);
  std::string out, csv, svg;
  auto add_out = [&](CLI::App* c) {
    c->add_option("--out", out, "report path (default: $" + std::string(kOutDirEnv) + "/<command>.json or stdout)");
  };
  const auto profiles = CLI::IsMember({"random", "focusing", "single", "packets"});

  json config;
  std::string command;

  // exponents
  struct { int n_max = 10; std::string format = "json"; } ex;
  auto* exc = app.add_subcommand("exponents", "exponent table and property report");
  exc->add_option("--n-max", ex.n_max, "largest dimension")->capture_default_str();
  exc->add_option("--format", ex.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  add_out(exc);
  exc->callback([&] {
    require(ex.n_max >= 2, "--n-max must be at least 2");
    command = "exponents";
    config = {{"n_max", ex.n_max}};
  });

  // geometry
  auto* geo = app.add_subcommand("geometry", "block geometry checks");
  geo->require_subcommand(1);
  struct { int n = 2; std::string R = "16,64,256"; double thickness = 1.0; } cs;
  auto* census = geo->add_subcommand("census", "sumset overlap census");
  census->add_option("--n", cs.n)->capture_default_str();
  census->add_option("--R", cs.R, "scale or comma list")->capture_default_str();
  census->add_option("--thickness", cs.thickness)->capture_default_str();
  add_out(census);
  census->callback([&] {
    require(cs.n >= 1, "--n must be positive");
    require(cs.thickness > 0.0, "--thickness must be positive");
    command = "geometry census";
    config = {{"n", cs.n}, {"R", parse_scales(cs.R, cs.n, "--R")}, {"thickness", cs.thickness}};
  });
  struct { int n = 2, m = 0, samples = 10000; double R = 256, r = 16; std::uint64_t seed = 1; } ns;
  auto* nest = geo->add_subcommand("nesting", "cone nesting sampler");
  nest->add_option("--n", ns.n)->capture_default_str();
  nest->add_option("--m", ns.m)->capture_default_str();
  nest->add_option("--R", ns.R)->capture_default_str();
  nest->add_option("--r", ns.r)->capture_default_str();
  nest->add_option("--samples", ns.samples)->capture_default_str();
  nest->add_option("--seed", ns.seed)->capture_default_str();
  add_out(nest);
  nest->callback([&] {
    require(ns.n >= 1 && ns.m >= 0 && ns.m <= ns.n - 1, "--m must lie in [0, n-1]");
    require(ns.r > 0.0 && ns.r <= ns.R, "--r must lie in (0, R]");
    require(ns.samples > 0, "--samples must be positive");
    command = "geometry nesting";
    config = {{"n", ns.n}, {"m", ns.m}, {"R", ns.R}, {"r", ns.r}, {"samples", ns.samples}, {"seed", ns.seed}};
  });
  struct { int n = 2, trials = 200; std::string r = "256,1024,4096"; double lambda = 1.0, C = 1.0; std::uint64_t seed = 7; } lt;
  auto* l2t = geo->add_subcommand("l2tech", "overlap probe for polynomial coefficient systems");
  l2t->add_option("--n", lt.n)->capture_default_str();
  l2t->add_option("--r", lt.r, "scale or comma list")->capture_default_str();
  l2t->add_option("--lambda", lt.lambda)->capture_default_str();
  l2t->add_option("--trials", lt.trials)->capture_default_str();
  l2t->add_option("--C", lt.C)->capture_default_str();
  l2t->add_option("--seed", lt.seed)->capture_default_str();
  add_out(l2t);
  l2t->callback([&] {
    require(lt.n >= 1, "--n must be positive");
    require(lt.lambda > 0.0 && lt.lambda <= 1.0, "--lambda must lie in (0,1]");
    require(lt.trials > 0, "--trials must be positive");
    auto rs = parse_list(lt.r, "--r");
    for (double r : rs) require(r >= 1.0, "--r entries must be at least 1");
    command = "geometry l2tech";
    config = {{"n", lt.n}, {"r", rs}, {"lambda", lt.lambda}, {"trials", lt.trials}, {"C", lt.C}, {"seed", lt.seed}};
  });

  // weights
  auto* wt = app.add_subcommand("weights", "weight calculus");
  wt->require_subcommand(1);
  struct { int n = 2; double kappa = 0.0, box = 0.0; std::string sides; } wo;
  auto* wv = wt->add_subcommand("verify", "convolution domination and decay report");
  wv->add_option("--n", wo.n)->capture_default_str();
  wv->add_option("--kappa", wo.kappa, "decay exponent (default 4n)");
  wv->add_option("--sides", wo.sides, "grid sides, comma list (refinement ladder)");
  wv->add_option("--box", wo.box, "physical box side");
  add_out(wv);
  wv->callback([&] {
    const int n = wo.n;
    require(n >= 1 && n <= 4, "--n must lie in [1,4]");
    double kappa = wo.kappa > 0.0 ? wo.kappa : 4.0 * n;
    require(kappa > n + 1.0, "--kappa must exceed n + 1");
    std::string sides = wo.sides.empty() ? (n <= 2 ? "256,512" : "64,128") : wo.sides;
    double box = wo.box > 0.0 ? wo.box : (n <= 2 ? 64.0 : 16.0);
    auto s = parse_list(sides, "--sides");
    for (double v : s) require(v >= 8 && std::exp2(std::round(std::log2(v))) == v, "--sides entries must be powers of two >= 8");
    command = "weights verify";
    config = {{"n", n}, {"kappa", kappa}, {"sides", s}, {"box", box}};
  });

  // ratio-scan
  struct { int n = 2, seeds = 16, oversample = 0, refine = 1; double p = 4.0; std::string R = "64,256,1024", profile = "random"; std::uint64_t seed_base = 0; } ro;
  auto* rs = app.add_subcommand("ratio-scan", "square-function ratio across scales and seeds");
  rs->add_option("--n", ro.n)->capture_default_str();
  rs->add_option("--p", ro.p)->capture_default_str();
  rs->add_option("--R-list", ro.R)->capture_default_str();
  rs->add_option("--profile", ro.profile)->check(profiles)->capture_default_str();
  rs->add_option("--seeds", ro.seeds)->capture_default_str();
  rs->add_option("--seed-base", ro.seed_base)->capture_default_str();
  rs->add_option("--oversample", ro.oversample, "lattice oversampling (default by dimension)");
  rs->add_option("--refine", ro.refine)->capture_default_str();
  rs->add_option("--csv", csv, "CSV table path");
  rs->add_option("--svg", svg, "SVG plot path");
  add_out(rs);
  rs->callback([&] {
    require(ro.n >= 1 && ro.n <= 3, "--n must lie in [1,3]");
    require(ro.p >= 2.0, "--p must be at least 2");
    require(ro.seeds >= 1, "--seeds must be positive");
    require(ro.refine >= 1, "--refine must be positive");
    command = "ratio-scan";
    config = {{"n", ro.n}, {"p", ro.p}, {"R", parse_scales(ro.R, ro.n, "--R-list")}, {"profile", ro.profile},
              {"seeds", ro.seeds}, {"seed_base", ro.seed_base}, {"oversample", pick_oversample(ro.n, ro.oversample)},
              {"refine", ro.refine}};
  });

  // optimize
  struct { int n = 2, budget = 200, starts = 1, oversample = 0; double p = 4.0; std::string R = "256", profile = "random"; std::uint64_t seed_base = 0; bool amplitudes = false; } oo;
  auto* op = app.add_subcommand("optimize", "gradient ascent on the square-function ratio");
  op->add_option("--n", oo.n)->capture_default_str();
  op->add_option("--p", oo.p)->capture_default_str();
  op->add_option("--R", oo.R)->capture_default_str();
  op->add_option("--budget", oo.budget)->capture_default_str();
  op->add_option("--starts", oo.starts)->capture_default_str();
  op->add_option("--seed-base", oo.seed_base)->capture_default_str();
  op->add_option("--profile", oo.profile)->check(profiles)->capture_default_str();
  op->add_option("--oversample", oo.oversample);
  op->add_flag("--amplitudes", oo.amplitudes, "also optimize moduli");
  add_out(op);
  op->callback([&] {
    require(oo.n >= 1 && oo.n <= 3, "--n must lie in [1,3]");
    require(oo.p >= 2.0, "--p must be at least 2");
    require(oo.budget >= 0 && oo.starts >= 1, "--budget must be nonnegative and --starts positive");
    auto Rv = parse_scales(oo.R, oo.n, "--R");
    require(Rv.size() == 1, "--R takes a single scale");
    command = "optimize";
    config = {{"n", oo.n}, {"p", oo.p}, {"R", Rv[0]}, {"budget", oo.budget}, {"starts", oo.starts},
              {"seed_base", oo.seed_base}, {"profile", oo.profile}, {"oversample", pick_oversample(oo.n, oo.oversample)},
              {"amplitudes", oo.amplitudes}};
  });

  // highlow
  auto* hl = app.add_subcommand("highlow", "pruning, high/low split and cascade");
  hl->require_subcommand(1);
  struct { int n = 2, oversample = 0; double epsilon = 0.5, p = 4.0, K = 2.0, A_factor = 10.0; std::string R = "256", profile = "random"; std::uint64_t seed = 0; } ho;
  auto* hr = hl->add_subcommand("run", "one ensemble member end to end");
  hr->add_option("--n", ho.n)->capture_default_str();
  hr->add_option("--R", ho.R)->capture_default_str();
  hr->add_option("--epsilon", ho.epsilon)->capture_default_str();
  hr->add_option("--p", ho.p)->capture_default_str();
  hr->add_option("--profile", ho.profile)->check(profiles)->capture_default_str();
  hr->add_option("--seed", ho.seed)->capture_default_str();
  hr->add_option("--oversample", ho.oversample, "lattice oversampling (default 2 for n=2, 1 for n=3)");
  hr->add_option("--K", ho.K)->capture_default_str();
  hr->add_option("--A-factor", ho.A_factor)->capture_default_str();
  add_out(hr);
  hr->callback([&] {
    const int n = ho.n;
    require(n >= 2 && n <= 3, "--n must be 2 or 3");
    require(ho.epsilon > 0.0 && ho.epsilon < 1.0, "--epsilon must lie in (0,1)");
    require(std::ceil(1.0 / ho.epsilon - 1e-12) >= 2, "--epsilon too large for a ladder");
    require(ho.p >= 2.0 && ho.p <= critical_exponent(n).value(), "--p must lie in [2, p_n]");
    require(ho.K >= 1.0 && ho.A_factor > 0.0, "--K must be at least 1 and --A-factor positive");
    auto Rv = parse_scales(ho.R, n, "--R");
    require(Rv.size() == 1, "--R takes a single scale");
    command = "highlow run";
    config = {{"n", n}, {"R", Rv[0]}, {"epsilon", ho.epsilon}, {"p", ho.p}, {"profile", ho.profile}, {"seed", ho.seed},
              {"oversample", ho.oversample > 0 ? ho.oversample : (n == 2 ? 2 : 1)}, {"K", ho.K}, {"A_factor", ho.A_factor}};
  });

  // certify
  auto* ce = app.add_subcommand("certify", "closure arithmetic");
  ce->require_subcommand(1);
  struct { std::string eps = "0.5,0.25,0.1"; int n = 2; double c_small = 2.0, c_large = 2.0, n_factor = 0.0; } so;
  auto* sn = ce->add_subcommand("snmm", "halting criterion and minimal K");
  sn->add_option("--epsilon", so.eps)->capture_default_str();
  sn->add_option("--n", so.n)->capture_default_str();
  sn->add_option("--c-small", so.c_small)->capture_default_str();
  sn->add_option("--c-large", so.c_large)->capture_default_str();
  sn->add_option("--n-factor", so.n_factor, "multiplier of the growth constant (0 means n)")->capture_default_str();
  add_out(sn);
  sn->callback([&] {
    auto e = parse_list(so.eps, "--epsilon");
    for (double v : e) require(v > 0.0 && v < 1.0, "--epsilon entries must lie in (0,1)");
    require(so.n >= 1 && so.c_small > 0.0 && so.c_large > 0.0 && so.n_factor >= 0.0, "constants must be positive");
    command = "certify snmm";
    config = {{"epsilon", e}, {"n", so.n}, {"c_small", so.c_small}, {"c_large", so.c_large}, {"n_factor", so.n_factor}};
  });
  struct { std::string eta = "1,0.5,0.1"; int n = 3; double c_first = 54.0; } bo;
  auto* s1 = ce->add_subcommand("s1bd", "admissible (eps, eps1) for a contradiction target eta");
  s1->add_option("--eta", bo.eta)->capture_default_str();
  s1->add_option("--n", bo.n)->capture_default_str();
  s1->add_option("--c-first", bo.c_first)->capture_default_str();
  add_out(s1);
  s1->callback([&] {
    require(bo.c_first > 0.0 && bo.n >= 1, "--c-first and --n must be positive");
    command = "certify s1bd";
    config = {{"eta", parse_list(bo.eta, "--eta")}, {"n", bo.n}, {"c_first", bo.c_first}};
  });
  struct { double epsilon = 0.25, N0 = 2.0, eps1 = 0.01, K = 0.0, T_base = 1.0, delta = 0.0, log2R_max = 256.0; } fo;
  auto* fp = ce->add_subcommand("fixed-point", "iterate the multi-scale recursion");
  fp->add_option("--epsilon", fo.epsilon)->capture_default_str();
  fp->add_option("--N0", fo.N0)->capture_default_str();
  fp->add_option("--eps1", fo.eps1)->capture_default_str();
  fp->add_option("--K", fo.K, "fixed K (0 means K = R^eps1)")->capture_default_str();
  fp->add_option("--T-base", fo.T_base)->capture_default_str();
  fp->add_option("--delta", fo.delta, "probe exponent (0 means threshold + 1)")->capture_default_str();
  fp->add_option("--log2R-max", fo.log2R_max)->capture_default_str();
  add_out(fp);
  fp->callback([&] {
    require(fo.epsilon > 0.0 && fo.epsilon < 1.0, "--epsilon must lie in (0,1)");
    require(fo.T_base >= 0.0 && fo.log2R_max >= 1.0 && fo.K >= 0.0, "invalid recursion parameters");
    command = "certify fixed-point";
    config = {{"epsilon", fo.epsilon}, {"N0", fo.N0}, {"eps1", fo.eps1}, {"K", fo.K},
              {"T_base", fo.T_base}, {"delta", fo.delta}, {"log2R_max", fo.log2R_max}};
  });
  struct { std::string eps = "0.25"; double A = 2.0, B = 2.0; } io;
  auto* ig = ce->add_subcommand("ingredients", "unroll the two-branch recursion");
  ig->add_option("--epsilon", io.eps)->capture_default_str();
  ig->add_option("--A", io.A)->capture_default_str();
  ig->add_option("--B", io.B)->capture_default_str();
  add_out(ig);
  ig->callback([&] {
    auto e = parse_list(io.eps, "--epsilon");
    for (double v : e) require(v > 0.0 && v < 1.0, "--epsilon entries must lie in (0,1)");
    require(io.A > 0.0 && io.B > 0.0, "--A and --B must be positive");
    command = "certify ingredients";
    config = {{"epsilon", e}, {"A", io.A}, {"B", io.B}};
  });

  // replay
  std::string replay_path;
  auto* rp = app.add_subcommand("replay", "recompute a sample of a report");
  rp->add_option("report", replay_path)->required();
  rp->callback([&] { command = "replay"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (command == "replay") return replay(replay_path);
    json rep = run_command(command, config);
    rep["threads"] = threads;
    const bool as_csv = command == "exponents" && ex.format == "csv";
    const std::string ext = as_csv ? ".csv" : ".json";
    std::string path = out.empty() ? default_out(command, ext) : out;
    if (as_csv) {
      std::ostringstream os;
      os << "# " << kTool << " " << kVersion << " config_hash=" << rep["config_hash"].get<std::string>() << "\n";
      os << "n,p,p_tilde,next_even_index\n";
      for (const auto& e : rep["entries"])
        if (e["values"].contains("n"))
          os << e["values"]["n"] << "," << e["values"]["p"].get<std::string>() << "," << e["values"]["p_tilde"] << ","
             << e["values"]["next_even_index"] << "\n";
      os << "# pprops pass=" << (rep["summary"]["pass"].get<bool>() ? "true" : "false") << "\n";
      write_text(path, os.str());
    } else {
      write_text(path, rep.dump(2) + "\n");
    }
    if (command == "ratio-scan") {
      std::string cpath = csv;
      if (cpath.empty() && !path.empty()) cpath = std::filesystem::path(path).replace_extension(".csv").string();
      if (!cpath.empty()) write_csv(rep, cpath);
      if (!svg.empty()) write_svg(rep, svg);
    }
    if (!path.empty()) std::cerr << "wrote " << path << "\n";
    return rep["summary"]["pass"].get<bool>() ? 0 : 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
