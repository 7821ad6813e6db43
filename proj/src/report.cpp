#include <cmath>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "histctl/covariates.hpp"
#include "histctl/pipeline.hpp"
#include "histctl/table.hpp"

namespace histctl {

using nlohmann::json;

double welch_p_value(double m1, double s1, double n1, double m2, double s2, double n2) {
  if (n1 < 2 || n2 < 2) return std::numeric_limits<double>::quiet_NaN();
  const double v1 = s1 * s1 / n1, v2 = s2 * s2 / n2;
  const double se = std::sqrt(v1 + v2);
  if (se == 0.0) return m1 == m2 ? 1.0 : 0.0;
  const double t = (m1 - m2) / se;
  const double df = (v1 + v2) * (v1 + v2) / (v1 * v1 / (n1 - 1) + v2 * v2 / (n2 - 1));
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

std::vector<DescriptiveRow> descriptive_table(
    const Registry& registry, const CohortSelection& cohorts,
    const std::vector<std::optional<PreDiagnosisCovariates>>& pre) {
  (void)registry;
  using Getter = double (*)(const PreDiagnosisCovariates&);
  const std::vector<std::pair<std::string, Getter>> items = {
      {"Age at diagnosis", [](const PreDiagnosisCovariates& c) { return c.age_at_diagnosis; }},
      {"Number of visits 1 month bf. diagnosis",
       [](const PreDiagnosisCovariates& c) { return double(c.visits.within_1m); }},
      {"Number of visits 1-6 months bf. diagnosis",
       [](const PreDiagnosisCovariates& c) { return double(c.visits.m1_to_6); }},
      {"Number of visits 6-12 months bf. diagnosis",
       [](const PreDiagnosisCovariates& c) { return double(c.visits.m6_to_12); }},
      {"Number of visits 1-60 months bf. diagnosis",
       [](const PreDiagnosisCovariates& c) { return double(c.visits.m1_to_60); }},
      {"Elixhauser index 0, at diagnosis",
       [](const PreDiagnosisCovariates& c) { return double(c.elix_at_dx == ElixCategory::none); }},
      {"Elixhauser index 1-4, at diagnosis",
       [](const PreDiagnosisCovariates& c) {
         return double(c.elix_at_dx == ElixCategory::one_to_four);
       }},
      {"Elixhauser index 5, at diagnosis",
       [](const PreDiagnosisCovariates& c) {
         return double(c.elix_at_dx == ElixCategory::five_plus);
       }},
      {"Elixhauser index 0, 12 months bf. diagnosis",
       [](const PreDiagnosisCovariates& c) { return double(c.elix_12m == ElixCategory::none); }},
      {"Elixhauser index 1-4, 12 months bf. diagnosis",
       [](const PreDiagnosisCovariates& c) {
         return double(c.elix_12m == ElixCategory::one_to_four);
       }},
      {"Elixhauser index 5, 12 months bf. diagnosis",
       [](const PreDiagnosisCovariates& c) {
         return double(c.elix_12m == ElixCategory::five_plus);
       }},
      {"Less than secondary school education",
       [](const PreDiagnosisCovariates& c) { return double(c.edu_below); }},
      {"Secondary school education",
       [](const PreDiagnosisCovariates& c) { return double(c.edu_secondary); }},
      {"Living with a partner", [](const PreDiagnosisCovariates& c) { return double(c.partnered); }},
      {"Born in the Nordic countries",
       [](const PreDiagnosisCovariates& c) { return double(c.nordic_born); }},
  };

  auto moments = [&](const std::vector<CohortAssignment>& arm, Getter g) {
    double n = 0, sum = 0, sq = 0;
    for (const auto& a : arm) {
      if (!pre[a.index]) continue;
      const double v = g(*pre[a.index]);
      n += 1;
      sum += v;
      sq += v * v;
    }
    const double mean = n > 0 ? sum / n : 0.0;
    const double var = n > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1)) : 0.0;
    return std::tuple{mean, std::sqrt(var), n};
  };

  std::vector<DescriptiveRow> rows;
  for (const auto& [label, g] : items) {
    const auto [mc, sc, nc] = moments(cohorts.comparison, g);
    const auto [mt, st, nt] = moments(cohorts.treated, g);
    rows.push_back({label, mc, sc, mt, st, mc - mt, welch_p_value(mc, sc, nc, mt, st, nt)});
  }
  return rows;
}

namespace {

const char* stars(double p) {
  if (!(p < 0.1)) return "";
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  return "*";
}

json estimate_json(const EffectEstimate& e) {
  return {{"outcome", e.outcome}, {"month", e.month},       {"beta", e.beta},
          {"se", e.se},           {"ci_lo", e.ci_lo},       {"ci_hi", e.ci_hi},
          {"p", e.p_raw},         {"threshold", e.p_threshold}, {"significant", e.significant},
          {"analysis_tag", e.analysis_tag}, {"n", e.n},     {"degenerate", e.degenerate},
          {"warnings", e.warnings}};
}

std::string pad(const std::string& s, std::size_t width, bool left = true) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string render_descriptives(const std::vector<DescriptiveRow>& rows) {
  std::ostringstream out;
  out << pad("Description", 48) << pad("SoC", 18, false) << pad("NAM", 18, false)
      << pad("Difference", 16, false) << "\n";
  for (const auto& r : rows) {
    out << pad(r.label, 48)
        << pad(format_fixed(r.comparison_mean, 2) + " (" + format_fixed(r.comparison_sd, 2) + ")",
               18, false)
        << pad(format_fixed(r.treated_mean, 2) + " (" + format_fixed(r.treated_sd, 2) + ")", 18,
               false)
        << pad(format_fixed(r.difference, 2) + stars(r.p_value), 16, false) << "\n";
  }
  out << "Standard deviations within parentheses. *p<0.1; **p<0.05; ***p<0.01 (Welch t-test).\n";
  return out.str();
}

json report_to_json(const RunReport& r) {
  json doc;
  doc["config_hash"] = r.config_hash;
  doc["config"] = r.config;
  doc["attrition"] = json::array();
  for (const auto& a : r.attrition)
    doc["attrition"].push_back(
        {{"chain", a.chain}, {"step", a.step}, {"input", a.input}, {"output", a.output}});
  doc["descriptives"] = json::array();
  for (const auto& d : r.descriptives)
    doc["descriptives"].push_back({{"description", d.label},
                                   {"soc_mean", d.comparison_mean},
                                   {"soc_sd", d.comparison_sd},
                                   {"nam_mean", d.treated_mean},
                                   {"nam_sd", d.treated_sd},
                                   {"difference", d.difference},
                                   {"p", d.p_value}});
  doc["descriptives_table"] = render_descriptives(r.descriptives);
  doc["factor_table"] = r.factor_table;
  doc["strata"] = json::array();
  for (const auto& s : r.strata)
    doc["strata"].push_back({{"w", s.w},
                             {"n_treated", s.n_treated},
                             {"n_comparison", s.n_comparison},
                             {"converged", s.converged},
                             {"max_violation", s.max_violation},
                             {"iterations", s.iterations},
                             {"share_above_001", s.share_above_001},
                             {"max_abs_smd_after", s.max_abs_smd_after},
                             {"dropped", s.dropped}});
  doc["balance"] = json::array();
  for (const auto& b : r.balance) {
    json cov = json::array();
    for (const auto& c : b.covariates)
      cov.push_back({{"name", c.name},
                     {"treated_mean", c.treated_mean},
                     {"comparison_mean", c.comparison_mean},
                     {"weighted_mean", c.weighted_mean},
                     {"smd_before", c.smd_before},
                     {"smd_after", c.smd_after}});
    doc["balance"].push_back({{"w", b.stratum_w},
                              {"covariates", cov},
                              {"histogram_edges", b.histogram_edges},
                              {"histogram_counts", b.histogram_counts}});
  }
  doc["failures"] = json::array();
  for (const auto& f : r.failures) doc["failures"].push_back({{"w", f.w}, {"message", f.message}});
  doc["estimates"] = json::array();
  for (const auto& e : r.estimates) doc["estimates"].push_back(estimate_json(e));
  doc["mortality_effect"] = r.mortality_effect;
  if (r.placebo) {
    json p = {{"hidden_bias", r.placebo->hidden_bias}, {"estimates", json::array()}};
    for (const auto& e : r.placebo->estimates) p["estimates"].push_back(estimate_json(e));
    doc["placebo"] = p;
  }
  if (r.cll) {
    const auto& c = *r.cll;
    doc["cll"] = {{"horizon", c.horizon},   {"tau", c.tau},
                  {"se_tau", c.se_tau},     {"loglik", c.loglik},
                  {"gradient_norm", c.gradient_norm}, {"converged", c.converged},
                  {"iterations", c.iterations}, {"gamma", c.gamma},
                  {"strata", c.strata},     {"alpha", c.alpha},
                  {"exploratory", true}};
  }
  doc["warnings"] = r.warnings;
  doc["stages_cached"] = r.stages_cached;
  return doc;
}

std::string render_report(const json& s) {
  std::ostringstream out;
  out << "Run report  (config hash " << s.value("config_hash", "") << ")\n\n";

  out << "Attrition\n";
  for (const auto& a : s.at("attrition"))
    out << "  " << pad(a.at("chain").get<std::string>(), 11)
        << pad(a.at("step").get<std::string>(), 44) << pad(std::to_string(a.at("input").get<long>()), 8, false)
        << " -> " << pad(std::to_string(a.at("output").get<long>()), 8, false) << "\n";

  out << "\nMeans (standard deviations) of pre-diagnosis covariates\n"
      << s.value("descriptives_table", "") << "\n";
  out << "Socioeconomic factor model\n" << s.value("factor_table", "") << "\n";

  out << "Balance per stratum\n  " << pad("w", 4) << pad("treated", 9, false)
      << pad("comparison", 12, false) << pad("conv", 6, false) << pad("violation", 12, false)
      << pad("w>0.01", 9, false) << pad("max|SMD|", 10, false) << "\n";
  for (const auto& st : s.at("strata"))
    out << "  " << pad(std::to_string(st.at("w").get<int>()), 4)
        << pad(std::to_string(st.at("n_treated").get<long>()), 9, false)
        << pad(std::to_string(st.at("n_comparison").get<long>()), 12, false)
        << pad(st.at("converged").get<bool>() ? "yes" : "no", 6, false)
        << pad(format_number(st.at("max_violation").get<double>()), 12, false)
        << pad(format_fixed(st.at("share_above_001").get<double>(), 3), 9, false)
        << pad(format_fixed(st.at("max_abs_smd_after").get<double>(), 4), 10, false) << "\n";
  for (const auto& f : s.at("failures"))
    out << "  stratum " << f.at("w").get<int>() << " excluded: " << f.at("message").get<std::string>()
        << "\n";

  auto section = [&](const std::string& title, const std::string& tag) {
    bool any = false;
    for (const auto& e : s.at("estimates")) {
      if (e.at("analysis_tag") != tag) continue;
      if (!any) {
        out << "\n" << title << "\n  " << pad("outcome", 8) << pad("m", 4, false)
            << pad("beta", 11, false) << pad("se", 10, false) << pad("95% CI", 22, false)
            << pad("p", 10, false) << "  sig\n";
        any = true;
      }
      out << "  " << pad(e.at("outcome").get<std::string>(), 8)
          << pad(std::to_string(e.at("month").get<int>()), 4, false)
          << pad(format_fixed(e.at("beta").get<double>(), 4), 11, false)
          << pad(format_fixed(e.at("se").get<double>(), 4), 10, false)
          << pad("[" + format_fixed(e.at("ci_lo").get<double>(), 4) + ", " +
                     format_fixed(e.at("ci_hi").get<double>(), 4) + "]",
                 22, false)
          << pad(format_fixed(e.at("p").get<double>(), 4), 10, false) << "  "
          << (e.at("significant").get<bool>() ? "*" : "") << "\n";
    }
  };
  section("Treatment effects (per-month WLS, robust SE)", "main");
  section("Treatment effects (months pooled, clustered SE)", "pooled");
  section("Morbidity bounds: lower", "bound_lo");
  section("Morbidity bounds: upper", "bound_hi");
  section("Subgroup: DTP below split", "subgroup_lo");
  section("Subgroup: DTP at or above split", "subgroup_hi");
  if (s.contains("placebo")) {
    section("Placebo test", "placebo");
    out << "  hidden bias flag: " << (s["placebo"].at("hidden_bias").get<bool>() ? "YES" : "no")
        << "\n";
  }
  if (s.contains("cll")) {
    const auto& c = s["cll"];
    out << "\nDiscrete-time hazard model (complementary log-log, exploratory)\n"
        << "  tau " << format_fixed(c.at("tau").get<double>(), 4) << "  se "
        << format_fixed(c.at("se_tau").get<double>(), 4) << "  loglik "
        << format_fixed(c.at("loglik").get<double>(), 3) << "  converged "
        << (c.at("converged").get<bool>() ? "yes" : "no") << "\n";
  }
  if (!s.at("warnings").empty()) {
    out << "\nWarnings\n";
    for (const auto& w : s.at("warnings")) out << "  - " << w.get<std::string>() << "\n";
  }
  return out.str();
}

}  // namespace histctl
