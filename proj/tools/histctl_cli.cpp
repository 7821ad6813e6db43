// Command-line driver over the C API.
#include <algorithm>
#include <cstdio>
#include <stdexcept>
#include <cstring>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "histctl/histctl.h"

namespace {

struct Owned {
  char* p = nullptr;
  ~Owned() { hc_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

int report_failure(hc_status s) {
  std::cerr << "error (" << hc_status_name(s) << "): " << hc_last_error() << "\n";
  return static_cast<int>(s) + 1;
}

// Pulls "--name=v" / "--name v" settings out of argv; CLI11 sees the rest.
std::vector<std::pair<std::string, std::string>> take_overrides(std::vector<std::string>& args) {
  static const std::vector<std::string> own = {"config", "force", "help"};
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) {
      kept.push_back(a);
      continue;
    }
    const auto eq = a.find('=');
    const std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    if (std::find(own.begin(), own.end(), name) != own.end()) {
      kept.push_back(a);
      continue;
    }
    if (eq != std::string::npos) {
      out.emplace_back(name, a.substr(eq + 1));
    } else if (i + 1 < args.size()) {
      out.emplace_back(name, args[++i]);
    } else {
      throw std::invalid_argument("--" + name + " needs a value");
    }
  }
  args = std::move(kept);
  return out;
}

void print_run_summary(const std::string& summary_json) {
  const auto doc = nlohmann::json::parse(summary_json);
  std::size_t converged = 0;
  for (const auto& s : doc["strata"]) converged += s["converged"].get<bool>();
  std::cout << "config hash " << doc["config_hash"].get<std::string>() << "\n"
            << "strata balanced: " << doc["strata"].size() << " (" << converged
            << " converged), excluded: " << doc["failures"].size() << "\n";
  for (const auto& e : doc["estimates"]) {
    if (e["analysis_tag"] != "main" && e["analysis_tag"] != "cll" && e["analysis_tag"] != "placebo")
      continue;
    const int m = e["month"].get<int>();
    if (e["analysis_tag"] == "main" && m % 6 != 0) continue;
    char buf[160];
    std::snprintf(buf, sizeof buf, "  %-8s %-5s m=%-3d beta % .4f  se %.4f  p %.4f%s\n",
                  e["analysis_tag"].get<std::string>().c_str(),
                  e["outcome"].get<std::string>().c_str(), m, e["beta"].get<double>(),
                  e["se"].get<double>(), e["p"].get<double>(),
                  e["significant"].get<bool>() ? "  *" : "");
    std::cout << buf;
  }
  if (!doc["warnings"].empty())
    std::cout << doc["warnings"].size() << " warnings (see summary.json)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Historical-control effectiveness pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  bool force = false;
  app.add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_flag("--force", force, "replace outputs written under a different config hash");
  app.footer(
      "Any setting can be overridden with its dotted name, e.g. --balance.tolerance=1e-9 "
      "or --workers 4. HISTCTL_OUT_DIR replaces paths.out_dir.");

  auto* gen = app.add_subcommand("generate", "write a synthetic registry with ground truth");
  auto* run = app.add_subcommand("run", "full workflow: balance, estimates, placebo, hazard model");
  auto* bal = app.add_subcommand("balance", "cohorts, covariates and per-stratum weights only");
  auto* est = app.add_subcommand("estimate", "balance (cached) and effect estimates without placebo");
  auto* plc = app.add_subcommand("placebo", "balance (cached) and the placebo test");
  auto* tl = app.add_subcommand("timeline", "print one patient's events");
  auto* rep = app.add_subcommand("report", "render the last run's summary");
  auto* cfg = app.add_subcommand("config", "print the resolved config");
  std::string patient;
  tl->add_option("patient_id", patient, "patient identifier")->required();

  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::pair<std::string, std::string>> overrides;
  try {
    overrides = take_overrides(args);
    std::reverse(args.begin(), args.end());  // CLI11 takes the vector reversed
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  CLI::App* sub = app.get_subcommands().front();

  hc_session* session = nullptr;
  if (hc_status s = hc_session_create(config_path.empty() ? nullptr : config_path.c_str(), &session);
      s != HC_OK)
    return report_failure(s);
  struct Closer {
    hc_session* s;
    ~Closer() { hc_session_destroy(s); }
  } closer{session};

  for (const auto& [k, v] : overrides)
    if (hc_status s = hc_session_set(session, k.c_str(), v.c_str()); s != HC_OK)
      return report_failure(s);
  if (force)
    if (hc_status s = hc_session_set(session, "force", "true"); s != HC_OK) return report_failure(s);

  Owned out;
  hc_status status = HC_OK;
  if (sub == gen) {
    status = hc_generate(session, &out.p);
    if (status == HC_OK) {
      const auto m = nlohmann::json::parse(out.str());
      std::cout << "generated " << m["patients"] << " patients (" << m["treated"] << " treated, "
                << m["comparison"] << " comparison) into " << m["config"]["paths"]["out_dir"]
                << "\nconfig hash " << m["config_hash"].get<std::string>() << "\n";
    }
  } else if (sub == run || sub == bal || sub == est || sub == plc) {
    const hc_scope scope = sub == run   ? HC_SCOPE_FULL
                           : sub == bal ? HC_SCOPE_BALANCE
                           : sub == est ? HC_SCOPE_ESTIMATE
                                        : HC_SCOPE_PLACEBO;
    status = hc_run(session, scope, &out.p);
    if (status == HC_OK) print_run_summary(out.str());
  } else if (sub == tl) {
    status = hc_timeline(session, patient.c_str(), &out.p);
    if (status == HC_OK) std::cout << out.str();
  } else if (sub == rep) {
    status = hc_report(session, &out.p);
    if (status == HC_OK) std::cout << out.str();
  } else if (sub == cfg) {
    status = hc_session_config_json(session, &out.p);
    if (status == HC_OK) std::cout << out.str() << "\n";
  }
  return status == HC_OK ? 0 : report_failure(status);
}
