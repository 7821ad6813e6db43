#include "histctl/histctl.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "histctl/errors.hpp"
#include "histctl/pipeline.hpp"

using namespace histctl;
using nlohmann::json;

struct hc_session {
  json config;
  bool force = false;

  PipelineConfig resolved() const {
    PipelineConfig cfg = config_from_json(config);
    cfg.force = force;
    return cfg;
  }
};

namespace {

thread_local std::string g_last_error;

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

hc_status fail(hc_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class F>
hc_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return HC_OK;
  } catch (const ConfigError& e) {
    return fail(HC_ERR_CONFIG, e.what());
  } catch (const ParseError& e) {
    return fail(HC_ERR_PARSE, e.what());
  } catch (const ValidationError& e) {
    return fail(HC_ERR_VALIDATION, e.what());
  } catch (const CommonSupportError& e) {
    return fail(HC_ERR_COMMON_SUPPORT, e.what());
  } catch (const EstimationError& e) {
    return fail(HC_ERR_ESTIMATION, e.what());
  } catch (const StageError& e) {
    return fail(HC_ERR_STAGE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(HC_ERR_IO, e.what());
  } catch (const Error& e) {
    return fail(HC_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(HC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(HC_ERR_INTERNAL, e.what());
  }
}

}  // namespace

extern "C" {

const char* hc_version(void) { return "1.0.0"; }

const char* hc_status_name(hc_status status) {
  switch (status) {
    case HC_OK: return "ok";
    case HC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case HC_ERR_CONFIG: return "configuration error";
    case HC_ERR_PARSE: return "parse error";
    case HC_ERR_VALIDATION: return "validation error";
    case HC_ERR_COMMON_SUPPORT: return "no common support";
    case HC_ERR_ESTIMATION: return "estimation error";
    case HC_ERR_STAGE: return "stage failure";
    case HC_ERR_IO: return "I/O error";
    case HC_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* hc_last_error(void) { return g_last_error.c_str(); }

void hc_string_free(char* s) { std::free(s); }

hc_status hc_session_create(const char* config_path, hc_session** out) {
  if (!out) return fail(HC_ERR_INVALID_ARGUMENT, "out is NULL");
  *out = nullptr;
  return guarded([&] {
    auto s = std::make_unique<hc_session>();
    s->config = config_to_json(resolve_config(config_path ? config_path : "", {}));
    *out = s.release();
  });
}

void hc_session_destroy(hc_session* session) { delete session; }

hc_status hc_session_set(hc_session* session, const char* key, const char* value) {
  if (!session || !key || !value) return fail(HC_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] {
    const std::string k = key;
    if (k == "force") {
      const std::string v = value;
      if (v != "true" && v != "false") throw ConfigError("force expects true or false");
      session->force = v == "true";
      return;
    }
    json next = session->config;
    apply_override(next, k, value);
    config_from_json(next);  // validate before committing
    session->config = std::move(next);
  });
}

hc_status hc_session_config_json(const hc_session* session, char** out_json) {
  if (!session || !out_json) return fail(HC_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] { *out_json = dup(session->config.dump(2)); });
}

hc_status hc_session_config_hash(const hc_session* session, char** out_hash) {
  if (!session || !out_hash) return fail(HC_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] { *out_hash = dup(config_hash(session->resolved())); });
}

hc_status hc_generate(hc_session* session, char** out_manifest_json) {
  if (!session) return fail(HC_ERR_INVALID_ARGUMENT, "session is NULL");
  return guarded([&] {
    const GenerateSummary g = cmd_generate(session->resolved());
    if (out_manifest_json) *out_manifest_json = dup(g.manifest.dump(2));
  });
}

hc_status hc_run(hc_session* session, hc_scope scope, char** out_summary_json) {
  if (!session) return fail(HC_ERR_INVALID_ARGUMENT, "session is NULL");
  RunScope s;
  switch (scope) {
    case HC_SCOPE_BALANCE: s = RunScope::balance; break;
    case HC_SCOPE_ESTIMATE: s = RunScope::estimate; break;
    case HC_SCOPE_PLACEBO: s = RunScope::placebo; break;
    case HC_SCOPE_FULL: s = RunScope::full; break;
    default: return fail(HC_ERR_INVALID_ARGUMENT, "unknown scope");
  }
  return guarded([&] {
    const RunReport r = cmd_run(session->resolved(), s);
    if (out_summary_json) *out_summary_json = dup(report_to_json(r).dump(2));
  });
}

hc_status hc_timeline(hc_session* session, const char* patient_id, char** out_text) {
  if (!session || !patient_id || !out_text) return fail(HC_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] { *out_text = dup(cmd_timeline(session->resolved(), patient_id)); });
}

hc_status hc_report(hc_session* session, char** out_text) {
  if (!session || !out_text) return fail(HC_ERR_INVALID_ARGUMENT, "NULL argument");
  return guarded([&] { *out_text = dup(cmd_report(session->resolved())); });
}

hc_status hc_solve_dual(const double* features, size_t n, size_t k, const double* targets,
                        const double* base_weights, double w_total, double tol, int max_iter,
                        double* weights_out, double* max_violation, int* converged) {
  if (!features || !targets || !weights_out || n == 0)
    return fail(HC_ERR_INVALID_ARGUMENT, "features, targets and weights_out are required");
  return guarded([&] {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::MatrixXd X = Eigen::Map<const RowMajor>(features, static_cast<Eigen::Index>(n),
                                                          static_cast<Eigen::Index>(k));
    const Eigen::VectorXd t =
        Eigen::Map<const Eigen::VectorXd>(targets, static_cast<Eigen::Index>(k));
    const Eigen::VectorXd q =
        base_weights
            ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(base_weights,
                                                                static_cast<Eigen::Index>(n)))
            : Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    DualOptions opt;
    opt.tol = tol;
    opt.max_iter = max_iter;
    opt.w_total = w_total;
    const WeightSolution s = solve_dual(X, t, q, opt);
    for (size_t i = 0; i < n; ++i) weights_out[i] = s.weights(static_cast<Eigen::Index>(i));
    if (max_violation) *max_violation = s.max_constraint_violation;
    if (converged) *converged = s.converged ? 1 : 0;
  });
}

hc_status hc_bonferroni_threshold(double overall, int family_size, double* out_threshold) {
  if (!out_threshold || family_size < 1 || !(overall > 0.0))
    return fail(HC_ERR_INVALID_ARGUMENT, "family_size must be >= 1 and overall > 0");
  *out_threshold = bonferroni({}, family_size, overall).threshold;
  g_last_error.clear();
  return HC_OK;
}

}  // extern "C"
