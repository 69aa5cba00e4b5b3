#include "ofnlab/ofnlab.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "ofnlab/aggregate.hpp"
#include "ofnlab/config.hpp"
#include "ofnlab/errors.hpp"
#include "ofnlab/harness.hpp"
#include "ofnlab/selftest.hpp"

struct ofn_config {
  ofn::RunConfig value;
};

namespace {

thread_local std::string last_error;

ofn_status fail(ofn_status s, const std::string& message) {
  last_error = message;
  return s;
}

template <class F>
ofn_status guarded(F&& f) {
  try {
    last_error.clear();
    return f();
  } catch (const ofn::ConfigError& e) {
    return fail(OFN_ERR_CONFIG, e.what());
  } catch (const ofn::ContractViolation& e) {
    return fail(OFN_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(OFN_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(OFN_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(OFN_ERR_RUNTIME, "unknown error");
  }
}

std::vector<std::string> to_strings(const char* const* dirs, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (dirs[i] == nullptr) throw ofn::ContractViolation("run directory list contains NULL");
    out.emplace_back(dirs[i]);
  }
  return out;
}

}  // namespace

extern "C" {

const char* ofn_version(void) { return "0.1.0"; }

const char* ofn_last_error(void) { return last_error.c_str(); }

const char* ofn_status_string(ofn_status status) {
  switch (status) {
    case OFN_OK: return "ok";
    case OFN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case OFN_ERR_CONFIG: return "configuration error";
    case OFN_ERR_IO: return "i/o error";
    case OFN_ERR_RUNTIME: return "runtime error";
    case OFN_ERR_SELFTEST: return "selftest failed";
  }
  return "unknown status";
}

ofn_status ofn_config_new(ofn_config** out) {
  if (out == nullptr) return fail(OFN_ERR_INVALID_ARGUMENT, "out is NULL");
  return guarded([&] {
    *out = new ofn_config{};
    return OFN_OK;
  });
}

ofn_status ofn_config_load(const char* path, ofn_config** out) {
  if (path == nullptr || out == nullptr) return fail(OFN_ERR_INVALID_ARGUMENT, "path or out is NULL");
  return guarded([&] {
    {
      std::ifstream probe(path);
      if (!probe) return fail(OFN_ERR_IO, std::string("cannot read config file '") + path + "'");
    }
    auto cfg = std::make_unique<ofn_config>();
    cfg->value = ofn::load_config(path);
    *out = cfg.release();
    return OFN_OK;
  });
}

ofn_status ofn_config_set(ofn_config* config, const char* key, const char* value) {
  if (config == nullptr || key == nullptr || value == nullptr) {
    return fail(OFN_ERR_INVALID_ARGUMENT, "config, key or value is NULL");
  }
  return guarded([&] {
    ofn::set_config_value(config->value, key, value);
    return OFN_OK;
  });
}

ofn_status ofn_config_get(const ofn_config* config, const char* key, char* buffer, size_t capacity,
                          size_t* needed) {
  if (config == nullptr || key == nullptr) return fail(OFN_ERR_INVALID_ARGUMENT, "config or key is NULL");
  return guarded([&] {
    const std::string v = ofn::get_config_value(config->value, key);
    if (needed != nullptr) *needed = v.size() + 1;
    if (buffer == nullptr || capacity < v.size() + 1) {
      return fail(OFN_ERR_INVALID_ARGUMENT, "buffer too small");
    }
    std::memcpy(buffer, v.c_str(), v.size() + 1);
    return OFN_OK;
  });
}

ofn_status ofn_config_save(const ofn_config* config, const char* path) {
  if (config == nullptr || path == nullptr) return fail(OFN_ERR_INVALID_ARGUMENT, "config or path is NULL");
  return guarded([&] {
    try {
      ofn::save_config(config->value, path);
    } catch (const std::runtime_error& e) {
      return fail(OFN_ERR_IO, e.what());
    }
    return OFN_OK;
  });
}

ofn_status ofn_config_validate(const ofn_config* config) {
  if (config == nullptr) return fail(OFN_ERR_INVALID_ARGUMENT, "config is NULL");
  return guarded([&] {
    config->value.validate();
    return OFN_OK;
  });
}

void ofn_config_free(ofn_config* config) { delete config; }

ofn_status ofn_run(const ofn_config* config, ofn_run_summary* summary) {
  if (config == nullptr) return fail(OFN_ERR_INVALID_ARGUMENT, "config is NULL");
  return guarded([&] {
    const ofn::RunSummary s = ofn::run_experiment(config->value);
    if (summary != nullptr) {
      *summary = {};
      summary->env_steps = s.env_steps;
      summary->grad_steps = s.grad_steps;
      summary->divergence_errors = s.divergence_errors;
      summary->n_records = s.records.size();
      summary->has_final_return = s.final_eval_return.has_value();
      summary->final_return = s.final_eval_return.value_or(0.0);
      summary->has_priming_boundary = s.priming_env_step.has_value();
      summary->priming_env_step = s.priming_env_step.value_or(0);
      summary->priming_grad_step = s.priming_grad_step.value_or(0);
    }
    return OFN_OK;
  });
}

ofn_status ofn_aggregate(const char* const* run_dirs, size_t n_dirs, size_t n_bootstrap,
                         uint64_t bootstrap_seed, const char* report_path, size_t* n_excluded) {
  if ((run_dirs == nullptr && n_dirs > 0) || report_path == nullptr) {
    return fail(OFN_ERR_INVALID_ARGUMENT, "run_dirs or report_path is NULL");
  }
  return guarded([&] {
    const auto report = ofn::aggregate(to_strings(run_dirs, n_dirs), n_bootstrap, bootstrap_seed);
    if (n_excluded != nullptr) *n_excluded = report.excluded.size();
    std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
    if (!out) return fail(OFN_ERR_IO, std::string("cannot write '") + report_path + "'");
    out << ofn::to_json(report).dump(2) << '\n';
    return OFN_OK;
  });
}

ofn_status ofn_export_plot_data(const char* const* run_dirs, size_t n_dirs, const char* csv_path,
                                size_t* n_rows) {
  if ((run_dirs == nullptr && n_dirs > 0) || csv_path == nullptr) {
    return fail(OFN_ERR_INVALID_ARGUMENT, "run_dirs or csv_path is NULL");
  }
  return guarded([&] {
    const auto rows = ofn::export_plot_data(to_strings(run_dirs, n_dirs), csv_path);
    if (n_rows != nullptr) *n_rows = rows;
    return OFN_OK;
  });
}

ofn_status ofn_selftest(int* n_failed) {
  return guarded([&] {
    const int failures = ofn::run_selftest(std::cout);
    if (n_failed != nullptr) *n_failed = failures;
    if (failures > 0) return fail(OFN_ERR_SELFTEST, std::to_string(failures) + " selftest check(s) failed");
    return OFN_OK;
  });
}

}  // extern "C"
