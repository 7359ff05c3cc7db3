#include "rlseg/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rlseg/errors.hpp"
#include "rlseg/rng.hpp"

using nlohmann::json;

namespace rlseg {

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed,
                const std::string& origin) {
  if (!j.is_object()) {
    throw ConfigError(origin + ": section '" + section + "' must be an object");
  }
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError(origin + ": unknown key '" + key + "' in section '" +
                        section + "'");
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_data(const json& j, GenConfig& cfg, const std::string& origin) {
  check_keys(j, "data",
             {"count", "height", "width", "render_scale", "sigma_min", "sigma_max",
              "salt_pepper_min", "salt_pepper_max", "blur_max", "rotation_max_deg",
              "translate_max", "scale_min", "scale_max", "allow_flips", "fg_min",
              "fg_max", "bg_min", "bg_max", "preset"},
             origin);
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "desk") {
      cfg = GenConfig::desk();
    } else if (preset == "paper-scale") {
      cfg = GenConfig::paper_scale();
    } else {
      throw ConfigError(origin + ": unknown data preset '" + preset + "'");
    }
  }
  get_if(j, "count", cfg.count);
  get_if(j, "height", cfg.height);
  get_if(j, "width", cfg.width);
  get_if(j, "render_scale", cfg.render_scale);
  get_if(j, "sigma_min", cfg.sigma_min);
  get_if(j, "sigma_max", cfg.sigma_max);
  get_if(j, "salt_pepper_min", cfg.salt_pepper_min);
  get_if(j, "salt_pepper_max", cfg.salt_pepper_max);
  get_if(j, "blur_max", cfg.blur_max);
  get_if(j, "rotation_max_deg", cfg.rotation_max_deg);
  get_if(j, "translate_max", cfg.translate_max);
  get_if(j, "scale_min", cfg.scale_min);
  get_if(j, "scale_max", cfg.scale_max);
  get_if(j, "allow_flips", cfg.allow_flips);
  get_if(j, "fg_min", cfg.fg_min);
  get_if(j, "fg_max", cfg.fg_max);
  get_if(j, "bg_min", cfg.bg_min);
  get_if(j, "bg_max", cfg.bg_max);
}

void parse_cls(const json& j, ChanVeseConfig& cfg, const std::string& origin) {
  check_keys(j, "cls",
             {"mu", "nu", "lambda1", "lambda2", "epsilon", "eta", "max_iters",
              "tol", "checker_period"},
             origin);
  get_if(j, "mu", cfg.mu);
  get_if(j, "nu", cfg.nu);
  get_if(j, "lambda1", cfg.lambda1);
  get_if(j, "lambda2", cfg.lambda2);
  get_if(j, "epsilon", cfg.epsilon);
  get_if(j, "eta", cfg.eta);
  get_if(j, "max_iters", cfg.max_iters);
  get_if(j, "tol", cfg.tol);
  get_if(j, "checker_period", cfg.checker_period);
}

void parse_rls(const json& j, RlsConfig& cfg, const std::string& origin) {
  check_keys(j, "rls",
             {"steps", "epsilon", "checker_period", "init_scale", "diagonal"},
             origin);
  get_if(j, "steps", cfg.steps);
  get_if(j, "epsilon", cfg.epsilon);
  get_if(j, "checker_period", cfg.checker_period);
  get_if(j, "init_scale", cfg.init_scale);
  get_if(j, "diagonal", cfg.diagonal);
}

void parse_train(const json& j, TrainConfig& cfg, BpttMode& mode,
                 const std::string& origin) {
  check_keys(j, "train",
             {"eta0", "eta_floor", "halve_every", "epochs", "rho_m", "rms_decay",
              "rms_eps", "grad_clip", "batch_size", "mode"},
             origin);
  get_if(j, "eta0", cfg.eta0);
  get_if(j, "eta_floor", cfg.eta_floor);
  get_if(j, "halve_every", cfg.halve_every);
  get_if(j, "epochs", cfg.epochs);
  get_if(j, "rho_m", cfg.rho_m);
  get_if(j, "rms_decay", cfg.rms_decay);
  get_if(j, "rms_eps", cfg.rms_eps);
  get_if(j, "grad_clip", cfg.grad_clip);
  get_if(j, "batch_size", cfg.batch_size);
  if (j.contains("mode")) mode = bptt_mode_from_name(j.at("mode").get<std::string>());
}

void parse_bench(const json& j, BenchConfig& cfg, const std::string& origin) {
  check_keys(j, "bench", {"methods", "runs_per_image"}, origin);
  if (j.contains("methods")) {
    cfg.methods = j.at("methods").get<std::vector<std::string>>();
  }
  get_if(j, "runs_per_image", cfg.runs_per_image);
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  check_keys(j, "<root>", {"seed", "data", "cls", "rls", "train", "bench"}, origin);

  RunConfig cfg;
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  try {
    if (j.contains("data")) parse_data(j.at("data"), cfg.data, origin);
    if (j.contains("cls")) parse_cls(j.at("cls"), cfg.cls, origin);
    if (j.contains("rls")) parse_rls(j.at("rls"), cfg.rls, origin);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train, cfg.train_mode, origin);
    if (j.contains("bench")) parse_bench(j.at("bench"), cfg.bench, origin);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }

  if (const char* env = std::getenv("RLS_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  cfg.data.seed = derive_seed(cfg.seed, "data");
  cfg.rls.seed = derive_seed(cfg.seed, "rls-init");
  cfg.train.seed = derive_seed(cfg.seed, "train");
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str(), path);
}

std::string run_config_canonical_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["data"] = {{"count", cfg.data.count},
               {"height", cfg.data.height},
               {"width", cfg.data.width},
               {"render_scale", cfg.data.render_scale},
               {"sigma_min", cfg.data.sigma_min},
               {"sigma_max", cfg.data.sigma_max},
               {"salt_pepper_min", cfg.data.salt_pepper_min},
               {"salt_pepper_max", cfg.data.salt_pepper_max},
               {"blur_max", cfg.data.blur_max},
               {"rotation_max_deg", cfg.data.rotation_max_deg},
               {"translate_max", cfg.data.translate_max},
               {"scale_min", cfg.data.scale_min},
               {"scale_max", cfg.data.scale_max},
               {"allow_flips", cfg.data.allow_flips},
               {"fg_min", cfg.data.fg_min},
               {"fg_max", cfg.data.fg_max},
               {"bg_min", cfg.data.bg_min},
               {"bg_max", cfg.data.bg_max}};
  j["cls"] = {{"mu", cfg.cls.mu},
              {"nu", cfg.cls.nu},
              {"lambda1", cfg.cls.lambda1},
              {"lambda2", cfg.cls.lambda2},
              {"epsilon", cfg.cls.epsilon},
              {"eta", cfg.cls.eta},
              {"max_iters", cfg.cls.max_iters},
              {"tol", cfg.cls.tol},
              {"checker_period", cfg.cls.checker_period}};
  j["rls"] = {{"steps", cfg.rls.steps},
              {"epsilon", cfg.rls.epsilon},
              {"checker_period", cfg.rls.checker_period},
              {"init_scale", cfg.rls.init_scale},
              {"diagonal", cfg.rls.diagonal}};
  j["train"] = {{"eta0", cfg.train.eta0},
                {"eta_floor", cfg.train.eta_floor},
                {"halve_every", cfg.train.halve_every},
                {"epochs", cfg.train.epochs},
                {"rho_m", cfg.train.rho_m},
                {"rms_decay", cfg.train.rms_decay},
                {"rms_eps", cfg.train.rms_eps},
                {"grad_clip", cfg.train.grad_clip},
                {"batch_size", cfg.train.batch_size},
                {"mode", bptt_mode_name(cfg.train_mode)}};
  j["bench"] = {{"methods", cfg.bench.methods},
                {"runs_per_image", cfg.bench.runs_per_image}};
  return j.dump();
}

std::string run_config_digest(const RunConfig& cfg) {
  const std::string canon = run_config_canonical_json(cfg);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon.data(), canon.size())));
  return buf;
}

}  // namespace rlseg
