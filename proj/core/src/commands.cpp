#include "rlseg/commands.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "rlseg/errors.hpp"
#include "rlseg/eval.hpp"
#include "rlseg/pgm.hpp"
#include "rlseg/rng.hpp"
#include "rlseg/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rlseg {

namespace {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ShapeError*>(&e)) return kExitShape;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  return kExitConfig;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    try {
      throw;
    } catch (const std::exception& inner) {
      return exit_code_for(inner);
    }
  }
}

RunConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg = default_run_config();
    if (const char* env = std::getenv("RLS_SEED")) {
      cfg.seed = std::strtoull(env, nullptr, 10);
    }
    cfg.data.seed = derive_seed(cfg.seed, "data");
    cfg.rls.seed = derive_seed(cfg.seed, "rls-init");
    cfg.train.seed = derive_seed(cfg.seed, "train");
    return cfg;
  }
  return load_run_config(path);
}

void write_run_meta(const fs::path& path, const char* command,
                    const RunConfig& cfg) {
  json meta;
  meta["command"] = command;
  meta["version"] = kVersion;
  meta["seed"] = cfg.seed;
  meta["config_digest"] = run_config_digest(cfg);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << meta.dump(2) << "\n";
}

void write_checkpoint_sidecar(const std::string& ckpt_path, const RunConfig& cfg,
                              int epochs_completed, const std::string& model,
                              BpttMode mode) {
  json side;
  side["model"] = model;
  side["epochs_completed"] = epochs_completed;
  side["seed"] = cfg.seed;
  side["config_digest"] = run_config_digest(cfg);
  side["version"] = kVersion;
  side["optimizer"] = {{"variant", "rmsprop momentum-on-preconditioned-step"},
                       {"eta0", cfg.train.eta0},
                       {"eta_floor", cfg.train.eta_floor},
                       {"halve_every", cfg.train.halve_every},
                       {"rho_m", cfg.train.rho_m},
                       {"rms_decay", cfg.train.rms_decay},
                       {"rms_eps", cfg.train.rms_eps},
                       {"grad_clip", cfg.train.grad_clip},
                       {"batch_size", cfg.train.batch_size}};
  if (model == "rls") side["mode"] = bptt_mode_name(mode);
  std::ofstream out(ckpt_path + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + ckpt_path + ".json");
  out << side.dump(2) << "\n";
}

int read_sidecar_epoch(const std::string& ckpt_path) {
  std::ifstream in(ckpt_path + ".json");
  if (!in) return 0;
  try {
    json side;
    in >> side;
    return side.value("epochs_completed", 0);
  } catch (const json::exception&) {
    return 0;
  }
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

int cmd_gen_data(const GenDataArgs& args) {
  return guarded([&]() {
    if (args.out.empty()) throw ConfigError("gen-data needs --out");
    const RunConfig cfg = config_or_default(args.config);
    const fs::path out(args.out);
    if (fs::exists(out) && fs::is_directory(out) && !fs::is_empty(out) &&
        !args.force) {
      throw IoError("output directory " + args.out +
                    " is not empty (use --force to overwrite)");
    }
    int threads = args.threads > 0
                      ? args.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    const Dataset ds = build_dataset(cfg.data, args.out, std::max(1, threads));
    write_run_meta(out / "run_meta.json", "gen-data", cfg);
    std::printf("wrote %zu train / %zu test samples (%dx%d) to %s\n",
                ds.split("train").size(), ds.split("test").size(), ds.width,
                ds.height, args.out.c_str());
    return kExitOk;
  });
}

int cmd_train(const TrainArgs& args) {
  return guarded([&]() {
    if (args.data.empty() || args.out.empty()) {
      throw ConfigError("train needs --data and --out");
    }
    if (args.model != "rls" && args.model != "fcn") {
      throw ConfigError("unknown model '" + args.model + "' (valid: rls, fcn)");
    }
    RunConfig cfg = config_or_default(args.config);
    if (args.epochs_override >= 0) cfg.train.epochs = args.epochs_override;

    const Dataset ds = load_dataset(args.data);
    const auto train_set = ds.split("train");
    const auto test_set = ds.split("test");
    if (train_set.empty()) throw ConfigError("dataset has no training split");

    cfg.rls.height = ds.height;
    cfg.rls.width = ds.width;

    auto print_epoch = [](const EpochStats& s) {
      if (s.has_val) {
        std::printf("epoch %d lr=%.3g mean_loss=%.6g val_f=%.4f\n", s.epoch, s.lr,
                    s.mean_loss, s.val_fmeasure);
      } else {
        std::printf("epoch %d lr=%.3g mean_loss=%.6g\n", s.epoch, s.lr, s.mean_loss);
      }
      std::fflush(stdout);
    };

    if (args.model == "rls") {
      TrainOptions opts;
      opts.mode = cfg.train_mode;
      opts.on_epoch = print_epoch;
      if (args.validate) opts.validation = &test_set;
      ParamSet initial;
      int start_epoch = 0;
      if (!args.resume.empty()) {
        LoadedParams lp = load_params(args.resume);
        if (lp.params.height != ds.height || lp.params.width != ds.width) {
          throw ShapeError("checkpoint grid does not match dataset");
        }
        initial = std::move(lp.params);
        cfg.rls.steps = lp.steps;
        cfg.rls.diagonal = initial.diagonal;
        start_epoch = read_sidecar_epoch(args.resume);
        opts.initial = &initial;
        opts.start_epoch = start_epoch;
      }
      const TrainResult result = train(train_set, cfg.rls, cfg.train, opts);
      save_params(result.params, cfg.rls.steps, args.out);
      write_checkpoint_sidecar(args.out, cfg, result.opt.epoch, "rls",
                               cfg.train_mode);
      write_history_csv(result.history, args.out + ".history.csv");
    } else {
      const FcnTrainResult result = train_fcn(
          train_set, ds.height, ds.width, 0, cfg.rls.init_scale, cfg.train,
          args.validate ? &test_set : nullptr, print_epoch);
      save_fcn(result.params, args.out);
      write_checkpoint_sidecar(args.out, cfg, cfg.train.epochs, "fcn",
                               cfg.train_mode);
      write_history_csv(result.history, args.out + ".history.csv");
    }
    std::printf("checkpoint written to %s\n", args.out.c_str());
    return kExitOk;
  });
}

int cmd_segment(const SegmentArgs& args) {
  return guarded([&]() {
    if (args.input.empty() || args.out.empty() || args.method.empty()) {
      throw ConfigError("segment needs --method, --input and --out");
    }
    if (args.method != "cls" && args.method != "rls" && args.method != "fcn") {
      throw ConfigError("unknown method '" + args.method +
                        "' (valid: cls, rls, fcn)");
    }
    if ((args.method == "rls" || args.method == "fcn") && args.ckpt.empty()) {
      throw ConfigError(args.method + " segmentation needs --ckpt");
    }
    const RunConfig cfg = config_or_default(args.config);
    const Field image = read_pgm(args.input);

    Field mask;
    double elapsed = 0.0;
    if (args.method == "cls") {
      const double t0 = now_seconds();
      const SegmentResult result = segment_cls(image, cfg.cls);
      elapsed = now_seconds() - t0;
      mask = result.mask;
      if (!args.trace_csv.empty()) {
        write_energy_trace_csv(result.energy_trace, args.trace_csv);
      }
    } else if (args.method == "rls") {
      const LoadedParams lp = load_params(args.ckpt);
      RlsConfig rc = cfg.rls;
      rc.height = lp.params.height;
      rc.width = lp.params.width;
      rc.steps = lp.steps;
      rc.diagonal = lp.params.diagonal;
      if (image.height != rc.height || image.width != rc.width) {
        throw ShapeError("input image does not match checkpoint grid");
      }
      const double t0 = now_seconds();
      const ForwardCache cache = forward(image, lp.params, rc);
      mask = predict_mask(cache.yhat, rc.height, rc.width);
      elapsed = now_seconds() - t0;
    } else {
      const FcnParams params = load_fcn(args.ckpt);
      if (image.height != params.height || image.width != params.width) {
        throw ShapeError("input image does not match checkpoint grid");
      }
      const double t0 = now_seconds();
      const FcnCache cache = fcn_forward(image, params);
      mask = predict_mask(cache.yhat, params.height, params.width);
      elapsed = now_seconds() - t0;
    }
    write_pgm(mask, args.out);
    std::printf("inference_s=%.6f\n", elapsed);
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args) {
  return guarded([&]() {
    if (args.data.empty() || args.out_csv.empty()) {
      throw ConfigError("eval needs --data and --out");
    }
    for (const std::string& m : args.methods) {
      if (m != "cls" && m != "rls" && m != "fcn") {
        throw ConfigError("unknown method '" + m + "' (valid: cls, rls, fcn)");
      }
    }
    RunConfig cfg = config_or_default(args.config);
    if (!args.methods.empty()) cfg.bench.methods = args.methods;

    const Dataset ds = load_dataset(args.data);
    const auto test_set = ds.split("test");
    if (test_set.empty()) throw ConfigError("dataset has no test split");

    BenchInputs inputs;
    inputs.cls = cfg.cls;
    LoadedParams rls_lp;
    FcnParams fcn_params;
    for (const std::string& m : cfg.bench.methods) {
      if (m == "rls") {
        if (args.rls_ckpt.empty()) throw ConfigError("eval with rls needs --rls-ckpt");
        rls_lp = load_params(args.rls_ckpt);
        if (rls_lp.params.height != ds.height || rls_lp.params.width != ds.width) {
          throw ShapeError("rls checkpoint grid does not match dataset");
        }
        inputs.rls = cfg.rls;
        inputs.rls.height = rls_lp.params.height;
        inputs.rls.width = rls_lp.params.width;
        inputs.rls.steps = rls_lp.steps;
        inputs.rls.diagonal = rls_lp.params.diagonal;
        inputs.rls_params = &rls_lp.params;
      } else if (m == "fcn") {
        if (args.fcn_ckpt.empty()) throw ConfigError("eval with fcn needs --fcn-ckpt");
        fcn_params = load_fcn(args.fcn_ckpt);
        if (fcn_params.height != ds.height || fcn_params.width != ds.width) {
          throw ShapeError("fcn checkpoint grid does not match dataset");
        }
        inputs.fcn_params = &fcn_params;
      }
    }

    const fs::path csv_path(args.out_csv);
    const fs::path out_dir =
        csv_path.has_parent_path() ? csv_path.parent_path() : fs::path(".");
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    const BenchReport report =
        run_benchmark(test_set, cfg.bench, inputs, out_dir.string());
    write_bench_csv(report, args.out_csv);
    fs::copy_file(fs::path(args.data) / "manifest.json", out_dir / "manifest.json",
                  fs::copy_options::overwrite_existing, ec);
    write_run_meta(out_dir / "run_meta.json", "eval", cfg);

    std::printf("%s\n", bench_csv_header().c_str());
    for (const MethodReport& m : report.methods) {
      std::printf("%s,%.4f,%.4f,%.4f,%.4f,%.6f,%.6f\n", m.method.c_str(),
                  m.precision, m.recall, m.fmeasure, m.iou, m.mean_time_s,
                  m.median_time_s);
    }
    return kExitOk;
  });
}

int cmd_gradcheck(const GradcheckArgs& args) {
  return guarded([&]() {
    GradCheckReport report;
    if (args.model == "rls") {
      RlsConfig cfg;
      cfg.height = args.grid;
      cfg.width = args.grid;
      cfg.steps = args.steps;
      cfg.diagonal = args.diagonal;
      report = grad_check(cfg, bptt_mode_from_name(args.mode), args.h, args.tol,
                          args.seed);
    } else if (args.model == "fcn") {
      report = grad_check_fcn(args.grid, args.grid, args.h, args.tol, args.seed);
    } else {
      throw ConfigError("unknown model '" + args.model + "' (valid: rls, fcn)");
    }
    for (const GradCheckBlock& b : report.blocks) {
      std::printf("block %-3s max_rel_err=%.3e\n", b.name.c_str(), b.max_rel_err);
    }
    std::printf("%s (max %.3e, tol %.1e)\n", report.pass ? "PASS" : "FAIL",
                report.max_rel_err(), report.tol);
    return report.pass ? kExitOk : kExitCheckFailed;
  });
}

}  // namespace rlseg
