#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "rlseg/commands.hpp"
#include "rlseg/run_config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Level-set segmentation toolkit: a classic variational solver, "
               "a trainable recurrent reformulation, a feedforward baseline, "
               "and a synthetic benchmark harness."};
  app.set_version_flag("--version", std::string(rlseg::kVersion));
  app.require_subcommand(1);

  rlseg::GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--config", gen.config, "Run configuration (JSON)");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");
  gen_cmd->add_option("--threads", gen.threads, "Worker cap (default: all cores)");

  rlseg::TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a segmentation model");
  train_cmd->add_option("--model", train.model, "rls or fcn")
      ->check(CLI::IsMember({"rls", "fcn"}));
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--config", train.config, "Run configuration (JSON)");
  train_cmd->add_option("--out", train.out, "Checkpoint output path")->required();
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue from");
  train_cmd->add_option("--epochs", train.epochs_override,
                        "Override the configured epoch count");
  train_cmd->add_flag("--validate", train.validate,
                      "Track test-split F-measure per epoch");

  rlseg::SegmentArgs seg;
  CLI::App* seg_cmd = app.add_subcommand("segment", "Segment a single image");
  seg_cmd->add_option("--method", seg.method, "cls, rls or fcn")->required();
  seg_cmd->add_option("--input", seg.input, "Input PGM image")->required();
  seg_cmd->add_option("--ckpt", seg.ckpt, "Checkpoint (rls/fcn)");
  seg_cmd->add_option("--out", seg.out, "Output mask PGM")->required();
  seg_cmd->add_option("--config", seg.config, "Run configuration (JSON)");
  seg_cmd->add_option("--trace", seg.trace_csv, "Energy trace CSV (cls only)");

  rlseg::EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Benchmark methods on a dataset");
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--methods", eval.methods, "Methods to evaluate")
      ->delimiter(',');
  eval_cmd->add_option("--out", eval.out_csv, "Results CSV path")->required();
  eval_cmd->add_option("--rls-ckpt", eval.rls_ckpt, "Trained rls checkpoint");
  eval_cmd->add_option("--fcn-ckpt", eval.fcn_ckpt, "Trained fcn checkpoint");
  eval_cmd->add_option("--config", eval.config, "Run configuration (JSON)");

  rlseg::GradcheckArgs gc;
  CLI::App* gc_cmd = app.add_subcommand(
      "gradcheck", "Compare analytic gradients against finite differences");
  gc_cmd->add_option("--mode", gc.mode, "truncated or full")
      ->check(CLI::IsMember({"truncated", "full"}));
  gc_cmd->add_option("--model", gc.model, "rls or fcn")
      ->check(CLI::IsMember({"rls", "fcn"}));
  gc_cmd->add_option("--grid", gc.grid, "Grid side length (default 8)");
  gc_cmd->add_option("--steps", gc.steps, "Recurrence steps (default 3)");
  gc_cmd->add_option("--fd-step", gc.h, "Finite-difference step (default 1e-6)");
  gc_cmd->add_option("--tol", gc.tol, "Pass threshold (default 1e-4)");
  gc_cmd->add_option("--seed", gc.seed, "Instance seed (default 42)");
  gc_cmd->add_flag("--diagonal", gc.diagonal, "Check the diagonal parameterization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rlseg::kExitOk : rlseg::kExitConfig;
  }

  if (gen_cmd->parsed()) return rlseg::cmd_gen_data(gen);
  if (train_cmd->parsed()) return rlseg::cmd_train(train);
  if (seg_cmd->parsed()) return rlseg::cmd_segment(seg);
  if (eval_cmd->parsed()) return rlseg::cmd_eval(eval);
  if (gc_cmd->parsed()) return rlseg::cmd_gradcheck(gc);
  return rlseg::kExitConfig;
}
