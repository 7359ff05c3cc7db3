#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rlseg {

// Command implementations behind the CLI. Each returns the process exit code:
//   0 success, 1 check failure, 2 usage/config error, 3 I/O error,
//   4 shape mismatch.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitShape = 4;

struct GenDataArgs {
  std::string config;  // optional; defaults apply when empty
  std::string out;
  bool force = false;
  int threads = 0;  // 0 = hardware concurrency
};
int cmd_gen_data(const GenDataArgs& args);

struct TrainArgs {
  std::string model = "rls";  // rls | fcn
  std::string data;
  std::string config;
  std::string out;     // checkpoint path; history CSV lands at <out>.history.csv
  std::string resume;  // checkpoint to continue from
  int epochs_override = -1;
  bool validate = false;  // track F-measure on the test split per epoch
};
int cmd_train(const TrainArgs& args);

struct SegmentArgs {
  std::string method;  // cls | rls | fcn
  std::string input;
  std::string ckpt;
  std::string out;
  std::string config;
  std::string trace_csv;  // cls only: energy trace output
};
int cmd_segment(const SegmentArgs& args);

struct EvalArgs {
  std::string data;
  std::vector<std::string> methods;
  std::string out_csv;
  std::string rls_ckpt;
  std::string fcn_ckpt;
  std::string config;
};
int cmd_eval(const EvalArgs& args);

struct GradcheckArgs {
  std::string mode = "truncated";  // truncated | full
  std::string model = "rls";       // rls | fcn
  int grid = 8;
  int steps = 3;
  double h = 1e-6;
  double tol = 1e-4;
  std::uint64_t seed = 42;
  bool diagonal = false;
};
int cmd_gradcheck(const GradcheckArgs& args);

}  // namespace rlseg
