#include "petseg/external_predictor.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>

#include "json.hpp"
#include "petseg/nifti.hpp"

extern char** environ;

namespace petseg {

int run_process(const std::vector<std::string>& argv) {
  if (argv.empty()) return -1;
  std::vector<char*> args;
  for (const std::string& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  pid_t pid = 0;
  if (posix_spawnp(&pid, args[0], nullptr, nullptr, args.data(), environ) != 0) return -1;
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return -1;
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExternalPredictor::ExternalPredictor(std::string name, std::vector<std::string> command,
                                     std::filesystem::path work_dir, std::string case_id)
    : name_(std::move(name)), command_(std::move(command)), work_dir_(std::move(work_dir)),
      case_id_(std::move(case_id)) {
  if (command_.empty()) throw Error(ErrorCode::InvalidArgument, "external predictor needs a command");
}

Volume3D ExternalPredictor::predict(const ChannelStack& stack) {
  namespace fs = std::filesystem;
  const fs::path dir = work_dir_ / (name_ + "_call" + std::to_string(calls_++));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::PredictorFailure, name_ + ": cannot create " + dir.string());

  static constexpr const char* kNames[] = {"ct_raw", "pet_raw", "ct_clipped", "pet_clipped"};
  nlohmann::json paths = nlohmann::json::array();
  for (int c = 0; c < ChannelStack::kCount; ++c) {
    const fs::path p = dir / (std::string("channel_") + std::to_string(c) + "_" + kNames[c] + ".nii");
    nifti::WriteOptions opts;
    opts.datatype = nifti::Datatype::Float64;
    nifti::write_volume(stack[c], p, opts);
    paths.push_back(p.string());
  }
  const fs::path output = dir / "probability.nii";
  const fs::path request_path = dir / "request.json";
  const nlohmann::json request = {
      {"case_id", case_id_},
      {"channel_paths", paths},
      {"channel_names", {kNames[0], kNames[1], kNames[2], kNames[3]}},
      {"target_spacing", {stack.spacing()[0], stack.spacing()[1], stack.spacing()[2]}},
      {"shape", {stack.shape()[0], stack.shape()[1], stack.shape()[2]}},
      {"output_path", output.string()},
  };
  {
    std::ofstream out(request_path);
    out << request.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::PredictorFailure, name_ + ": cannot write request");
  }

  fs::remove(output, ec);  // a failed earlier call may have left one behind

  std::vector<std::string> argv = command_;
  argv.push_back(request_path.string());
  const int status = run_process(argv);
  if (status != 0) {
    throw Error(ErrorCode::PredictorFailure, name_ + ": backend exited with status " + std::to_string(status));
  }

  Volume3D prob;
  try {
    prob = nifti::read_volume(output, VolumeKind::Probability);
  } catch (const Error& e) {
    throw Error(ErrorCode::PredictorFailure, name_ + ": unreadable output: " + e.what());
  }
  if (!keep_files_) fs::remove_all(dir, ec);
  return prob;
}

}  // namespace petseg
