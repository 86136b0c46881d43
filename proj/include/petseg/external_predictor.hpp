#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "petseg/orchestrator.hpp"

namespace petseg {

/// Backend run as a separate process through a file contract.
///
/// Each call writes the four channels as NIfTI files plus `request.json`
/// ({case_id, channel_paths, channel_names, target_spacing, shape,
/// output_path}) into a fresh directory, then runs `command... request.json`.
/// The process must write a probability NIfTI to output_path and exit 0;
/// anything else raises PredictorFailure.
class ExternalPredictor : public Predictor {
 public:
  ExternalPredictor(std::string name, std::vector<std::string> command, std::filesystem::path work_dir,
                    std::string case_id = "case");

  const std::string& name() const override { return name_; }
  Volume3D predict(const ChannelStack& stack) override;

  void set_case_id(std::string case_id) { case_id_ = std::move(case_id); }
  void keep_files(bool keep) { keep_files_ = keep; }

 private:
  std::string name_;
  std::vector<std::string> command_;
  std::filesystem::path work_dir_;
  std::string case_id_;
  int calls_ = 0;
  bool keep_files_ = false;
};

/// Runs argv[0] (PATH lookup) with the given arguments and returns its exit
/// status, or -1 if it could not be started or was killed by a signal.
int run_process(const std::vector<std::string>& argv);

}  // namespace petseg
