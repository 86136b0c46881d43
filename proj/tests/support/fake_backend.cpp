// Stand-in segmentation backend for the external predictor contract.
//
//   fake_backend [--exit N] [--scale S] [--skip-output] request.json
//
// Writes clamp(pet_clipped / S, 0, 1) to the request's output_path. --exit
// forces a status code after writing; --skip-output exits 0 without writing.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "json.hpp"
#include "petseg/nifti.hpp"

int main(int argc, char** argv) {
  int exit_code = 0;
  double scale = 20.0;
  bool skip_output = false;
  std::string request_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--exit" && i + 1 < argc) {
      exit_code = std::atoi(argv[++i]);
    } else if (arg == "--scale" && i + 1 < argc) {
      scale = std::atof(argv[++i]);
    } else if (arg == "--skip-output") {
      skip_output = true;
    } else {
      request_path = arg;
    }
  }
  if (request_path.empty()) {
    std::cerr << "usage: fake_backend [--exit N] [--scale S] [--skip-output] request.json\n";
    return 64;
  }
  try {
    std::ifstream in(request_path);
    const nlohmann::json req = nlohmann::json::parse(in);
    if (!skip_output) {
      const auto paths = req.at("channel_paths").get<std::vector<std::string>>();
      petseg::Volume3D pet = petseg::nifti::read_volume(paths.at(3), petseg::VolumeKind::PetSuv);
      pet.data() = (pet.data() / scale).max(0.0).min(1.0);
      pet.set_kind(petseg::VolumeKind::Probability);
      petseg::nifti::WriteOptions opt;
      opt.datatype = petseg::nifti::Datatype::Float64;
      petseg::nifti::write_volume(pet, req.at("output_path").get<std::string>(), opt);
    }
  } catch (const std::exception& e) {
    std::cerr << "fake_backend: " << e.what() << '\n';
    return 70;
  }
  return exit_code;
}
