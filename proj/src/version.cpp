#include "roughwz/version.hpp"

#include <string>

#include <Eigen/Core>
#include <fftw3.h>

namespace roughwz {

nlohmann::json build_info() {
    return {{"roughwz", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"fftw", std::string(fftw_version)},
            {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                         "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", std::string(__VERSION__)},
            {"cxx", __cplusplus}};
}

}  // namespace roughwz
