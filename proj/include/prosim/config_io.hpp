#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "prosim/control.hpp"
#include "prosim/gait.hpp"
#include "prosim/model.hpp"
#include "prosim/sim.hpp"

namespace prosim {

// JSON configuration files, all carrying a schema_version field.
// Comments (// and /* */) are tolerated in every file.

std::shared_ptr<RobotModel> load_model(const std::string& path);

std::map<std::string, GaitParams> load_gait(const std::string& path);
void save_gait(const std::string& path,
               const std::map<std::string, GaitParams>& gaits);

struct ControllerFile {
  ControllerConfig prosthesis;
  ControllerConfig human;
  std::vector<std::string> human_tracked;
};

ControllerFile load_controller(const std::string& path);

struct ScenarioFile {
  Scenario scenario;
  std::string model_path;       // resolved against the scenario file
  std::string gait_path;
  std::string controller_path;
};

ScenarioFile load_scenario(const std::string& path);
void save_scenario(const std::string& path, const ScenarioFile& sc);

WalkSetup load_walk_setup(const ScenarioFile& sc);

}  // namespace prosim
