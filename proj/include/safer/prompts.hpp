#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "safer/agents.hpp"
#include "safer/world.hpp"

// Prompt templates live in assets/prompts/*.txt and are compiled in. Each
// file starts with a "#v<N>" version line; "{{field}}" marks a substitution.

namespace safer::prompts {

enum class Role { TaskPlanner, SafetyPlanner, Execution, Judge };
std::string to_string(Role r);

using Context = std::map<std::string, std::string>;

/// Context fields the role's templates need.
const std::vector<std::string>& required_fields(Role role);

/// System turn then user turn. Throws PromptError when a field is missing.
std::vector<agents::ChatTurn> build_prompt(Role role, const Context& context);

/// Fills one template by name ("judge_reminder", ...).
std::string instantiate(const std::string& name, const Context& context);
int template_version(const std::string& name);
/// "name@v1" for every template, sorted; recorded in traces.
std::vector<std::string> template_versions();

/// One line per robot: label, id, base kind and capability list as given in the scene.
std::string describe_capabilities(const world::WorldState& world);
std::string describe_capabilities(const world::RobotState& robot);
/// One line per entity. With `robot`, only entities within `radius` of its base.
std::string describe_observations(const world::WorldState& world, const std::optional<std::string>& robot = std::nullopt,
                                  double radius = 3.0);

}  // namespace safer::prompts
