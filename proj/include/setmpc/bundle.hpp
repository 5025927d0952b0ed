#pragma once

#include <string>

#include "setmpc/planner.hpp"

namespace setmpc {

// Path-bundle persistence: equilibria, gains, nested rings with their
// certified targets, per-family vertex models, and the obstacle snapshot.
// Doubles round-trip losslessly.
std::string bundle_to_json(const FullPath& fp, const std::string& scenario_hash);
FullPath bundle_from_json(const std::string& text, std::string* scenario_hash = nullptr);

void save_bundle(const FullPath& fp, const std::string& scenario_hash, const std::string& path);
FullPath load_bundle(const std::string& path, std::string* scenario_hash = nullptr);

}  // namespace setmpc
