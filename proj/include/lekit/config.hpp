#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "lekit/error.hpp"

namespace lekit {

enum class Objective { Lib, LibGap };

inline std::string objective_name(Objective o) { return o == Objective::Lib ? "lib" : "libgap"; }

inline Objective objective_from_name(const std::string& s) {
  if (s == "lib") return Objective::Lib;
  if (s == "libgap") return Objective::LibGap;
  throw ConfigError("unknown objective '" + s + "' (expected lib|libgap)");
}

/// Everything a training run depends on. batch == 0 means full batch.
struct TrainConfig {
  double alpha = 1.0;
  double beta = 0.001;
  std::size_t latent_dim = 256;
  std::size_t hidden_dim = 64;
  std::size_t epochs = 150;
  double learning_rate = 1e-3;
  std::size_t batch = 0;
  std::uint64_t seed = 0;
  std::size_t mc_samples = 1;
  Objective objective = Objective::Lib;
};

/// Throws ConfigError on hard violations; returns soft warnings (the alpha /
/// beta search grid tops out at 10, larger values are legal but flagged).
inline std::vector<std::string> validate(const TrainConfig& c) {
  if (c.alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (c.beta < 0.0) throw ConfigError("beta must be >= 0");
  if (c.latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (c.hidden_dim == 0) throw ConfigError("hidden_dim must be >= 1");
  if (c.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (c.mc_samples == 0) throw ConfigError("mc_samples must be >= 1");

  std::vector<std::string> warnings;
  if (c.alpha > 10.0) warnings.push_back("alpha > 10 is outside the usual search grid");
  if (c.beta > 10.0) warnings.push_back("beta > 10 is outside the usual search grid");
  return warnings;
}

}  // namespace lekit
