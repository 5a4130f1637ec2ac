#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace svebm::cli {

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::string mode;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::string metrics;
  std::optional<std::uint64_t> seed;
};

struct SampleArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path out;
  std::size_t count = 10;
  std::optional<std::size_t> label;
  double temperature = 1.0;
  std::size_t length = 20;
  std::optional<std::uint64_t> seed;
};

struct ClassifyArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
};

struct PlotArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path points;
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct MakeDataArgs {
  std::string kind;
  std::size_t count = 5000;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::filesystem::path vocab;
};

void cmd_train(const TrainArgs& a);
void cmd_eval(const EvalArgs& a);
void cmd_sample(const SampleArgs& a);
void cmd_classify(const ClassifyArgs& a);
void cmd_plot_density(const PlotArgs& a);
void cmd_make_data(const MakeDataArgs& a);

}  // namespace svebm::cli
