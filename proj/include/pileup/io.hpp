#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pileup/bounds.hpp"
#include "pileup/dictionary.hpp"
#include "pileup/estimation.hpp"
#include "pileup/signal.hpp"
#include "pileup/solver.hpp"

namespace pileup {

using Json = nlohmann::json;

/// Shortest round-trippable decimal (17 significant digits, general notation).
std::string format_real(double v);

/// `<path>` with its extension replaced by `.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& signal_path);

/// Two-column CSV `index,value` plus the sidecar `{ "dt": ..., "sigma": ... }`.
void write_signal(const std::filesystem::path& path, const SampledSignal& signal);

/// Reads the CSV with the given dt and sigma; pads one trailing zero when the count is odd.
SampledSignal ingest_signal(const std::filesystem::path& path, double dt, double sigma);

/// Reads the CSV and takes dt and sigma from the sidecar. Explicit values override it.
SampledSignal load_signal(const std::filesystem::path& path, std::optional<double> dt = {},
                          std::optional<double> sigma = {});

/// `t,energy,theta1,theta2` for continuous shapes, `t,energy,column` for bank shapes.
void write_truth(const std::filesystem::path& path, const GroundTruth& truth);
GroundTruth read_truth(const std::filesystem::path& path);

/// `{ "theta1": {"from","to","step"} | [values], "theta2": ..., "tau": n }`
ShapeGrid parse_shape_grid(const Json& j);
ShapeGrid load_shape_grid(const std::filesystem::path& path);

Json to_json(const Dictionary& dict, const SparseRegressor& beta);
Json to_json(const RateReport& report);
Json to_json(const BoundReport& report);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

} // namespace pileup
