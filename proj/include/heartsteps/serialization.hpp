#pragma once

#include "heartsteps/calibration.hpp"
#include "heartsteps/core.hpp"
#include "heartsteps/corpus.hpp"
#include "heartsteps/experiment.hpp"
#include "heartsteps/proxy.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace heartsteps {

using Json = nlohmann::ordered_json;

inline constexpr int kBundleFormatVersion = 1;

/// Config file: every AlgoConfig field optional at the top level; unknown
/// keys are rejected. An optional "corpus" object holds CorpusSpec fields.
Json config_to_json(const AlgoConfig& cfg);
AlgoConfig config_from_json(const Json& j, AlgoConfig base = {});

Json corpus_spec_to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const Json& j, CorpusSpec base = {});

/// {feature_name: {"min": x, "max": y}}
Json standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const Json& j);

Json future_value_to_json(const FutureValue& fv, double gamma);
FutureValue future_value_from_json(const Json& j);

Json proxy_tables_to_json(const ProxyTables& t);

Json tuning_to_json(const TuningResult& t);
TuningResult tuning_from_json(const Json& j);

/// Calibration bundle, optionally carrying the tuning result that chose
/// cfg.gamma and cfg.w.
struct BundleDocument {
    CalibrationBundle bundle;
    std::optional<TuningResult> tuning;
};

Json bundle_to_json(const BundleDocument& doc);
BundleDocument bundle_from_json(const Json& j);

/// Parses a file, reporting the path on failure.
Json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json_file(const Json& j, const std::filesystem::path& path);

/// Per-participant improvements, one row per participant.
void write_cv_csv(const CvReport& report, std::ostream& out);
/// Fold assignments, tuning tables and the overall test.
Json cv_summary_to_json(const CvReport& report);

/// "%.17g"
std::string format_double(double v);

}  // namespace heartsteps
