#pragma once

#include "heartsteps/core.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace heartsteps {

/// One decision time of a historical (micro-randomized) study.
struct CorpusRow {
    std::string user_id;
    int day = 1;
    int slot = 1;
    bool available = false;
    RawContext raw;
    int action = 0;
    double reward = 0.0;
    double residual = 0.0;
};

/// Rows grouped contiguously by participant, each participant ordered by
/// (day, slot).
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<CorpusRow> rows);

    const std::vector<CorpusRow>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    /// Participant ids in order of first appearance.
    const std::vector<std::string>& participants() const { return users_; }
    std::span<const CorpusRow> participant_rows(std::size_t index) const;

    /// Rows of the listed participants, in this corpus' order.
    Corpus subset(std::span<const std::string> users) const;
    std::vector<RawContext> contexts() const;

    /// Every participant has complete days of `slots_per_day` slots in order.
    void check_complete_days(int slots_per_day) const;

private:
    std::vector<CorpusRow> rows_;
    std::vector<std::string> users_;
    std::vector<std::size_t> offsets_;  // users_.size() + 1 entries
};

inline constexpr std::array<std::string_view, 13> kCorpusColumns = {
    "user_id",     "day",            "slot",       "available", "prior30_steps",
    "yesterday_steps", "temperature", "location", "step_variation", "engagement",
    "action",      "reward",         "residual"};

Corpus read_corpus_csv(std::istream& in);
Corpus read_corpus_csv(const std::string& path);
void write_corpus_csv(const Corpus& corpus, std::ostream& out);
void write_corpus_csv(const Corpus& corpus, const std::string& path);

/// Dosage at each row of one participant's history, from past actions only:
/// X_1 = 0, X_t+1 = lambda X_t + A_t.
std::vector<double> reconstruct_dosage(std::span<const CorpusRow> rows, double lambda);

/// Ground truth and nuisance settings for the synthetic historical study.
/// Coefficients act on features standardized with `nominal_ranges`, in the
/// g layout (alpha) and f layout (beta).
struct CorpusSpec {
    int participants = 37;
    int days = 42;
    int slots_per_day = 5;
    double lambda = 0.95;
    double p_available = 0.8;
    double p_treat = 0.3;            // constant randomization probability
    double noise_sd = 0.8;
    double person_sd = 0.15;         // spread of person-level coefficients
    double context_autocorr = 0.6;   // AR(1) coefficient of within-day activity
    double nonlinearity = 0.4;       // baseline curvature the linear model misses
    std::array<double, kDimG> alpha_avail = {1.0, -1.5, 0.0, 0.15, 0.3, 2.0, 0.5, 0.3};
    std::array<double, kDimF> beta = {0.5, -1.5, 0.0, 0.15, -0.1};
    std::array<double, kDimG> alpha_unavail = {0.8, -1.2, 0.0, 0.1, 0.2, 2.0, 0.4, 0.2};
    std::array<Standardizer::Range, kNumRawFeatures> nominal_ranges = {{
        {0.0, 8.0},     // prior30_steps (log scale)
        {6.5, 10.5},    // yesterday_steps (log scale)
        {-10.0, 40.0},  // temperature
        {0.0, 1.0},     // location
        {0.0, 3.0},     // step_variation
        {0.0, 50.0},    // engagement
    }};

    void validate() const;
};

/// Generates a study in the corpus schema. The residual column holds the
/// part of the reward not explained by the participant's own linear model.
Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed);

}  // namespace heartsteps
