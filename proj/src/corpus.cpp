#include "heartsteps/corpus.hpp"

#include "heartsteps/error.hpp"
#include "heartsteps/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace heartsteps {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
    T value{};
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse column '" +
                         std::string(column) + "' value '" + std::string(field) + "'");
    return value;
}

std::string format_double(double v) {
    char buf[64];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace

Corpus::Corpus(std::vector<CorpusRow> rows) : rows_(std::move(rows)) {
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const std::string& id = rows_[i].user_id;
        if (users_.empty() || users_.back() != id) {
            if (!seen.emplace(id, users_.size()).second)
                throw InvalidArgument("rows of participant '" + id + "' are not contiguous");
            users_.push_back(id);
            offsets_.push_back(i);
        } else {
            const CorpusRow& prev = rows_[i - 1];
            if (std::pair(rows_[i].day, rows_[i].slot) <= std::pair(prev.day, prev.slot))
                throw InvalidArgument("rows of participant '" + id +
                                      "' are not ordered by (day, slot)");
        }
    }
    offsets_.push_back(rows_.size());
}

std::span<const CorpusRow> Corpus::participant_rows(std::size_t index) const {
    if (index >= users_.size()) throw InvalidArgument("participant index out of range");
    return {rows_.data() + offsets_[index], offsets_[index + 1] - offsets_[index]};
}

Corpus Corpus::subset(std::span<const std::string> users) const {
    std::vector<CorpusRow> out;
    for (std::size_t i = 0; i < users_.size(); ++i) {
        if (std::find(users.begin(), users.end(), users_[i]) == users.end()) continue;
        const auto rows = participant_rows(i);
        out.insert(out.end(), rows.begin(), rows.end());
    }
    return Corpus(std::move(out));
}

std::vector<RawContext> Corpus::contexts() const {
    std::vector<RawContext> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r.raw);
    return out;
}

void Corpus::check_complete_days(int slots_per_day) const {
    for (std::size_t i = 0; i < users_.size(); ++i) {
        const auto rows = participant_rows(i);
        if (rows.size() % static_cast<std::size_t>(slots_per_day) != 0)
            throw InvalidArgument("participant '" + users_[i] + "' has an incomplete day");
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const int day = static_cast<int>(k) / slots_per_day + 1;
            const int slot = static_cast<int>(k) % slots_per_day + 1;
            if (rows[k].day != day || rows[k].slot != slot)
                throw InvalidArgument("participant '" + users_[i] + "' is missing day " +
                                      std::to_string(day) + " slot " + std::to_string(slot));
        }
    }
}

Corpus read_corpus_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("corpus is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    if (header.size() != kCorpusColumns.size() ||
        !std::equal(header.begin(), header.end(), kCorpusColumns.begin()))
        throw ParseError("corpus header does not match the expected columns");

    std::vector<CorpusRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != kCorpusColumns.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(kCorpusColumns.size()) + " fields");
        CorpusRow r;
        r.user_id = std::string(f[0]);
        r.day = parse_number<int>(f[1], line_no, kCorpusColumns[1]);
        r.slot = parse_number<int>(f[2], line_no, kCorpusColumns[2]);
        const int avail = parse_number<int>(f[3], line_no, kCorpusColumns[3]);
        if (avail != 0 && avail != 1)
            throw ParseError("line " + std::to_string(line_no) + ": available must be 0 or 1");
        r.available = avail == 1;
        for (std::size_t k = 0; k < kNumRawFeatures; ++k)
            r.raw.values[k] = parse_number<double>(f[4 + k], line_no, kCorpusColumns[4 + k]);
        r.action = parse_number<int>(f[10], line_no, kCorpusColumns[10]);
        if (r.action != 0 && r.action != 1)
            throw ParseError("line " + std::to_string(line_no) + ": action must be 0 or 1");
        if (!r.available && r.action == 1)
            throw ParseError("line " + std::to_string(line_no) +
                             ": action 1 at an unavailable time");
        r.reward = parse_number<double>(f[11], line_no, kCorpusColumns[11]);
        r.residual = parse_number<double>(f[12], line_no, kCorpusColumns[12]);
        rows.push_back(std::move(r));
    }
    return Corpus(std::move(rows));
}

Corpus read_corpus_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus '" + path + "'");
    return read_corpus_csv(in);
}

void write_corpus_csv(const Corpus& corpus, std::ostream& out) {
    for (std::size_t i = 0; i < kCorpusColumns.size(); ++i)
        out << (i ? "," : "") << kCorpusColumns[i];
    out << '\n';
    for (const auto& r : corpus.rows()) {
        out << r.user_id << ',' << r.day << ',' << r.slot << ',' << (r.available ? 1 : 0);
        for (double v : r.raw.values) out << ',' << format_double(v);
        out << ',' << r.action << ',' << format_double(r.reward) << ','
            << format_double(r.residual) << '\n';
    }
}

void write_corpus_csv(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus '" + path + "'");
    write_corpus_csv(corpus, out);
    if (!out) throw IoError("failed writing corpus '" + path + "'");
}

std::vector<double> reconstruct_dosage(std::span<const CorpusRow> rows, double lambda) {
    std::vector<double> out(rows.size());
    double x = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[i] = x;
        x = update_dosage(x, rows[i].action == 1, lambda);
    }
    return out;
}

void CorpusSpec::validate() const {
    if (participants < 2) throw InvalidArgument("corpus needs at least two participants");
    if (days < 1 || slots_per_day < 1) throw InvalidArgument("days and slots must be positive");
    if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in (0, 1)");
    if (!(p_available > 0.0 && p_available < 1.0))
        throw InvalidArgument("p_available must lie in (0, 1)");
    if (!(p_treat > 0.0 && p_treat < 1.0)) throw InvalidArgument("p_treat must lie in (0, 1)");
    if (!(noise_sd >= 0.0) || !(person_sd >= 0.0))
        throw InvalidArgument("noise scales must be nonnegative");
    if (!(context_autocorr > -1.0 && context_autocorr < 1.0))
        throw InvalidArgument("context_autocorr must lie in (-1, 1)");
    Standardizer check(nominal_ranges);
    (void)check;
}

Corpus generate_corpus(const CorpusSpec& spec, std::uint64_t seed) {
    spec.validate();
    const Standardizer nominal(spec.nominal_ranges);
    const double cap = 1.0 / (1.0 - spec.lambda);
    std::mt19937_64 rng(derive_seed(seed, {0x636f72707573ULL}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::array<double, 5> slot_temperature = {-3.0, 0.0, 3.0, 2.0, -1.0};

    std::vector<CorpusRow> rows;
    rows.reserve(static_cast<std::size_t>(spec.participants * spec.days * spec.slots_per_day));
    for (int p = 0; p < spec.participants; ++p) {
        char id[16];
        std::snprintf(id, sizeof id, "u%03d", p + 1);

        // Person-level coefficients. Engagement stays at zero: it is not
        // recorded in historical studies.
        Eigen::VectorXd a_avail(kDimG), a_unavail(kDimG), b(kDimF);
        for (int k = 0; k < kDimG; ++k) {
            const double s = k == fidx::kEngagement ? 0.0 : spec.person_sd;
            a_avail(k) = spec.alpha_avail[static_cast<std::size_t>(k)] + s * normal(rng);
            a_unavail(k) = spec.alpha_unavail[static_cast<std::size_t>(k)] + s * normal(rng);
        }
        for (int k = 0; k < kDimF; ++k) {
            const double s = k == fidx::kEngagement ? 0.0 : spec.person_sd;
            b(k) = spec.beta[static_cast<std::size_t>(k)] + s * normal(rng);
        }
        const double activity = normal(rng);
        std::vector<double> variation_base(static_cast<std::size_t>(spec.slots_per_day));
        for (auto& v : variation_base) v = 0.5 + 1.5 * unif(rng);

        double latent = normal(rng);
        double temp_anomaly = 4.0 * normal(rng);
        double dosage = 0.0;
        const double rho = spec.context_autocorr;
        for (int d = 1; d <= spec.days; ++d) {
            temp_anomaly = 0.8 * temp_anomaly + 4.0 * 0.6 * normal(rng);
            const double yesterday = 8.5 + 0.3 * activity + 0.4 * normal(rng);
            for (int l = 1; l <= spec.slots_per_day; ++l) {
                latent = rho * latent + std::sqrt(1.0 - rho * rho) * normal(rng);
                CorpusRow r;
                r.user_id = id;
                r.day = d;
                r.slot = l;
                r.raw[RawFeature::Prior30Steps] =
                    std::clamp(3.5 + 0.8 * activity + 1.5 * latent, 0.0, 8.0);
                r.raw[RawFeature::YesterdaySteps] = yesterday;
                r.raw[RawFeature::Temperature] =
                    15.0 + temp_anomaly +
                    slot_temperature[static_cast<std::size_t>(l - 1) % slot_temperature.size()];
                const double p_home = (l == 1 || l == spec.slots_per_day) ? 0.6 : 0.4;
                r.raw[RawFeature::Location] = unif(rng) < p_home ? 1.0 : 0.0;
                r.raw[RawFeature::StepVariation] = std::clamp(
                    variation_base[static_cast<std::size_t>(l - 1)] + 0.2 * normal(rng), 0.0,
                    3.0);
                r.raw[RawFeature::Engagement] = std::floor(50.0 * unif(rng));
                r.available = unif(rng) < spec.p_available;
                const double u_treat = unif(rng);
                r.action = (r.available && u_treat < spec.p_treat) ? 1 : 0;

                const FeaturePair x = build_features(r.raw, std::min(dosage, cap), nominal,
                                                     spec.lambda);
                const double mean = r.available ? x.g.dot(a_avail) + r.action * x.f.dot(b)
                                                : x.g.dot(a_unavail);
                const double curve = x.g(fidx::kPrior30) - 0.5;
                const double misfit = spec.nonlinearity * (curve * curve - 1.0 / 12.0) * 4.0;
                r.residual = misfit + spec.noise_sd * normal(rng);
                r.reward = mean + r.residual;
                rows.push_back(std::move(r));
                dosage = update_dosage(dosage, rows.back().action == 1, spec.lambda);
            }
        }
    }
    return Corpus(std::move(rows));
}

}  // namespace heartsteps
