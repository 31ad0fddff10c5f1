#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jedi/error.hpp"
#include "jedi/image.hpp"
#include "jedi/oracle.hpp"
#include "jedi/rng.hpp"

namespace jedi {

/// One evaluation trial: the oracle's verdicts on the clean, attacked and
/// defended variants of a sample, plus the mask-localization IoU (absent
/// when no patch was applied).
struct TrialRecord {
    std::string id;
    std::string label_clean;
    std::string label_adv;
    std::string label_def;
    std::string ground_truth;
    std::optional<double> iou;
};

/// Intersection over union of two masks. Two empty masks are a perfect
/// match (no patch, no detection) and score 1.
inline double iou(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_dims(b)) throw GeometryError("iou requires equal mask dimensions");
    long long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const bool pa = a.bits[i] != 0, pb = b.bits[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace detail {

inline bool attack_succeeded(const TrialRecord& r) {
    return r.label_clean == r.ground_truth && r.label_adv != r.ground_truth;
}

inline bool attack_failed(const TrialRecord& r) {
    return r.label_clean == r.ground_truth && r.label_adv == r.ground_truth;
}

} // namespace detail

/// Fraction of applied patches localized with IoU strictly above 0.5.
inline double patch_detection_rate(std::span<const TrialRecord> records) {
    long long detected = 0, total = 0;
    for (const auto& r : records) {
        if (!r.iou) continue;
        ++total;
        if (*r.iou > 0.5) ++detected;
    }
    if (total == 0) throw DataError("patch detection rate undefined: no trials with an IoU");
    return static_cast<double>(detected) / static_cast<double>(total);
}

/// Fraction of successful attacks whose correct output the defense
/// restored.
inline double recovery_rate(std::span<const TrialRecord> records) {
    long long recovered = 0, total = 0;
    for (const auto& r : records) {
        if (!detail::attack_succeeded(r)) continue;
        ++total;
        if (r.label_def == r.ground_truth) ++recovered;
    }
    if (total == 0) throw DataError("recovery rate undefined: no successful attacks");
    return static_cast<double>(recovered) / static_cast<double>(total);
}

/// Fraction of initially unharmed correct predictions the defense broke.
inline double lost_prediction_rate(std::span<const TrialRecord> records) {
    long long lost = 0, total = 0;
    for (const auto& r : records) {
        if (!detail::attack_failed(r)) continue;
        ++total;
        if (r.label_def != r.ground_truth) ++lost;
    }
    if (total == 0) throw DataError("lost prediction rate undefined: no failed attacks");
    return static_cast<double>(lost) / static_cast<double>(total);
}

/// A rate plus the exact counts it was computed from; value is absent when
/// the denominator is empty.
struct RateWithCounts {
    std::optional<double> value;
    long long numerator = 0;
    long long denominator = 0;

    static RateWithCounts of(long long num, long long den) {
        RateWithCounts r;
        r.numerator = num;
        r.denominator = den;
        if (den > 0) r.value = static_cast<double>(num) / static_cast<double>(den);
        return r;
    }
};

struct EvalReport {
    long long n_trials = 0;
    RateWithCounts clean_accuracy;
    RateWithCounts adversarial_accuracy;
    RateWithCounts robust_accuracy;
    RateWithCounts patch_success_rate;  // successes over correct clean predictions
    RateWithCounts patch_detection_rate;
    RateWithCounts recovery_rate;
    RateWithCounts lost_prediction_rate;
    // Unconditional bookkeeping counts; they satisfy
    //   robust - adversarial == (recovered - lost) / N
    // exactly, regardless of how the clean predictions went.
    long long recovered_count = 0;
    long long lost_count = 0;
    std::vector<TrialRecord> records;
};

/// The report is a pure function of the per-trial records.
inline EvalReport make_report(std::vector<TrialRecord> records) {
    EvalReport report;
    report.n_trials = static_cast<long long>(records.size());

    long long clean_ok = 0, adv_ok = 0, def_ok = 0;
    long long detected = 0, with_iou = 0;
    long long successes = 0, recovered = 0, failed = 0, lost = 0;
    for (const auto& r : records) {
        if (r.label_clean == r.ground_truth) ++clean_ok;
        if (r.label_adv == r.ground_truth) ++adv_ok;
        if (r.label_def == r.ground_truth) ++def_ok;
        if (r.iou) {
            ++with_iou;
            if (*r.iou > 0.5) ++detected;
        }
        if (detail::attack_succeeded(r)) {
            ++successes;
            if (r.label_def == r.ground_truth) ++recovered;
        }
        if (detail::attack_failed(r) && r.label_def != r.ground_truth) ++lost;
        if (r.label_adv != r.ground_truth && r.label_def == r.ground_truth)
            ++report.recovered_count;
        if (r.label_adv == r.ground_truth && r.label_def != r.ground_truth)
            ++report.lost_count;
    }
    for (const auto& r : records)
        if (detail::attack_failed(r)) ++failed;

    const long long n = report.n_trials;
    report.clean_accuracy = RateWithCounts::of(clean_ok, n);
    report.adversarial_accuracy = RateWithCounts::of(adv_ok, n);
    report.robust_accuracy = RateWithCounts::of(def_ok, n);
    report.patch_success_rate = RateWithCounts::of(successes, clean_ok);
    report.patch_detection_rate = RateWithCounts::of(detected, with_iou);
    report.recovery_rate = RateWithCounts::of(recovered, successes);
    report.lost_prediction_rate = RateWithCounts::of(lost, failed);
    report.records = std::move(records);
    return report;
}

struct EvalSample {
    std::string id;
    Image image;
    std::string label;
};

struct DefenseOutcome {
    Image image;       // repaired input handed back to the oracle
    BinaryMask mask;   // predicted patch location
};

/// Context handed to the defense under evaluation. truth_mask exists so
/// reference defenses (e.g. a perfect-localization upper bound) can be
/// evaluated through the same harness; real pipelines must ignore it.
struct TrialContext {
    std::size_t index = 0;
    const BinaryMask& truth_mask;
};

using DefenseFn = std::function<DefenseOutcome(const Image& attacked, const TrialContext&)>;

/// Identity defense: hands the attacked image straight through with an
/// empty predicted mask.
inline DefenseFn identity_defense() {
    return [](const Image& attacked, const TrialContext&) {
        return DefenseOutcome{attacked, BinaryMask(attacked.width, attacked.height)};
    };
}

/// Runs clean / attacked / defended inference per sample, with the patch at
/// a seeded random location each trial, and assembles the full report.
inline EvalReport evaluate(const std::vector<EvalSample>& dataset, const Patch& patch,
                           ModelOracle& oracle, const DefenseFn& defense, std::uint64_t seed) {
    if (dataset.empty()) throw DataError("empty evaluation dataset");

    Rng rng(derive_seed(seed, 0xe7a1));
    std::vector<TrialRecord> records;
    records.reserve(dataset.size());

    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const EvalSample& sample = dataset[i];
        auto ask = [&](const Image& img, const char* stage) {
            try {
                return oracle.label(img);
            } catch (const Error& e) {
                throw OracleError("oracle failed on sample '" + sample.id + "' (" + stage +
                                  "): " + e.what());
            }
        };

        const int max_x = sample.image.width - patch.image.width;
        const int max_y = sample.image.height - patch.image.height;
        if (max_x < 0 || max_y < 0)
            throw GeometryError("patch does not fit sample '" + sample.id + "'");
        const int x = static_cast<int>(rng.below(static_cast<std::uint32_t>(max_x + 1)));
        const int y = static_cast<int>(rng.below(static_cast<std::uint32_t>(max_y + 1)));

        TrialRecord record;
        record.id = sample.id;
        record.ground_truth = sample.label;
        record.label_clean = ask(sample.image, "clean");

        const PatchApplication attacked = apply_patch(sample.image, patch, x, y);
        record.label_adv = ask(attacked.image, "adversarial");

        const TrialContext context{i, attacked.footprint};
        const DefenseOutcome outcome = defense(attacked.image, context);
        record.label_def = ask(outcome.image, "defended");
        record.iou = iou(outcome.mask, attacked.footprint);

        records.push_back(std::move(record));
    }
    return make_report(std::move(records));
}

// ---- serialization ----

inline nlohmann::json rate_to_json(const RateWithCounts& rate) {
    nlohmann::json j{{"numerator", rate.numerator}, {"denominator", rate.denominator}};
    if (rate.value)
        j["value"] = *rate.value;
    else
        j["value"] = nullptr;
    return j;
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : report.records) {
        nlohmann::json rec{{"id", r.id},
                           {"label_clean", r.label_clean},
                           {"label_adv", r.label_adv},
                           {"label_def", r.label_def},
                           {"ground_truth", r.ground_truth}};
        if (r.iou)
            rec["iou"] = *r.iou;
        else
            rec["iou"] = nullptr;
        records.push_back(std::move(rec));
    }
    return nlohmann::json{{"schema", "jedi-report/1"},
                          {"n_trials", report.n_trials},
                          {"clean_accuracy", rate_to_json(report.clean_accuracy)},
                          {"adversarial_accuracy", rate_to_json(report.adversarial_accuracy)},
                          {"robust_accuracy", rate_to_json(report.robust_accuracy)},
                          {"patch_success_rate", rate_to_json(report.patch_success_rate)},
                          {"patch_detection_rate", rate_to_json(report.patch_detection_rate)},
                          {"recovery_rate", rate_to_json(report.recovery_rate)},
                          {"lost_prediction_rate", rate_to_json(report.lost_prediction_rate)},
                          {"recovered_count", report.recovered_count},
                          {"lost_count", report.lost_count},
                          {"records", std::move(records)}};
}

/// Plain-text table for terminals and logs.
inline std::string report_to_text(const EvalReport& report) {
    auto line = [](const char* name, const RateWithCounts& r) {
        char buf[128];
        if (r.value)
            std::snprintf(buf, sizeof(buf), "%-22s %7.2f%%  (%lld/%lld)\n", name,
                          *r.value * 100.0, r.numerator, r.denominator);
        else
            std::snprintf(buf, sizeof(buf), "%-22s     n/a  (0/%lld)\n", name, r.denominator);
        return std::string(buf);
    };
    std::string out;
    out += "trials: " + std::to_string(report.n_trials) + "\n";
    out += line("clean accuracy", report.clean_accuracy);
    out += line("adversarial accuracy", report.adversarial_accuracy);
    out += line("robust accuracy", report.robust_accuracy);
    out += line("patch success rate", report.patch_success_rate);
    out += line("patch detection rate", report.patch_detection_rate);
    out += line("recovery rate", report.recovery_rate);
    out += line("lost prediction rate", report.lost_prediction_rate);
    return out;
}

} // namespace jedi
