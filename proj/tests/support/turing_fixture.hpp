#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "artbrain/eval.hpp"

namespace testing_support {

struct PublishedCell {
    artbrain::Knowledge human;
    artbrain::Knowledge ai;
    double percent;  // as printed, one decimal
    std::size_t count;
};

/// Non-empty cells of the published knowledge-level table; every other cell has count 0.
inline const std::vector<PublishedCell> &published_turing_cells() {
    using K = artbrain::Knowledge;
    static const std::vector<PublishedCell> cells = {
        {K::novice, K::novice, 50.0, 12},   {K::novice, K::beginner, 58.8, 8},  {K::novice, K::advanced, 70.0, 1},
        {K::beginner, K::novice, 45.5, 4},  {K::beginner, K::beginner, 51.4, 16}, {K::beginner, K::advanced, 62.0, 8},
        {K::advanced, K::novice, 52.0, 2},  {K::advanced, K::beginner, 55.0, 2}, {K::expert, K::advanced, 80.0, 1},
    };
    return cells;
}

inline constexpr double kPublishedOverallHumanPercent = 53.8;
inline constexpr std::size_t kPublishedRespondents = 50;
inline constexpr double kPublishedModelPercent = 98.0;

/// One respondent with `correct` of `n` answers right, in shuffled order.
inline artbrain::TuringResponse make_respondent(const std::string &id, artbrain::Knowledge human,
                                                artbrain::Knowledge ai, std::size_t correct, std::mt19937_64 &rng,
                                                std::size_t n = 50) {
    using artbrain::Origin;
    artbrain::TuringResponse r;
    r.respondent_id = id;
    r.human_knowledge = human;
    r.ai_knowledge = ai;
    r.elapsed_seconds = 600.0;
    for (std::size_t i = 0; i < n; ++i) r.truth.push_back(i % 2 == 0 ? Origin::human : Origin::machine);
    std::shuffle(r.truth.begin(), r.truth.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        const Origin t = r.truth[i];
        r.answers.emplace_back(i < correct ? t : (t == Origin::human ? Origin::machine : Origin::human));
    }
    return r;
}

/// Respondents built backwards from the published cells: each cell's total correct answers is
/// the integer nearest percent * 50 * count, spread as evenly as possible over its respondents.
inline std::vector<artbrain::TuringResponse> published_turing_fixture(std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    std::vector<artbrain::TuringResponse> out;
    for (const auto &cell : published_turing_cells()) {
        const auto total = static_cast<std::size_t>(std::lround(cell.percent / 100.0 * 50.0 * cell.count));
        for (std::size_t i = 0; i < cell.count; ++i) {
            const std::size_t correct = total / cell.count + (i < total % cell.count ? 1 : 0);
            out.push_back(make_respondent("r" + std::to_string(out.size()), cell.human, cell.ai, correct, rng));
        }
    }
    return out;
}

}  // namespace testing_support
