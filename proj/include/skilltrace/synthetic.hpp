#pragma once

#include <cstdint>

#include "skilltrace/corpus.hpp"
#include "skilltrace/model.hpp"

namespace skilltrace {

struct SyntheticConfig {
    std::size_t students = 500;
    std::size_t skills = 10;
    std::size_t items = 100;
    std::size_t interactions_per_student = 100;
    /// Share of items tagged with a second skill.
    double multi_skill_fraction = 0.3;
    /// Short-window win weights exceed long-window ones; otherwise all windows share one weight.
    bool forgetting = true;
    double user_stdev = 0.8;
    double item_stdev = 0.8;
    std::uint64_t seed = 42;
};

/// A DAS3H dim-0 world: the generating parameters as a fitted model plus the
/// raw log sampled from it (epoch days, not preprocessed).
struct SyntheticWorld {
    FittedModel truth;
    Dataset raw;
};

/// Generating parameters only: vocabulary, q-matrix and DAS3H weights on the standard windows.
FittedModel synthetic_generator(const SyntheticConfig& config);

/// Samples students practicing in sessions (minutes apart within a session,
/// hours to weeks between sessions), each answer drawn from the generator.
SyntheticWorld generate_world(const SyntheticConfig& config);

}  // namespace skilltrace
