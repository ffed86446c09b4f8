#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace skilltrace {

using StudentIndex = std::uint32_t;
using ItemIndex = std::uint32_t;
using SkillIndex = std::uint32_t;

/// Item-to-skill tagging. Rows are kept sorted and unique.
class QMatrix {
public:
    QMatrix() = default;
    QMatrix(std::size_t item_count, std::size_t skill_count);

    void resize(std::size_t item_count, std::size_t skill_count);
    void add(ItemIndex item, SkillIndex skill);

    std::span<const SkillIndex> skills_of(ItemIndex item) const { return rows_.at(item); }
    std::vector<ItemIndex> items_with(SkillIndex skill) const;

    std::size_t item_count() const noexcept { return rows_.size(); }
    std::size_t skill_count() const noexcept { return skill_count_; }
    std::size_t entry_count() const noexcept;

    bool operator==(const QMatrix&) const = default;

private:
    std::vector<std::vector<SkillIndex>> rows_;
    std::size_t skill_count_ = 0;
};

/// One observed answer. Before preprocessing `time` is wall-clock days since
/// the Unix epoch; afterwards it is days since the student's first interaction.
struct Interaction {
    StudentIndex student = 0;
    ItemIndex item = 0;
    double time = 0.0;
    bool correct = false;
    /// The row's skill field was empty; preprocessing drops it.
    bool missing_skills = false;

    bool operator==(const Interaction&) const = default;
};

struct Dataset {
    std::vector<std::string> students;
    std::vector<std::string> items;
    std::vector<std::string> skills;
    QMatrix qmatrix;
    /// File order after loading. After preprocessing: grouped by student index,
    /// chronological within each student with ties in input order.
    std::vector<Interaction> interactions;
    bool preprocessed = false;

    std::size_t student_count() const noexcept { return students.size(); }

    /// Offsets of each student's contiguous block; requires a preprocessed dataset.
    /// Result has student_count() + 1 entries.
    std::vector<std::size_t> student_offsets() const;

    bool operator==(const Dataset&) const = default;
};

enum class TimeUnit { seconds, milliseconds, days };

/// A parsed format tag such as `assist12`, `kddcup`, `generic:ms`.
struct Format {
    enum class Kind { assist12, kddcup, generic } kind = Kind::generic;
    TimeUnit unit = TimeUnit::seconds;

    static Format parse(std::string_view tag);
};

/// Parses a delimiter-separated interaction log. When `qmatrix_path` is given,
/// item skills come from that (item_id, skill_id) triplet file instead of the
/// skills column.
Dataset load_interactions(const std::filesystem::path& path, std::string_view format_tag,
                          const std::optional<std::filesystem::path>& qmatrix_path = std::nullopt);

struct PreprocessOptions {
    std::size_t min_interactions = 10;
};

/// Drops NaN-skill rows and (user, item, timestamp) duplicates, then users with
/// fewer than `min_interactions` rows; rebases time per student and sorts.
Dataset preprocess(const Dataset& raw, const PreprocessOptions& options = {});

struct StatsReport {
    std::size_t users = 0;
    std::size_t items = 0;
    std::size_t skills = 0;
    std::size_t interactions = 0;
    double mean_correctness = 0.0;
    double skills_per_item = 0.0;
    double mean_skill_delay = 0.0;
    double mean_study_period = 0.0;
    bool empty = false;
};

StatsReport dataset_stats(const Dataset& dataset);
nlohmann::json to_json(const StatsReport& report);

struct FoldAssignment {
    std::vector<std::uint32_t> fold_of_student;
    std::uint32_t k = 0;
    std::uint64_t seed = 0;

    std::vector<StudentIndex> students_in(std::uint32_t fold) const;
};

/// Seeded shuffle of the students, then contiguous chunks whose sizes differ by at most one.
FoldAssignment student_kfold(const Dataset& dataset, std::uint32_t k, std::uint64_t seed);

/// Canonical text serialization of a preprocessed dataset (tab-separated, self-describing).
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace skilltrace
