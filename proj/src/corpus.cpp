#include "skilltrace/corpus.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skilltrace/error.hpp"
#include "skilltrace/io.hpp"
#include "skilltrace/random.hpp"

namespace skilltrace {

namespace {

constexpr std::string_view kDatasetMagic = "# skilltrace-dataset v1";
constexpr std::string_view kItemSeparator = "@@";

class Interner {
public:
    explicit Interner(std::vector<std::string>& names) : names_(names) {
        for (std::uint32_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
    }

    std::uint32_t intern(const std::string& name) {
        auto [it, inserted] = index_.try_emplace(name, static_cast<std::uint32_t>(names_.size()));
        if (inserted) names_.push_back(name);
        return it->second;
    }

    std::optional<std::uint32_t> find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::vector<std::string>& names_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct ColumnMap {
    std::vector<std::string> user;
    std::vector<std::string> item;
    std::vector<std::string> step;  // KDD only
    std::vector<std::string> time;
    std::vector<std::string> correct;
    std::vector<std::string> skills;
    bool skills_prefix_kc = false;
};

ColumnMap columns_for(Format::Kind kind) {
    switch (kind) {
        case Format::Kind::assist12:
            return {{"user_id"}, {"problem_id"}, {}, {"start_time", "timestamp"}, {"correct"}, {"skill_id"}, false};
        case Format::Kind::kddcup:
            return {{"Anon Student Id"},
                    {"Problem Name"},
                    {"Step Name"},
                    {"First Transaction Time"},
                    {"Correct First Attempt"},
                    {"KC(Default)"},
                    true};
        case Format::Kind::generic:
            break;
    }
    return {{"user", "user_id", "student"}, {"item", "item_id"}, {}, {"timestamp", "time"}, {"correct"},
            {"skills", "skill", "skill_id"}, false};
}

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       const std::vector<std::string>& names) {
    for (const auto& name : names) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
    }
    return std::nullopt;
}

double to_days(double value, TimeUnit unit) {
    switch (unit) {
        case TimeUnit::seconds: return value / 86400.0;
        case TimeUnit::milliseconds: return value / 86'400'000.0;
        case TimeUnit::days: return value;
    }
    return value;
}

std::vector<std::string> split_skills(std::string_view field) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= field.size()) {
        auto end = field.find('~', start);
        if (end == std::string_view::npos) end = field.size();
        auto token = io::trim(field.substr(start, end - start));
        if (!token.empty() && token != "NaN" && token != "nan") out.emplace_back(token);
        start = end + 1;
    }
    return out;
}

bool getline_any(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void load_qmatrix_file(const std::filesystem::path& path, Dataset& dataset) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open q-matrix " + path.string());
    std::string line;
    std::size_t line_no = 0;
    char delimiter = ',';
    Interner items(dataset.items);
    Interner skills(dataset.skills);
    std::vector<std::pair<ItemIndex, SkillIndex>> entries;
    while (getline_any(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        if (line_no == 1) {
            delimiter = io::sniff_delimiter(line);
            continue;
        }
        auto fields = io::split_record(line, delimiter);
        if (fields.size() < 2) throw ParseError(path.string(), line_no, "expected item_id and skill_id");
        const auto item_id = std::string(io::trim(fields[0]));
        const auto skill_id = std::string(io::trim(fields[1]));
        if (item_id.empty() || skill_id.empty()) {
            throw ParseError(path.string(), line_no, "empty item or skill id");
        }
        auto item = items.find(item_id);
        if (!item) continue;  // item never answered in the log
        entries.emplace_back(*item, skills.intern(skill_id));
    }
    dataset.qmatrix.resize(dataset.items.size(), dataset.skills.size());
    for (auto [item, skill] : entries) dataset.qmatrix.add(item, skill);
}

struct TimeKey {
    StudentIndex student;
    ItemIndex item;
    std::uint64_t time_bits;
    bool operator==(const TimeKey&) const = default;
};

struct TimeKeyHash {
    std::size_t operator()(const TimeKey& k) const noexcept {
        std::uint64_t h = k.student;
        h = h * 0x9E3779B97F4A7C15ULL ^ k.item;
        h = h * 0x9E3779B97F4A7C15ULL ^ k.time_bits;
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};

}  // namespace

QMatrix::QMatrix(std::size_t item_count, std::size_t skill_count) { resize(item_count, skill_count); }

void QMatrix::resize(std::size_t item_count, std::size_t skill_count) {
    rows_.resize(item_count);
    skill_count_ = skill_count;
}

void QMatrix::add(ItemIndex item, SkillIndex skill) {
    if (item >= rows_.size() || skill >= skill_count_) {
        throw DimensionError(fmt::format("q-matrix entry ({}, {}) outside {}x{}", item, skill, rows_.size(),
                                         skill_count_));
    }
    auto& row = rows_[item];
    auto it = std::lower_bound(row.begin(), row.end(), skill);
    if (it == row.end() || *it != skill) row.insert(it, skill);
}

std::vector<ItemIndex> QMatrix::items_with(SkillIndex skill) const {
    std::vector<ItemIndex> out;
    for (ItemIndex j = 0; j < rows_.size(); ++j) {
        if (std::binary_search(rows_[j].begin(), rows_[j].end(), skill)) out.push_back(j);
    }
    return out;
}

std::size_t QMatrix::entry_count() const noexcept {
    std::size_t n = 0;
    for (const auto& row : rows_) n += row.size();
    return n;
}

std::vector<std::size_t> Dataset::student_offsets() const {
    if (!preprocessed) throw ConfigError("student offsets require a preprocessed dataset");
    std::vector<std::size_t> offsets(students.size() + 1, 0);
    for (const auto& x : interactions) ++offsets[x.student + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    return offsets;
}

Format Format::parse(std::string_view tag) {
    Format format;
    auto colon = tag.find(':');
    auto name = tag.substr(0, colon);
    if (name == "assist12") {
        format.kind = Kind::assist12;
    } else if (name == "kddcup") {
        format.kind = Kind::kddcup;
    } else if (name == "generic") {
        format.kind = Kind::generic;
    } else {
        throw ConfigError("unknown format tag '" + std::string(tag) + "' (expected assist12, kddcup or generic)");
    }
    if (colon != std::string_view::npos) {
        auto unit = tag.substr(colon + 1);
        if (unit == "s") {
            format.unit = TimeUnit::seconds;
        } else if (unit == "ms") {
            format.unit = TimeUnit::milliseconds;
        } else if (unit == "days") {
            format.unit = TimeUnit::days;
        } else {
            throw ConfigError("unknown time unit '" + std::string(unit) + "' (expected s, ms or days)");
        }
    }
    return format;
}

Dataset load_interactions(const std::filesystem::path& path, std::string_view format_tag,
                          const std::optional<std::filesystem::path>& qmatrix_path) {
    const Format format = Format::parse(format_tag);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    const std::string file = path.string();
    std::string line;
    std::size_t line_no = 0;
    while (getline_any(in, line)) {
        ++line_no;
        if (!io::trim(line).empty() && line.rfind('#', 0) != 0) break;
    }
    if (io::trim(line).empty()) throw ParseError(file, line_no, "missing header");

    const char delimiter = format.kind == Format::Kind::kddcup ? '\t' : io::sniff_delimiter(line);
    std::vector<std::string> header;
    for (auto& name : io::split_record(line, delimiter)) header.emplace_back(io::trim(name));

    const ColumnMap names = columns_for(format.kind);
    auto require = [&](const std::vector<std::string>& candidates, const char* role) {
        auto col = find_column(header, candidates);
        if (!col) throw ParseError(file, line_no, fmt::format("header has no {} column ({})", role, candidates.front()));
        return *col;
    };
    const std::size_t user_col = require(names.user, "user");
    const std::size_t item_col = require(names.item, "item");
    const std::size_t time_col = require(names.time, "timestamp");
    const std::size_t correct_col = require(names.correct, "correct");
    std::optional<std::size_t> step_col;
    if (!names.step.empty()) step_col = require(names.step, "step");
    std::optional<std::size_t> skills_col = find_column(header, names.skills);
    if (!skills_col && names.skills_prefix_kc) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c].rfind("KC(", 0) == 0) {
                skills_col = c;
                break;
            }
        }
    }
    if (!skills_col && !qmatrix_path) {
        throw ParseError(file, line_no, "header has no skills column and no q-matrix file was given");
    }

    std::size_t needed = std::max({user_col, item_col, time_col, correct_col});
    if (step_col) needed = std::max(needed, *step_col);
    if (skills_col && !qmatrix_path) needed = std::max(needed, *skills_col);

    Dataset dataset;
    Interner students(dataset.students);
    Interner items(dataset.items);
    Interner skills(dataset.skills);
    std::vector<std::pair<ItemIndex, SkillIndex>> tags;

    while (getline_any(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        auto fields = io::split_record(line, delimiter);
        if (fields.size() <= needed) {
            throw ParseError(file, line_no, fmt::format("expected {} fields, found {}", header.size(), fields.size()));
        }
        const std::string user{io::trim(fields[user_col])};
        std::string item{io::trim(fields[item_col])};
        if (user.empty()) throw ParseError(file, line_no, "empty user id");
        if (item.empty()) throw ParseError(file, line_no, "empty item id");
        if (step_col) {
            const auto step = io::trim(fields[*step_col]);
            if (step.empty()) throw ParseError(file, line_no, "empty step id");
            item += kItemSeparator;
            item += step;
        }

        const auto time_field = io::trim(fields[time_col]);
        std::optional<double> days;
        if (auto numeric = io::parse_double(time_field)) {
            if (std::isfinite(*numeric)) days = to_days(*numeric, format.unit);
        } else {
            days = io::parse_datetime_days(time_field);
        }
        if (!days) throw ParseError(file, line_no, "bad timestamp '" + std::string(time_field) + "'");

        auto correct = io::parse_double(fields[correct_col]);
        if (!correct || (*correct != 0.0 && *correct != 1.0)) {
            throw ParseError(file, line_no, "correct must be 0 or 1, got '" + fields[correct_col] + "'");
        }

        Interaction x;
        x.student = students.intern(user);
        x.item = items.intern(item);
        x.time = *days;
        x.correct = *correct == 1.0;
        if (!qmatrix_path) {
            auto row_skills = split_skills(fields[*skills_col]);
            x.missing_skills = row_skills.empty();
            for (const auto& s : row_skills) tags.emplace_back(x.item, skills.intern(s));
        }
        dataset.interactions.push_back(x);
    }

    if (qmatrix_path) {
        load_qmatrix_file(*qmatrix_path, dataset);
        for (auto& x : dataset.interactions) x.missing_skills = dataset.qmatrix.skills_of(x.item).empty();
    } else {
        dataset.qmatrix.resize(dataset.items.size(), dataset.skills.size());
        for (auto [item, skill] : tags) dataset.qmatrix.add(item, skill);
    }
    return dataset;
}

Dataset preprocess(const Dataset& raw, const PreprocessOptions& options) {
    std::vector<Interaction> kept;
    kept.reserve(raw.interactions.size());
    std::unordered_set<TimeKey, TimeKeyHash> seen;
    seen.reserve(raw.interactions.size());
    for (const auto& x : raw.interactions) {
        if (x.missing_skills || raw.qmatrix.skills_of(x.item).empty()) continue;
        if (!seen.insert({x.student, x.item, std::bit_cast<std::uint64_t>(x.time)}).second) continue;
        kept.push_back(x);
    }

    std::vector<std::size_t> counts(raw.students.size(), 0);
    for (const auto& x : kept) ++counts[x.student];
    std::erase_if(kept, [&](const Interaction& x) { return counts[x.student] < options.min_interactions; });
    if (kept.empty()) {
        throw EmptyResultError(fmt::format("no interactions left after preprocessing (min_interactions={})",
                                           options.min_interactions));
    }

    constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
    Dataset out;
    out.preprocessed = true;
    std::vector<std::uint32_t> student_map(raw.students.size(), kUnset);
    std::vector<std::uint32_t> item_map(raw.items.size(), kUnset);
    for (const auto& x : kept) {
        if (student_map[x.student] == kUnset) {
            student_map[x.student] = static_cast<std::uint32_t>(out.students.size());
            out.students.push_back(raw.students[x.student]);
        }
        if (item_map[x.item] == kUnset) {
            item_map[x.item] = static_cast<std::uint32_t>(out.items.size());
            out.items.push_back(raw.items[x.item]);
        }
    }
    std::vector<std::uint32_t> skill_map(raw.skills.size(), kUnset);
    std::vector<ItemIndex> old_item_of(out.items.size());
    for (ItemIndex j = 0; j < raw.items.size(); ++j) {
        if (item_map[j] != kUnset) old_item_of[item_map[j]] = j;
    }
    for (ItemIndex old_item : old_item_of) {
        for (SkillIndex k : raw.qmatrix.skills_of(old_item)) {
            if (skill_map[k] == kUnset) {
                skill_map[k] = static_cast<std::uint32_t>(out.skills.size());
                out.skills.push_back(raw.skills[k]);
            }
        }
    }
    out.qmatrix.resize(out.items.size(), out.skills.size());
    for (ItemIndex j = 0; j < out.items.size(); ++j) {
        for (SkillIndex k : raw.qmatrix.skills_of(old_item_of[j])) out.qmatrix.add(j, skill_map[k]);
    }

    std::vector<double> first_time(out.students.size(), std::numeric_limits<double>::infinity());
    for (auto& x : kept) {
        x.student = student_map[x.student];
        x.item = item_map[x.item];
        first_time[x.student] = std::min(first_time[x.student], x.time);
    }
    for (auto& x : kept) x.time -= first_time[x.student];
    std::stable_sort(kept.begin(), kept.end(), [](const Interaction& a, const Interaction& b) {
        if (a.student != b.student) return a.student < b.student;
        return a.time < b.time;
    });
    out.interactions = std::move(kept);
    return out;
}

StatsReport dataset_stats(const Dataset& dataset) {
    StatsReport report;
    if (dataset.interactions.empty()) {
        report.empty = true;
        return report;
    }
    report.users = dataset.students.size();
    report.items = dataset.items.size();
    report.skills = dataset.skills.size();
    report.interactions = dataset.interactions.size();

    std::size_t wins = 0;
    for (const auto& x : dataset.interactions) wins += x.correct ? 1 : 0;
    report.mean_correctness = static_cast<double>(wins) / static_cast<double>(report.interactions);
    report.skills_per_item = report.items == 0 ? 0.0
                                               : static_cast<double>(dataset.qmatrix.entry_count()) /
                                                     static_cast<double>(report.items);

    Dataset grouped;
    const Dataset* view = &dataset;
    if (!dataset.preprocessed) {
        grouped = preprocess(dataset, {.min_interactions = 0});
        view = &grouped;
    }
    const auto offsets = view->student_offsets();
    double delay_sum = 0.0;
    std::size_t delay_pairs = 0;
    double period_sum = 0.0;
    std::size_t active_students = 0;
    std::unordered_map<SkillIndex, double> last_seen;
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        if (offsets[s] == offsets[s + 1]) continue;
        last_seen.clear();
        for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
            const auto& x = view->interactions[r];
            for (SkillIndex k : view->qmatrix.skills_of(x.item)) {
                auto [it, inserted] = last_seen.try_emplace(k, x.time);
                if (!inserted) {
                    delay_sum += x.time - it->second;
                    ++delay_pairs;
                    it->second = x.time;
                }
            }
        }
        period_sum += view->interactions[offsets[s + 1] - 1].time - view->interactions[offsets[s]].time;
        ++active_students;
    }
    report.mean_skill_delay = delay_pairs == 0 ? 0.0 : delay_sum / static_cast<double>(delay_pairs);
    report.mean_study_period = active_students == 0 ? 0.0 : period_sum / static_cast<double>(active_students);
    return report;
}

nlohmann::json to_json(const StatsReport& report) {
    return {{"users", report.users},
            {"items", report.items},
            {"skills", report.skills},
            {"interactions", report.interactions},
            {"mean_correctness", report.mean_correctness},
            {"skills_per_item", report.skills_per_item},
            {"mean_skill_delay", report.mean_skill_delay},
            {"mean_study_period", report.mean_study_period},
            {"empty", report.empty}};
}

std::vector<StudentIndex> FoldAssignment::students_in(std::uint32_t fold) const {
    std::vector<StudentIndex> out;
    for (StudentIndex s = 0; s < fold_of_student.size(); ++s) {
        if (fold_of_student[s] == fold) out.push_back(s);
    }
    return out;
}

FoldAssignment student_kfold(const Dataset& dataset, std::uint32_t k, std::uint64_t seed) {
    const std::size_t n = dataset.student_count();
    if (k < 2) throw ConfigError(fmt::format("fold count must be at least 2, got {}", k));
    if (k > n) throw ConfigError(fmt::format("fold count {} exceeds student count {}", k, n));

    std::vector<StudentIndex> order(n);
    std::iota(order.begin(), order.end(), 0U);
    Rng rng(seed);
    seeded_shuffle(std::span<StudentIndex>(order), rng);

    FoldAssignment folds;
    folds.k = k;
    folds.seed = seed;
    folds.fold_of_student.assign(n, 0);
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (std::uint32_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) folds.fold_of_student[order[pos++]] = f;
    }
    return folds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    if (!dataset.preprocessed) throw ConfigError("only preprocessed datasets can be saved");
    auto check_id = [](const std::string& id) {
        if (id.find_first_of("\t\n\r") != std::string::npos) {
            throw IoError("id '" + id + "' contains a tab or newline and cannot be serialized");
        }
        return id;
    };
    std::string text;
    text.reserve(dataset.interactions.size() * 48);
    text += kDatasetMagic;
    text += "\nuser\titem\ttimestamp\tcorrect\tskills\n";
    for (const auto& x : dataset.interactions) {
        text += check_id(dataset.students[x.student]);
        text += '\t';
        text += check_id(dataset.items[x.item]);
        text += '\t';
        text += io::format_double(x.time);
        text += x.correct ? "\t1\t" : "\t0\t";
        bool first = true;
        for (SkillIndex k : dataset.qmatrix.skills_of(x.item)) {
            if (!first) text += '~';
            text += check_id(dataset.skills[k]);
            first = false;
        }
        text += '\n';
    }
    io::write_file_atomic(path, text);
}

Dataset load_dataset(const std::filesystem::path& path) {
    {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path.string());
        std::string first;
        getline_any(in, first);
        if (first != kDatasetMagic) {
            throw ParseError(path.string(), 1,
                             "not a prepared dataset (run `prepare` first, or pass a raw log with --format)");
        }
    }
    return preprocess(load_interactions(path, "generic:days"), {.min_interactions = 0});
}

}  // namespace skilltrace
