#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "skilltrace/corpus.hpp"

namespace skilltrace {

/// Nested look-back windows in days, strictly increasing, ending with +inf.
class WindowSet {
public:
    WindowSet();
    explicit WindowSet(std::vector<double> widths);

    /// Parses "0.0417,1,7,30,inf".
    static WindowSet parse(std::string_view text);
    /// {1/24, 1, 7, 30, +inf}.
    static WindowSet standard();

    std::span<const double> widths() const noexcept { return widths_; }
    std::size_t size() const noexcept { return widths_.size(); }
    double operator[](std::size_t i) const { return widths_[i]; }

    bool operator==(const WindowSet&) const = default;

private:
    std::vector<double> widths_;
};

struct PriorAttempt {
    double time = 0.0;
    bool correct = false;
};

struct WindowCounts {
    std::vector<std::uint32_t> attempts;
    std::vector<std::uint32_t> wins;

    bool operator==(const WindowCounts&) const = default;
};

/// Attempts and wins per window among `history`, counting an attempt in window
/// w when query_time - t < w. Every history entry is treated as prior.
WindowCounts window_counts(std::span<const PriorAttempt> history, double query_time, const WindowSet& windows);

enum class Family { irt, mirtb, afm, pfa, dash_items, dash_kc, das3h, das3h_1p, das3h_plaincounts };

std::string_view to_string(Family family);
/// Accepts the canonical names ("das3h_1p") and CLI spellings ("das3h-1p", "dash-items").
Family parse_family(std::string_view name);

struct ModelSpec {
    Family family = Family::das3h;
    std::uint32_t dim = 0;
    WindowSet windows;

    /// Throws ConfigError when the family and dimension disagree.
    void validate() const;
    /// e.g. "das3h_d0".
    std::string label() const;

    bool operator==(const ModelSpec&) const = default;
};

enum class BlockKind { users, items, skills, wins, attempts, fails };

std::string_view to_string(BlockKind kind);

struct FeatureBlock {
    BlockKind kind = BlockKind::users;
    std::size_t offset = 0;
    std::size_t size = 0;

    bool operator==(const FeatureBlock&) const = default;
};

struct Dimensions {
    std::size_t students = 0;
    std::size_t items = 0;
    std::size_t skills = 0;

    bool operator==(const Dimensions&) const = default;
};

/// Contiguous, disjoint feature blocks tiling [0, feature_count()).
class LayoutDescriptor {
public:
    LayoutDescriptor() = default;
    LayoutDescriptor(ModelSpec spec, Dimensions dims, std::vector<FeatureBlock> blocks);

    const ModelSpec& spec() const noexcept { return spec_; }
    const Dimensions& dims() const noexcept { return dims_; }
    std::span<const FeatureBlock> blocks() const noexcept { return blocks_; }
    std::size_t feature_count() const noexcept;

    bool has(BlockKind kind) const noexcept;
    /// Throws ConfigError when the layout has no such block.
    const FeatureBlock& block(BlockKind kind) const;
    /// Index of the block containing `feature`.
    std::size_t block_index_of(std::size_t feature) const;

    bool operator==(const LayoutDescriptor&) const = default;

private:
    ModelSpec spec_;
    Dimensions dims_;
    std::vector<FeatureBlock> blocks_;
};

LayoutDescriptor feature_layout(const ModelSpec& spec, const Dimensions& dims);

struct RowMeta {
    StudentIndex student = 0;
    ItemIndex item = 0;
    double time = 0.0;

    bool operator==(const RowMeta&) const = default;
};

/// Owning sparse row: strictly increasing indices, finite values.
struct SparseVector {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;
    bool label = false;
    RowMeta meta;

    bool operator==(const SparseVector&) const = default;
};

/// Non-owning view of one design-matrix row.
struct SparseRow {
    std::span<const std::uint32_t> indices;
    std::span<const double> values;

    SparseRow() = default;
    SparseRow(std::span<const std::uint32_t> i, std::span<const double> v) : indices(i), values(v) {}
    SparseRow(const SparseVector& v) : indices(v.indices), values(v.values) {}  // NOLINT(implicit)

    std::size_t size() const noexcept { return indices.size(); }
};

/// Compressed sparse rows plus labels, per-row metadata and the layout that produced them.
class DesignMatrix {
public:
    DesignMatrix() : row_offsets_{0} {}
    explicit DesignMatrix(LayoutDescriptor layout) : layout_(std::move(layout)), row_offsets_{0} {}

    void push_back(const SparseVector& row);

    std::size_t rows() const noexcept { return labels_.size(); }
    std::size_t cols() const noexcept { return layout_.feature_count(); }
    std::size_t nonzeros() const noexcept { return indices_.size(); }

    SparseRow row(std::size_t r) const;
    SparseVector row_copy(std::size_t r) const;
    bool label(std::size_t r) const { return labels_[r] != 0; }
    const RowMeta& meta(std::size_t r) const { return meta_[r]; }
    std::span<const std::uint8_t> labels() const noexcept { return labels_; }
    const LayoutDescriptor& layout() const noexcept { return layout_; }

    /// Rows at the given positions, in that order.
    DesignMatrix select(std::span<const std::size_t> rows) const;

private:
    LayoutDescriptor layout_;
    std::vector<std::size_t> row_offsets_;
    std::vector<std::uint32_t> indices_;
    std::vector<double> values_;
    std::vector<std::uint8_t> labels_;
    std::vector<RowMeta> meta_;
};

/// Prior attempts of one student, keyed by skill or item, answering window
/// queries in O(W log n).
class CounterState {
public:
    void record(std::uint32_t key, double time, bool correct);
    WindowCounts counts(std::uint32_t key, double query_time, const WindowSet& windows) const;
    /// All-history attempts and wins.
    std::pair<std::uint32_t, std::uint32_t> totals(std::uint32_t key) const;
    void clear() { streams_.clear(); }

private:
    struct Stream {
        std::vector<double> times;
        std::vector<std::uint32_t> wins_before;  // wins among times[0..i), size n+1
    };
    std::unordered_map<std::uint32_t, Stream> streams_;
};

/// Everything a row needs besides the counters.
struct RowRequest {
    std::optional<StudentIndex> student;
    /// (item, weight) pairs; usually one item with weight 1.
    std::vector<std::pair<ItemIndex, double>> items;
    /// Sorted unique skills whose indicators and counters enter the row.
    std::vector<SkillIndex> skills;
    /// Key for item-keyed counters (DASH_items).
    std::optional<ItemIndex> counter_item;
    double time = 0.0;
};

/// Builds the feature row for `request` from a student's prior `counters`.
SparseVector build_row(const LayoutDescriptor& layout, const CounterState& counters, const RowRequest& request);

/// Updates a student's counters after observing an interaction.
void record_interaction(const ModelSpec& spec, CounterState& counters, ItemIndex item,
                        std::span<const SkillIndex> skills, double time, bool correct);

/// One row per interaction in per-student chronological order; each row sees
/// only strictly earlier rows of the same student.
DesignMatrix encode_dataset(const Dataset& dataset, const ModelSpec& spec);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LayoutDescriptor& layout);
LayoutDescriptor layout_from_json(const nlohmann::json& j);

/// `label idx:value ...` lines plus `<path>.layout.json`.
void save_design_matrix(const DesignMatrix& matrix, const std::filesystem::path& path);
DesignMatrix load_design_matrix(const std::filesystem::path& path);

}  // namespace skilltrace
