#include "skilltrace/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "skilltrace/error.hpp"
#include "skilltrace/io.hpp"

namespace skilltrace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool uses_skill_counters(Family f) {
    switch (f) {
        case Family::afm:
        case Family::pfa:
        case Family::dash_kc:
        case Family::das3h:
        case Family::das3h_1p:
        case Family::das3h_plaincounts: return true;
        default: return false;
    }
}

nlohmann::json width_to_json(double w) {
    if (std::isinf(w)) return "inf";
    return w;
}

double width_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        auto v = io::parse_double(j.get<std::string>());
        if (!v) throw ConfigError("bad window width " + j.dump());
        return *v;
    }
    return j.get<double>();
}

}  // namespace

// ---------------------------------------------------------------- windows

WindowSet::WindowSet() : WindowSet(standard()) {}

WindowSet::WindowSet(std::vector<double> widths) : widths_(std::move(widths)) {
    if (widths_.empty()) throw ConfigError("window set is empty");
    for (std::size_t i = 0; i < widths_.size(); ++i) {
        if (std::isnan(widths_[i]) || widths_[i] <= 0.0) {
            throw ConfigError(fmt::format("window width {} must be positive", widths_[i]));
        }
        if (i > 0 && !(widths_[i] > widths_[i - 1])) {
            throw ConfigError("window widths must be strictly increasing");
        }
    }
    if (!std::isinf(widths_.back())) throw ConfigError("the last window width must be +inf");
}

WindowSet WindowSet::standard() { return WindowSet(std::vector<double>{1.0 / 24.0, 1.0, 7.0, 30.0, kInf}); }

WindowSet WindowSet::parse(std::string_view text) {
    std::vector<double> widths;
    for (const auto& token : io::split_record(text, ',')) {
        auto v = io::parse_double(token);
        if (!v) throw ConfigError("bad window width '" + token + "'");
        widths.push_back(*v);
    }
    return WindowSet(std::move(widths));
}

WindowCounts window_counts(std::span<const PriorAttempt> history, double query_time, const WindowSet& windows) {
    std::vector<PriorAttempt> sorted(history.begin(), history.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const PriorAttempt& a, const PriorAttempt& b) { return a.time < b.time; });
    CounterState state;
    for (const auto& h : sorted) state.record(0, h.time, h.correct);
    return state.counts(0, query_time, windows);
}

// ---------------------------------------------------------------- specs

std::string_view to_string(Family family) {
    switch (family) {
        case Family::irt: return "irt";
        case Family::mirtb: return "mirtb";
        case Family::afm: return "afm";
        case Family::pfa: return "pfa";
        case Family::dash_items: return "dash_items";
        case Family::dash_kc: return "dash_kc";
        case Family::das3h: return "das3h";
        case Family::das3h_1p: return "das3h_1p";
        case Family::das3h_plaincounts: return "das3h_plaincounts";
    }
    return "?";
}

Family parse_family(std::string_view name) {
    std::string canonical(name);
    std::transform(canonical.begin(), canonical.end(), canonical.begin(), [](unsigned char c) {
        return c == '-' ? '_' : static_cast<char>(std::tolower(c));
    });
    if (canonical == "dash") canonical = "dash_items";
    for (Family f : {Family::irt, Family::mirtb, Family::afm, Family::pfa, Family::dash_items, Family::dash_kc,
                     Family::das3h, Family::das3h_1p, Family::das3h_plaincounts}) {
        if (canonical == to_string(f)) return f;
    }
    throw ConfigError("unknown model family '" + std::string(name) + "'");
}

void ModelSpec::validate() const {
    if (family == Family::irt && dim != 0) throw ConfigError("IRT requires dim = 0 (use MIRTb for dim > 0)");
    if (family == Family::mirtb && dim == 0) throw ConfigError("MIRTb requires dim > 0 (use IRT for dim = 0)");
}

std::string ModelSpec::label() const { return fmt::format("{}_d{}", to_string(family), dim); }

std::string_view to_string(BlockKind kind) {
    switch (kind) {
        case BlockKind::users: return "users";
        case BlockKind::items: return "items";
        case BlockKind::skills: return "skills";
        case BlockKind::wins: return "wins";
        case BlockKind::attempts: return "attempts";
        case BlockKind::fails: return "fails";
    }
    return "?";
}

// ---------------------------------------------------------------- layout

LayoutDescriptor::LayoutDescriptor(ModelSpec spec, Dimensions dims, std::vector<FeatureBlock> blocks)
    : spec_(std::move(spec)), dims_(dims), blocks_(std::move(blocks)) {
    std::size_t expected = 0;
    for (const auto& b : blocks_) {
        if (b.offset != expected) throw ConfigError("feature blocks must be contiguous");
        expected += b.size;
    }
}

std::size_t LayoutDescriptor::feature_count() const noexcept {
    return blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size;
}

bool LayoutDescriptor::has(BlockKind kind) const noexcept {
    return std::any_of(blocks_.begin(), blocks_.end(), [kind](const FeatureBlock& b) { return b.kind == kind; });
}

const FeatureBlock& LayoutDescriptor::block(BlockKind kind) const {
    for (const auto& b : blocks_) {
        if (b.kind == kind) return b;
    }
    throw ConfigError(fmt::format("layout for {} has no {} block", spec_.label(), to_string(kind)));
}

std::size_t LayoutDescriptor::block_index_of(std::size_t feature) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (feature < blocks_[i].offset + blocks_[i].size) return i;
    }
    throw DimensionError(fmt::format("feature {} outside layout of size {}", feature, feature_count()));
}

LayoutDescriptor feature_layout(const ModelSpec& spec, const Dimensions& dims) {
    spec.validate();
    if (dims.students == 0 || dims.items == 0 || dims.skills == 0) {
        throw ConfigError(fmt::format("dimensions must be positive (S={}, J={}, K={})", dims.students, dims.items,
                                      dims.skills));
    }
    const std::size_t S = dims.students, J = dims.items, K = dims.skills, W = spec.windows.size();
    std::vector<std::pair<BlockKind, std::size_t>> sizes;
    switch (spec.family) {
        case Family::irt:
        case Family::mirtb: sizes = {{BlockKind::users, S}, {BlockKind::items, J}}; break;
        case Family::afm: sizes = {{BlockKind::skills, K}, {BlockKind::attempts, K}}; break;
        case Family::pfa: sizes = {{BlockKind::skills, K}, {BlockKind::wins, K}, {BlockKind::fails, K}}; break;
        case Family::dash_items:
        case Family::dash_kc:
            sizes = {{BlockKind::users, S}, {BlockKind::items, J}, {BlockKind::wins, W}, {BlockKind::attempts, W}};
            break;
        case Family::das3h:
            sizes = {{BlockKind::users, S},
                     {BlockKind::items, J},
                     {BlockKind::skills, K},
                     {BlockKind::wins, W * K},
                     {BlockKind::attempts, W * K}};
            break;
        case Family::das3h_1p:
            sizes = {{BlockKind::users, S},
                     {BlockKind::items, J},
                     {BlockKind::skills, K},
                     {BlockKind::wins, W},
                     {BlockKind::attempts, W}};
            break;
        case Family::das3h_plaincounts:
            sizes = {{BlockKind::users, S},
                     {BlockKind::items, J},
                     {BlockKind::skills, K},
                     {BlockKind::wins, K},
                     {BlockKind::fails, K}};
            break;
    }
    std::vector<FeatureBlock> blocks;
    std::size_t offset = 0;
    for (auto [kind, size] : sizes) {
        blocks.push_back({kind, offset, size});
        offset += size;
    }
    return LayoutDescriptor(spec, dims, std::move(blocks));
}

// ---------------------------------------------------------------- design matrix

void DesignMatrix::push_back(const SparseVector& row) {
    if (row.indices.size() != row.values.size()) throw DimensionError("sparse row index/value size mismatch");
    const std::size_t n = cols();
    for (std::size_t i = 0; i < row.indices.size(); ++i) {
        if (row.indices[i] >= n) {
            throw DimensionError(fmt::format("feature index {} out of range (N={})", row.indices[i], n));
        }
        if (i > 0 && row.indices[i] <= row.indices[i - 1]) {
            throw DimensionError("sparse row indices must be strictly increasing");
        }
    }
    indices_.insert(indices_.end(), row.indices.begin(), row.indices.end());
    values_.insert(values_.end(), row.values.begin(), row.values.end());
    row_offsets_.push_back(indices_.size());
    labels_.push_back(row.label ? 1 : 0);
    meta_.push_back(row.meta);
}

SparseRow DesignMatrix::row(std::size_t r) const {
    const std::size_t begin = row_offsets_.at(r), end = row_offsets_.at(r + 1);
    return {std::span<const std::uint32_t>(indices_).subspan(begin, end - begin),
            std::span<const double>(values_).subspan(begin, end - begin)};
}

SparseVector DesignMatrix::row_copy(std::size_t r) const {
    const auto view = row(r);
    SparseVector v;
    v.indices.assign(view.indices.begin(), view.indices.end());
    v.values.assign(view.values.begin(), view.values.end());
    v.label = label(r);
    v.meta = meta_[r];
    return v;
}

DesignMatrix DesignMatrix::select(std::span<const std::size_t> rows) const {
    DesignMatrix out(layout_);
    for (std::size_t r : rows) {
        const auto view = row(r);
        out.indices_.insert(out.indices_.end(), view.indices.begin(), view.indices.end());
        out.values_.insert(out.values_.end(), view.values.begin(), view.values.end());
        out.row_offsets_.push_back(out.indices_.size());
        out.labels_.push_back(labels_[r]);
        out.meta_.push_back(meta_[r]);
    }
    return out;
}

// ---------------------------------------------------------------- counters

void CounterState::record(std::uint32_t key, double time, bool correct) {
    auto& stream = streams_[key];
    if (!stream.times.empty() && time < stream.times.back()) {
        throw EncodingError("counter updates must be chronological");
    }
    if (stream.wins_before.empty()) stream.wins_before.push_back(0);
    stream.times.push_back(time);
    stream.wins_before.push_back(stream.wins_before.back() + (correct ? 1 : 0));
}

WindowCounts CounterState::counts(std::uint32_t key, double query_time, const WindowSet& windows) const {
    WindowCounts out{std::vector<std::uint32_t>(windows.size(), 0), std::vector<std::uint32_t>(windows.size(), 0)};
    auto it = streams_.find(key);
    if (it == streams_.end()) return out;
    const auto& times = it->second.times;
    const auto& wins = it->second.wins_before;
    const auto n = static_cast<std::uint32_t>(times.size());
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const double width = windows[w];
        // times ascending => query_time - t is nonincreasing, so "outside" is a prefix.
        auto first_inside = std::partition_point(times.begin(), times.end(),
                                                 [&](double t) { return !(query_time - t < width); });
        const auto i = static_cast<std::uint32_t>(first_inside - times.begin());
        out.attempts[w] = n - i;
        out.wins[w] = wins[n] - wins[i];
    }
    return out;
}

std::pair<std::uint32_t, std::uint32_t> CounterState::totals(std::uint32_t key) const {
    auto it = streams_.find(key);
    if (it == streams_.end()) return {0, 0};
    return {static_cast<std::uint32_t>(it->second.times.size()), it->second.wins_before.back()};
}

// ---------------------------------------------------------------- rows

namespace {

void emit(SparseVector& row, std::size_t index, double value) {
    if (value == 0.0) return;
    row.indices.push_back(static_cast<std::uint32_t>(index));
    row.values.push_back(value);
}

}  // namespace

SparseVector build_row(const LayoutDescriptor& layout, const CounterState& counters, const RowRequest& request) {
    const ModelSpec& spec = layout.spec();
    const WindowSet& windows = spec.windows;
    const std::size_t W = windows.size();
    SparseVector row;
    row.meta.time = request.time;
    if (request.student) row.meta.student = *request.student;
    if (!request.items.empty()) row.meta.item = request.items.front().first;

    for (SkillIndex k : request.skills) {
        if (k >= layout.dims().skills) throw EncodingError(fmt::format("skill index {} out of range", k));
    }

    if (layout.has(BlockKind::users) && request.student) {
        if (*request.student >= layout.dims().students) {
            throw EncodingError(fmt::format("student index {} out of range", *request.student));
        }
        emit(row, layout.block(BlockKind::users).offset + *request.student, 1.0);
    }
    if (layout.has(BlockKind::items)) {
        auto items = request.items;
        std::sort(items.begin(), items.end());
        const auto offset = layout.block(BlockKind::items).offset;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (items[i].first >= layout.dims().items) {
                throw EncodingError(fmt::format("item index {} out of range", items[i].first));
            }
            double weight = items[i].second;
            while (i + 1 < items.size() && items[i + 1].first == items[i].first) weight += items[++i].second;
            emit(row, offset + items[i].first, weight);
        }
    }
    if (layout.has(BlockKind::skills)) {
        const auto offset = layout.block(BlockKind::skills).offset;
        for (SkillIndex k : request.skills) emit(row, offset + k, 1.0);
    }

    switch (spec.family) {
        case Family::irt:
        case Family::mirtb: break;
        case Family::afm: {
            const auto offset = layout.block(BlockKind::attempts).offset;
            for (SkillIndex k : request.skills) emit(row, offset + k, counters.totals(k).first);
            break;
        }
        case Family::pfa:
        case Family::das3h_plaincounts: {
            const auto wins = layout.block(BlockKind::wins).offset;
            const auto fails = layout.block(BlockKind::fails).offset;
            for (SkillIndex k : request.skills) emit(row, wins + k, counters.totals(k).second);
            for (SkillIndex k : request.skills) {
                auto [a, c] = counters.totals(k);
                emit(row, fails + k, a - c);
            }
            break;
        }
        case Family::das3h: {
            const auto wins = layout.block(BlockKind::wins).offset;
            const auto attempts = layout.block(BlockKind::attempts).offset;
            std::vector<WindowCounts> per_skill;
            per_skill.reserve(request.skills.size());
            for (SkillIndex k : request.skills) per_skill.push_back(counters.counts(k, request.time, windows));
            for (std::size_t s = 0; s < request.skills.size(); ++s) {
                for (std::size_t w = 0; w < W; ++w) {
                    emit(row, wins + request.skills[s] * W + w, std::log1p(per_skill[s].wins[w]));
                }
            }
            for (std::size_t s = 0; s < request.skills.size(); ++s) {
                for (std::size_t w = 0; w < W; ++w) {
                    emit(row, attempts + request.skills[s] * W + w, std::log1p(per_skill[s].attempts[w]));
                }
            }
            break;
        }
        case Family::dash_kc:
        case Family::das3h_1p:
        case Family::dash_items: {
            std::vector<double> wins(W, 0.0), attempts(W, 0.0);
            auto accumulate = [&](const WindowCounts& c) {
                for (std::size_t w = 0; w < W; ++w) {
                    wins[w] += std::log1p(c.wins[w]);
                    attempts[w] += std::log1p(c.attempts[w]);
                }
            };
            if (spec.family == Family::dash_items) {
                if (!request.counter_item) throw EncodingError("item-keyed counters need an item");
                accumulate(counters.counts(*request.counter_item, request.time, windows));
            } else {
                for (SkillIndex k : request.skills) accumulate(counters.counts(k, request.time, windows));
            }
            const auto wins_offset = layout.block(BlockKind::wins).offset;
            const auto attempts_offset = layout.block(BlockKind::attempts).offset;
            for (std::size_t w = 0; w < W; ++w) emit(row, wins_offset + w, wins[w]);
            for (std::size_t w = 0; w < W; ++w) emit(row, attempts_offset + w, attempts[w]);
            break;
        }
    }
    return row;
}

void record_interaction(const ModelSpec& spec, CounterState& counters, ItemIndex item,
                        std::span<const SkillIndex> skills, double time, bool correct) {
    if (spec.family == Family::dash_items) {
        counters.record(item, time, correct);
    } else if (uses_skill_counters(spec.family)) {
        for (SkillIndex k : skills) counters.record(k, time, correct);
    }
}

DesignMatrix encode_dataset(const Dataset& dataset, const ModelSpec& spec) {
    if (!dataset.preprocessed) throw ConfigError("encode_dataset requires a preprocessed dataset");
    const Dimensions dims{dataset.students.size(), dataset.items.size(), dataset.skills.size()};
    DesignMatrix matrix(feature_layout(spec, dims));
    const auto offsets = dataset.student_offsets();
    CounterState counters;
    RowRequest request;
    request.items.resize(1);
    for (StudentIndex s = 0; s < dataset.students.size(); ++s) {
        counters.clear();
        for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
            const Interaction& x = dataset.interactions[r];
            const auto skills = dataset.qmatrix.skills_of(x.item);
            if (skills.empty()) {
                throw EncodingError("item '" + dataset.items[x.item] + "' has no q-matrix entry");
            }
            request.student = s;
            request.items[0] = {x.item, 1.0};
            request.skills.assign(skills.begin(), skills.end());
            request.counter_item = x.item;
            request.time = x.time;
            SparseVector row = build_row(matrix.layout(), counters, request);
            row.label = x.correct;
            row.meta = {s, x.item, x.time};
            matrix.push_back(row);
            record_interaction(spec, counters, x.item, skills, x.time, x.correct);
        }
    }
    return matrix;
}

// ---------------------------------------------------------------- serialization

nlohmann::json to_json(const ModelSpec& spec) {
    nlohmann::json widths = nlohmann::json::array();
    for (double w : spec.windows.widths()) widths.push_back(width_to_json(w));
    return {{"family", std::string(to_string(spec.family))}, {"dim", spec.dim}, {"windows", widths}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec spec;
    spec.family = parse_family(j.at("family").get<std::string>());
    spec.dim = j.at("dim").get<std::uint32_t>();
    std::vector<double> widths;
    for (const auto& w : j.at("windows")) widths.push_back(width_from_json(w));
    spec.windows = WindowSet(std::move(widths));
    spec.validate();
    return spec;
}

nlohmann::json to_json(const LayoutDescriptor& layout) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : layout.blocks()) {
        blocks.push_back({{"kind", std::string(to_string(b.kind))}, {"offset", b.offset}, {"size", b.size}});
    }
    return {{"spec", to_json(layout.spec())},
            {"dims",
             {{"students", layout.dims().students},
              {"items", layout.dims().items},
              {"skills", layout.dims().skills}}},
            {"feature_count", layout.feature_count()},
            {"blocks", blocks}};
}

LayoutDescriptor layout_from_json(const nlohmann::json& j) {
    const ModelSpec spec = model_spec_from_json(j.at("spec"));
    const auto& d = j.at("dims");
    const Dimensions dims{d.at("students").get<std::size_t>(), d.at("items").get<std::size_t>(),
                          d.at("skills").get<std::size_t>()};
    LayoutDescriptor layout = feature_layout(spec, dims);
    if (j.contains("feature_count") && j.at("feature_count").get<std::size_t>() != layout.feature_count()) {
        throw ConfigError("layout feature_count does not match its spec and dimensions");
    }
    return layout;
}

void save_design_matrix(const DesignMatrix& matrix, const std::filesystem::path& path) {
    std::string text;
    text.reserve(matrix.nonzeros() * 16 + matrix.rows() * 24);
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const auto row = matrix.row(r);
        text += matrix.label(r) ? '1' : '0';
        for (std::size_t i = 0; i < row.size(); ++i) {
            text += fmt::format(" {}:{}", row.indices[i], io::format_double(row.values[i]));
        }
        const auto& meta = matrix.meta(r);
        text += fmt::format(" # {} {} {}\n", meta.student, meta.item, io::format_double(meta.time));
    }
    io::write_file_atomic(path, text);
    auto sidecar = path;
    sidecar += ".layout.json";
    io::write_file_atomic(sidecar, to_json(matrix.layout()).dump(2) + "\n");
}

DesignMatrix load_design_matrix(const std::filesystem::path& path) {
    auto sidecar = path;
    sidecar += ".layout.json";
    DesignMatrix matrix(layout_from_json(nlohmann::json::parse(io::read_file(sidecar))));

    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    SparseVector row;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        std::string_view body = line;
        std::string_view comment;
        if (auto hash = body.find('#'); hash != std::string_view::npos) {
            comment = body.substr(hash + 1);
            body = body.substr(0, hash);
        }
        row = {};
        std::size_t pos = 0;
        bool first = true;
        while (pos < body.size()) {
            while (pos < body.size() && body[pos] == ' ') ++pos;
            if (pos >= body.size()) break;
            auto end = body.find(' ', pos);
            if (end == std::string_view::npos) end = body.size();
            const auto token = body.substr(pos, end - pos);
            pos = end;
            if (first) {
                auto label = io::parse_double(token);
                if (!label || (*label != 0.0 && *label != 1.0)) {
                    throw ParseError(path.string(), line_no, "label must be 0 or 1");
                }
                row.label = *label == 1.0;
                first = false;
                continue;
            }
            const auto colon = token.find(':');
            auto index = colon == std::string_view::npos ? std::nullopt : io::parse_double(token.substr(0, colon));
            auto value = colon == std::string_view::npos ? std::nullopt : io::parse_double(token.substr(colon + 1));
            if (!index || !value || *index < 0 || *index != std::floor(*index)) {
                throw ParseError(path.string(), line_no, "bad feature '" + std::string(token) + "'");
            }
            row.indices.push_back(static_cast<std::uint32_t>(*index));
            row.values.push_back(*value);
        }
        if (!comment.empty()) {
            auto fields = io::split_record(io::trim(comment), ' ');
            if (fields.size() == 3) {
                auto s = io::parse_double(fields[0]), j = io::parse_double(fields[1]), t = io::parse_double(fields[2]);
                if (s && j && t) row.meta = {static_cast<StudentIndex>(*s), static_cast<ItemIndex>(*j), *t};
            }
        }
        try {
            matrix.push_back(row);
        } catch (const DimensionError& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    }
    return matrix;
}

}  // namespace skilltrace
