#include "skilltrace/model.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "skilltrace/error.hpp"
#include "skilltrace/io.hpp"

namespace skilltrace {

namespace {

template <typename Index>
std::optional<Index> find_id(const std::vector<std::string>& ids, std::string_view id) {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) return std::nullopt;
    return static_cast<Index>(it - ids.begin());
}

nlohmann::json to_json(const FMParams& p) {
    return {{"dim", p.dim},
            {"global_bias", p.global_bias},
            {"linear", p.linear},
            {"embeddings", p.embeddings},
            {"linear_mean", p.linear_mean},
            {"linear_precision", p.linear_precision},
            {"embedding_mean", p.embedding_mean},
            {"embedding_precision", p.embedding_precision}};
}

FMParams fm_params_from_json(const nlohmann::json& j) {
    FMParams p;
    p.dim = j.at("dim").get<std::uint32_t>();
    p.global_bias = j.at("global_bias").get<double>();
    p.linear = j.at("linear").get<std::vector<double>>();
    p.embeddings = j.at("embeddings").get<std::vector<double>>();
    p.linear_mean = j.at("linear_mean").get<std::vector<double>>();
    p.linear_precision = j.at("linear_precision").get<std::vector<double>>();
    p.embedding_mean = j.at("embedding_mean").get<std::vector<double>>();
    p.embedding_precision = j.at("embedding_precision").get<std::vector<double>>();
    if (p.embeddings.size() != p.linear.size() * p.dim) throw ConfigError("FM embedding size mismatch");
    return p;
}

}  // namespace

Vocabulary Vocabulary::of(const Dataset& dataset) {
    return {dataset.students, dataset.items, dataset.skills, dataset.qmatrix};
}

std::optional<StudentIndex> Vocabulary::find_student(std::string_view id) const {
    return find_id<StudentIndex>(students, id);
}
std::optional<ItemIndex> Vocabulary::find_item(std::string_view id) const { return find_id<ItemIndex>(items, id); }
std::optional<SkillIndex> Vocabulary::find_skill(std::string_view id) const {
    return find_id<SkillIndex>(skills, id);
}

const LinearParams& FittedModel::linear() const {
    if (!logistic) throw ConfigError("model " + spec().label() + " is not a linear (dim 0) model");
    return logistic->params;
}

FittedModel train_model(const DesignMatrix& train, const TrainConfig& config, Vocabulary vocabulary,
                        const DesignMatrix* eval_rows, std::vector<double>* eval_predictions) {
    FittedModel model;
    model.layout = train.layout();
    model.vocabulary = std::move(vocabulary);
    model.feature_counts.assign(train.cols(), 0);
    for (std::size_t r = 0; r < train.rows(); ++r) {
        for (auto i : train.row(r).indices) ++model.feature_counts[i];
    }
    if (model.spec().dim == 0) {
        model.logistic = fit_logistic(train, train.labels(), config.logistic);
        if (eval_rows && eval_predictions) {
            eval_predictions->resize(eval_rows->rows());
            for (std::size_t r = 0; r < eval_rows->rows(); ++r) {
                (*eval_predictions)[r] = predict_proba(model.logistic->params, eval_rows->row(r));
            }
        }
    } else {
        auto fit = fit_fm_gibbs(train, train.labels(), model.spec().dim, config.gibbs, eval_rows);
        model.fm = std::move(fit.model);
        if (eval_predictions) *eval_predictions = std::move(fit.eval_predictions);
    }
    return model;
}

double predict(const FittedModel& model, SparseRow row, PredictMode mode) {
    if (model.logistic) return predict_proba(model.logistic->params, row);
    if (model.fm) return fm_predict(*model.fm, row, mode);
    throw ConfigError("model has no fitted parameters");
}

nlohmann::json to_json(const Vocabulary& v) {
    nlohmann::json rows = nlohmann::json::array();
    for (ItemIndex j = 0; j < v.qmatrix.item_count(); ++j) {
        const auto skills = v.qmatrix.skills_of(j);
        rows.push_back(std::vector<SkillIndex>(skills.begin(), skills.end()));
    }
    return {{"students", v.students}, {"items", v.items}, {"skills", v.skills}, {"qmatrix", rows}};
}

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
    Vocabulary v;
    v.students = j.at("students").get<std::vector<std::string>>();
    v.items = j.at("items").get<std::vector<std::string>>();
    v.skills = j.at("skills").get<std::vector<std::string>>();
    const auto& rows = j.at("qmatrix");
    v.qmatrix.resize(v.items.size(), v.skills.size());
    if (rows.size() != v.items.size()) throw ConfigError("q-matrix rows do not match the item list");
    for (ItemIndex item = 0; item < rows.size(); ++item) {
        for (const auto& k : rows[item]) v.qmatrix.add(item, k.get<SkillIndex>());
    }
    return v;
}

nlohmann::json to_json(const FittedModel& model) {
    nlohmann::json j;
    j["format"] = "skilltrace-model/1";
    j["layout"] = to_json(model.layout);
    j["vocabulary"] = to_json(model.vocabulary);
    j["feature_counts"] = model.feature_counts;
    if (model.logistic) {
        const auto& fit = *model.logistic;
        j["linear"] = {{"weights", fit.params.weights},
                       {"intercept", fit.params.intercept},
                       {"l2_strength", fit.params.l2_strength},
                       {"converged", fit.converged},
                       {"iterations", fit.iterations},
                       {"gradient_norm", fit.gradient_norm},
                       {"final_loss", fit.loss_trace.empty() ? 0.0 : fit.loss_trace.back()}};
    }
    if (model.fm) {
        nlohmann::json samples = nlohmann::json::array();
        for (const auto& s : model.fm->samples) samples.push_back(to_json(s));
        j["fm"] = {{"mean", to_json(model.fm->mean)},
                   {"last", to_json(model.fm->last)},
                   {"samples", samples},
                   {"averaged_samples", model.fm->averaged_samples}};
    }
    return j;
}

FittedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "skilltrace-model/1") throw ConfigError("not a skilltrace model file");
    FittedModel model;
    model.layout = layout_from_json(j.at("layout"));
    model.vocabulary = vocabulary_from_json(j.at("vocabulary"));
    model.feature_counts = j.at("feature_counts").get<std::vector<std::uint32_t>>();
    if (j.contains("linear")) {
        const auto& l = j.at("linear");
        LogisticFit fit;
        fit.params.weights = l.at("weights").get<std::vector<double>>();
        fit.params.intercept = l.at("intercept").get<double>();
        fit.params.l2_strength = l.at("l2_strength").get<double>();
        fit.converged = l.at("converged").get<bool>();
        fit.iterations = l.at("iterations").get<std::size_t>();
        fit.gradient_norm = l.at("gradient_norm").get<double>();
        fit.loss_trace = {l.at("final_loss").get<double>()};
        if (fit.params.weights.size() != model.layout.feature_count()) {
            throw ConfigError("weight vector does not match the layout");
        }
        model.logistic = std::move(fit);
    }
    if (j.contains("fm")) {
        const auto& f = j.at("fm");
        FMModel fm;
        fm.mean = fm_params_from_json(f.at("mean"));
        fm.last = fm_params_from_json(f.at("last"));
        for (const auto& s : f.at("samples")) fm.samples.push_back(fm_params_from_json(s));
        fm.averaged_samples = f.at("averaged_samples").get<std::size_t>();
        model.fm = std::move(fm);
    }
    if (!model.logistic && !model.fm) throw ConfigError("model file has no parameters");
    return model;
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, to_json(model).dump() + "\n");
}

FittedModel load_model(const std::filesystem::path& path) {
    try {
        return model_from_json(nlohmann::json::parse(io::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot read model " + path.string() + ": " + e.what());
    }
}

}  // namespace skilltrace
