// skilltrace: command-line entry point for every module.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "skilltrace/analysis.hpp"
#include "skilltrace/corpus.hpp"
#include "skilltrace/encoder.hpp"
#include "skilltrace/error.hpp"
#include "skilltrace/eval.hpp"
#include "skilltrace/io.hpp"
#include "skilltrace/model.hpp"
#include "skilltrace/scheduler.hpp"
#include "skilltrace/synthetic.hpp"

#ifndef SKILLTRACE_VERSION
#define SKILLTRACE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace skilltrace;
using json = nlohmann::json;

namespace {

struct Globals {
    std::uint64_t seed = 42;
    std::size_t threads = 1;
    std::string out;
    std::string log_level = "info";
};

// Records inputs and options, then writes the manifest next to the outputs.
class Manifest {
public:
    Manifest(std::string command, const CLI::App& sub, const Globals& g)
        : command_(std::move(command)), seed_(g.seed), start_(std::chrono::steady_clock::now()) {
        for (const CLI::Option* opt : sub.get_options()) {
            if (opt->get_name() == "--help" || opt->count() == 0) continue;
            flags_[opt->get_name()] = opt->as<std::vector<std::string>>();
        }
        flags_["--seed"] = {std::to_string(g.seed)};
        flags_["--threads"] = {std::to_string(g.threads)};
        if (!g.out.empty()) flags_["--out"] = {g.out};
    }

    void input(const fs::path& path) {
        if (fs::is_regular_file(path)) inputs_[path.string()] = io::sha256_file(path);
    }
    void output(const fs::path& path) { outputs_.push_back(path.string()); }

    /// Directory outputs get `<dir>/manifest.json`; file outputs `<file>.manifest.json`.
    void write(const fs::path& target, bool is_directory) const {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json j = {{"command", command_},
                  {"flags", flags_},
                  {"input_hashes", inputs_},
                  {"seed", seed_},
                  {"tool_version", SKILLTRACE_VERSION},
                  {"wall_time_seconds", wall},
                  {"outputs", outputs_}};
        const fs::path path = is_directory ? target / "manifest.json" : fs::path(target.string() + ".manifest.json");
        io::write_file_atomic(path, j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::uint64_t seed_;
    std::chrono::steady_clock::time_point start_;
    std::map<std::string, std::vector<std::string>> flags_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = std::string(io::trim(token));
        if (!token.empty()) out.push_back(token);
    }
    return out;
}

fs::path require_out(const Globals& g, std::string_view command) {
    if (g.out.empty()) throw ConfigError(fmt::format("{} needs --out", command));
    return g.out;
}

void write_text(Manifest& m, const fs::path& path, const std::string& text) {
    io::write_file_atomic(path, text);
    m.output(path);
}

// IRT and MIRTb are the dim-0 and dim>0 forms of the same feature set.
ModelSpec spec_for(Family family, std::uint32_t dim, const WindowSet& windows) {
    if (family == Family::irt && dim > 0) family = Family::mirtb;
    if (family == Family::mirtb && dim == 0) family = Family::irt;
    ModelSpec spec{family, dim, windows};
    spec.validate();
    return spec;
}

TrainConfig train_config(double l2, std::size_t iters, std::optional<std::size_t> burn_in, std::uint64_t seed) {
    TrainConfig c;
    c.logistic.l2_strength = l2;
    c.logistic.seed = seed;
    c.gibbs.iterations = iters;
    c.gibbs.burn_in = burn_in;
    c.gibbs.seed = seed;
    return c;
}

std::vector<FittedModel> load_fold_models(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const fs::path& base : {dir, dir / "models"}) {
        if (!fs::is_directory(base)) continue;
        for (const auto& entry : fs::directory_iterator(base)) {
            const auto name = entry.path().filename().string();
            if (name.starts_with("das3h_d0_fold") && name.ends_with(".json")) files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no das3h_d0_fold*.json models under " + dir.string());
    std::vector<FittedModel> models;
    for (const auto& f : files) models.push_back(load_model(f));
    return models;
}

// History file for recall queries: item,time,correct with time in days.
std::vector<HistoryEvent> load_history(const fs::path& path, const Vocabulary& vocab) {
    std::istringstream in(io::read_file(path));
    std::string line;
    std::vector<HistoryEvent> history;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        auto fields = io::split_record(line, ',');
        if (header.empty()) {
            header = fields;
            continue;
        }
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size() && i < fields.size(); ++i) row[std::string(io::trim(header[i]))] = fields[i];
        if (!row.contains("item") || !row.contains("time") || !row.contains("correct")) {
            throw ParseError(path.string(), line_no, "history rows need item, time and correct columns");
        }
        const auto item = vocab.find_item(io::trim(row["item"]));
        if (!item) throw ParseError(path.string(), line_no, "unknown item '" + row["item"] + "'");
        const auto time = io::parse_double(io::trim(row["time"]));
        const auto correct = io::parse_double(io::trim(row["correct"]));
        if (!time || !correct) throw ParseError(path.string(), line_no, "time and correct must be numbers");
        history.push_back({*item, *time, *correct != 0.0});
    }
    return history;
}

std::string raw_log_csv(const Dataset& raw) {
    std::string out = "user,item,timestamp,correct,skills\n";
    for (const auto& x : raw.interactions) {
        const auto skills = raw.qmatrix.skills_of(x.item);
        std::string joined;
        for (std::size_t i = 0; i < skills.size(); ++i) joined += (i ? "~" : "") + raw.skills[skills[i]];
        out += fmt::format("{},{},{},{},{}\n", raw.students[x.student], raw.items[x.item],
                           std::llround(x.time * 86400.0), x.correct ? 1 : 0, joined);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"skilltrace: learning-and-forgetting student models"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file or directory");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Load, filter and normalize a raw log");
    std::string in, format = "generic", qmatrix_path;
    std::size_t min_interactions = 10;
    prepare->add_option("--in", in, "Raw log")->required();
    prepare->add_option("--format", format, "assist12, kddcup or generic[:s|ms|days]");
    prepare->add_option("--qmatrix", qmatrix_path, "Optional item,skill file");
    prepare->add_option("--min-interactions", min_interactions, "Drop users with fewer rows");

    // stats
    auto* stats = app.add_subcommand("stats", "Summary statistics of a dataset");
    std::string stats_format;
    std::size_t stats_min = 0;
    stats->add_option("--in", in, "Prepared dataset, or a raw log with --format")->required();
    stats->add_option("--format", stats_format, "Read a raw log in this format");
    stats->add_option("--min-interactions", stats_min, "User filter for raw logs");

    // encode
    auto* encode = app.add_subcommand("encode", "Build a sparse design matrix");
    std::string model_name = "das3h", windows_text = "0.0417,1,7,30,inf";
    std::uint32_t dim = 0;
    encode->add_option("--in", in, "Prepared dataset")->required();
    encode->add_option("--model", model_name, "Model family");
    encode->add_option("--dim", dim, "Latent dimension");
    encode->add_option("--windows", windows_text, "Window widths in days");

    // train
    auto* train = app.add_subcommand("train", "Fit one model on an encoded matrix");
    std::string encoded;
    double l2 = 1.0;
    std::size_t iters = 300;
    std::optional<std::size_t> burn_in;
    std::optional<std::uint32_t> train_dim;
    train->add_option("--encoded", encoded, "Encoded matrix")->required();
    train->add_option("--l2", l2, "L2 strength for dim 0");
    train->add_option("--dim", train_dim, "Override the latent dimension");
    train->add_option("--iters", iters, "Gibbs iterations for dim > 0");
    train->add_option("--burn-in", burn_in, "Discarded Gibbs iterations (default half)");

    // cv
    auto* cv = app.add_subcommand("cv", "Student-level cross-validation");
    std::string models_text = "irt,pfa,dash-items,das3h", dims_text = "0";
    std::uint32_t folds = 5;
    bool no_save_models = false;
    cv->add_option("--in", in, "Prepared dataset")->required();
    cv->add_option("--models", models_text, "Comma-separated families");
    cv->add_option("--dims", dims_text, "Comma-separated latent dimensions");
    cv->add_option("--folds", folds, "Number of folds");
    cv->add_option("--windows", windows_text, "Window widths in days");
    cv->add_option("--l2", l2, "L2 strength for dim 0");
    cv->add_option("--iters", iters, "Gibbs iterations for dim > 0");
    cv->add_flag("--no-save-models", no_save_models, "Skip writing per-fold models");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Paired ablations at dim 0");
    std::string dataset_name;
    ablate->add_option("--in", in, "Prepared dataset")->required();
    ablate->add_option("--folds", folds, "Number of folds");
    ablate->add_option("--windows", windows_text, "Window widths in days");
    ablate->add_option("--l2", l2, "L2 strength");
    ablate->add_option("--name", dataset_name, "Dataset label in CSV output");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Interpret fitted models");
    analyze->require_subcommand(1);
    auto* slopes = analyze->add_subcommand("slopes", "Per-skill forgetting slopes from fold models");
    std::string model_dir;
    bool all_pairs = false;
    slopes->add_option("--model-dir", model_dir, "Directory holding das3h_d0_fold*.json")->required();
    slopes->add_flag("--all-pairs", all_pairs, "Average over all window pairs");
    auto* recall = analyze->add_subcommand("recall", "Recall probability of a skill set");
    std::string model_path, history_path, skills_text, item_id, student_id;
    double at_day = 0.0;
    recall->add_option("--model", model_path, "Model file")->required();
    recall->add_option("--history", history_path, "CSV with item,time,correct (days)");
    recall->add_option("--skills", skills_text, "Comma-separated skill ids")->required();
    recall->add_option("--at-day", at_day, "Query time in days")->required();
    recall->add_option("--item", item_id, "Item id (default: skill item pool)");
    recall->add_option("--student", student_id, "Student id for the user bias");

    // schedule-sim
    auto* sim = app.add_subcommand("schedule-sim", "Compare scheduling policies on a generator");
    std::string policy_text = "threshold,random";
    double threshold = 0.5, horizon = 30.0, ability = 0.5;
    std::size_t seeds = 100, per_session = 5, sim_students = 1;
    sim->add_option("--model", model_path, "Linear DAS3H generator (default: built-in synthetic)");
    sim->add_option("--policy", policy_text, "threshold, random or both comma-separated");
    sim->add_option("--threshold", threshold, "Target recall");
    sim->add_option("--horizon", horizon, "Days simulated");
    sim->add_option("--seeds", seeds, "Paired seeds");
    sim->add_option("--items-per-session", per_session, "Answers per daily session");
    sim->add_option("--students", sim_students, "Simulated students per seed");
    sim->add_option("--ability-stdev", ability, "Hidden ability spread");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic log and its generating model");
    SyntheticConfig sc;
    bool no_forgetting = false;
    synth->add_option("--students", sc.students, "Students");
    synth->add_option("--skills", sc.skills, "Skills");
    synth->add_option("--items", sc.items, "Items");
    synth->add_option("--per-student", sc.interactions_per_student, "Interactions per student");
    synth->add_option("--multi-skill", sc.multi_skill_fraction, "Share of two-skill items");
    synth->add_flag("--no-forgetting", no_forgetting, "Practice counts only in the all-time window");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    auto logger = spdlog::stderr_color_mt("skilltrace");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (*prepare) {
            const fs::path out = require_out(g, "prepare");
            Manifest m("prepare", *prepare, g);
            m.input(in);
            std::optional<fs::path> q;
            if (!qmatrix_path.empty()) {
                q = qmatrix_path;
                m.input(*q);
            }
            const Dataset d = preprocess(load_interactions(in, format, q), {min_interactions});
            save_dataset(d, out);
            m.output(out);
            m.write(out, false);
            spdlog::info("prepared {} interactions from {} users", d.interactions.size(), d.student_count());
        } else if (*stats) {
            Manifest m("stats", *stats, g);
            m.input(in);
            const Dataset d = stats_format.empty() ? load_dataset(in)
                                                   : preprocess(load_interactions(in, stats_format), {stats_min});
            const std::string text = to_json(dataset_stats(d)).dump(2) + "\n";
            std::cout << text;
            if (!g.out.empty()) {
                write_text(m, g.out, text);
                m.write(g.out, false);
            }
        } else if (*encode) {
            const fs::path out = require_out(g, "encode");
            Manifest m("encode", *encode, g);
            m.input(in);
            const Dataset d = load_dataset(in);
            const ModelSpec spec = spec_for(parse_family(model_name), dim, WindowSet::parse(windows_text));
            const DesignMatrix matrix = encode_dataset(d, spec);
            save_design_matrix(matrix, out);
            m.output(out);
            m.output(out.string() + ".layout.json");
            write_text(m, out.string() + ".vocab.json", to_json(Vocabulary::of(d)).dump() + "\n");
            m.write(out, false);
            spdlog::info("encoded {} rows x {} features ({} nonzeros)", matrix.rows(), matrix.cols(), matrix.nonzeros());
        } else if (*train) {
            const fs::path out = require_out(g, "train");
            Manifest m("train", *train, g);
            m.input(encoded);
            DesignMatrix matrix = load_design_matrix(encoded);
            if (train_dim && *train_dim != matrix.layout().spec().dim) {
                const auto& old = matrix.layout();
                ModelSpec spec = spec_for(old.spec().family, *train_dim, old.spec().windows);
                DesignMatrix relabeled{LayoutDescriptor(spec, old.dims(), {old.blocks().begin(), old.blocks().end()})};
                for (std::size_t r = 0; r < matrix.rows(); ++r) relabeled.push_back(matrix.row_copy(r));
                matrix = std::move(relabeled);
            }
            Vocabulary vocab;
            const fs::path vocab_path = encoded + ".vocab.json";
            if (fs::exists(vocab_path)) {
                m.input(vocab_path);
                vocab = vocabulary_from_json(json::parse(io::read_file(vocab_path)));
            }
            const FittedModel model = train_model(matrix, train_config(l2, iters, burn_in, g.seed), std::move(vocab));
            save_model(model, out);
            m.output(out);
            m.write(out, false);
            if (model.logistic) {
                spdlog::info("fit {} in {} iterations, converged={}", model.spec().label(), model.logistic->iterations,
                             model.logistic->converged);
            }
        } else if (*cv) {
            const fs::path out = require_out(g, "cv");
            fs::create_directories(out);
            Manifest m("cv", *cv, g);
            m.input(in);
            const Dataset d = load_dataset(in);
            const WindowSet windows = WindowSet::parse(windows_text);
            std::vector<ModelSpec> specs;
            for (const auto& name : split_list(models_text)) {
                for (const auto& dim_text : split_list(dims_text)) {
                    const auto spec = spec_for(parse_family(name), static_cast<std::uint32_t>(std::stoul(dim_text)),
                                               windows);
                    if (std::find(specs.begin(), specs.end(), spec) == specs.end()) specs.push_back(spec);
                }
            }
            CvOptions options;
            options.k = folds;
            options.seed = g.seed;
            options.threads = g.threads;
            options.train = train_config(l2, iters, std::nullopt, g.seed);
            std::mutex save_mutex;
            if (!no_save_models) {
                fs::create_directories(out / "models");
                options.on_model = [&](const ModelSpec& spec, std::uint32_t fold, const FittedModel& model) {
                    const fs::path p = out / "models" / fmt::format("{}_fold{}.json", spec.label(), fold);
                    save_model(model, p);
                    std::lock_guard lock(save_mutex);
                    m.output(p);
                };
            }
            const MetricsTable table = cross_validate(d, specs, options);
            write_text(m, out / "metrics.json", to_json(table).dump(2) + "\n");
            write_text(m, out / "metrics.txt", format_table(table));
            write_text(m, out / "fold_auc.csv",
                       fold_auc_csv(table, dataset_name.empty() ? fs::path(in).stem().string() : dataset_name));
            m.write(out, true);
            std::cout << format_table(table);
        } else if (*ablate) {
            const fs::path out = require_out(g, "ablate");
            fs::create_directories(out);
            Manifest m("ablate", *ablate, g);
            m.input(in);
            const Dataset d = load_dataset(in);
            CvOptions options;
            options.k = folds;
            options.seed = g.seed;
            options.threads = g.threads;
            options.train = train_config(l2, iters, std::nullopt, g.seed);
            const AblationReport report = ablation_suite(d, options, WindowSet::parse(windows_text));
            const std::string name = dataset_name.empty() ? fs::path(in).stem().string() : dataset_name;
            write_text(m, out / "ablation.json", to_json(report).dump(2) + "\n");
            write_text(m, out / "ablation_deltas.csv", ablation_delta_csv(report, name));
            write_text(m, out / "fold_auc.csv", fold_auc_csv(report.table, name));
            write_text(m, out / "metrics.txt", format_table(report.table));
            m.write(out, true);
            std::cout << format_table(report.table);
            for (const auto& c : report.comparisons) {
                std::cout << fmt::format("{}: delta AUC {:+.4f} ± {:.4f}\n", c.name, c.delta.mean, c.delta.std);
            }
        } else if (*slopes) {
            const fs::path out = require_out(g, "analyze slopes");
            Manifest m("analyze slopes", *slopes, g);
            const auto models = load_fold_models(model_dir);
            const SlopeOptions options{all_pairs};
            const auto entries = forgetting_slopes(models, options);
            for (const auto& e : entries) {
                if (e.unseen) spdlog::warn("skill {} has no training rows in any fold", e.skill_id);
            }
            write_text(m, out, slopes_csv(entries));
            write_text(m, out.string() + ".json", to_json(entries, options).dump(2) + "\n");
            m.write(out, false);
        } else if (*recall) {
            Manifest m("analyze recall", *recall, g);
            m.input(model_path);
            const FittedModel model = load_model(model_path);
            const auto& vocab = model.vocabulary;
            RecallQuery query;
            query.time = at_day;
            for (const auto& id : split_list(skills_text)) {
                const auto k = vocab.find_skill(id);
                if (!k) throw ConfigError("unknown skill '" + id + "'");
                query.skills.push_back(*k);
            }
            if (!item_id.empty()) {
                query.item = vocab.find_item(item_id);
                if (!query.item) throw ConfigError("unknown item '" + item_id + "'");
            }
            if (!student_id.empty()) query.student = vocab.find_student(student_id);
            std::vector<HistoryEvent> history;
            if (!history_path.empty()) {
                m.input(history_path);
                history = load_history(history_path, vocab);
            }
            const double p = recall_probability(model, history, query);
            const json result = {{"model", model.spec().label()},
                                 {"skills", split_list(skills_text)},
                                 {"at_day", at_day},
                                 {"recall_probability", p}};
            std::cout << result.dump(2) << "\n";
            if (!g.out.empty()) {
                write_text(m, g.out, result.dump(2) + "\n");
                m.write(g.out, false);
            }
        } else if (*sim) {
            const fs::path out = require_out(g, "schedule-sim");
            Manifest m("schedule-sim", *sim, g);
            FittedModel generator;
            if (model_path.empty()) {
                generator = synthetic_generator({.students = 1, .skills = 5, .items = 30, .multi_skill_fraction = 0.0,
                                                 .seed = g.seed});
            } else {
                m.input(model_path);
                generator = load_model(model_path);
            }
            std::vector<Policy> policies;
            for (const auto& p : split_list(policy_text)) policies.push_back(parse_policy(p));
            std::string csv = "seed,policy,mean_recall";
            for (const auto& s : generator.vocabulary.skills) csv += ",recall_" + s;
            csv += "\n";
            std::vector<std::vector<double>> means(policies.size());
            for (std::size_t s = 0; s < seeds; ++s) {
                for (std::size_t p = 0; p < policies.size(); ++p) {
                    SimulationConfig config;
                    config.policy = policies[p];
                    config.scheduler.threshold = threshold;
                    config.horizon = horizon;
                    config.items_per_session = per_session;
                    config.students = sim_students;
                    config.ability_stdev = ability;
                    config.seed = g.seed + s;
                    const RetentionReport r = simulate_policy(generator, config);
                    csv += fmt::format("{},{},{:.6f}", config.seed, to_string(r.policy), r.mean_recall);
                    for (double v : r.skill_recall) csv += fmt::format(",{:.6f}", v);
                    csv += "\n";
                    means[p].push_back(r.mean_recall);
                }
            }
            write_text(m, out, csv);
            for (std::size_t p = 0; p < policies.size(); ++p) {
                const MeanStd ms = mean_std(means[p]);
                std::cout << fmt::format("{}: mean end-horizon recall {:.4f} ± {:.4f}\n", to_string(policies[p]),
                                         ms.mean, ms.std);
            }
            if (policies.size() == 2) {
                std::size_t wins = 0, losses = 0;
                for (std::size_t s = 0; s < seeds; ++s) {
                    if (means[0][s] > means[1][s]) ++wins;
                    if (means[0][s] < means[1][s]) ++losses;
                }
                std::cout << fmt::format("{} beats {} on {} of {} seeds ({} losses), sign test p = {:.3g}\n",
                                         to_string(policies[0]), to_string(policies[1]), wins, seeds, losses,
                                         sign_test_p(wins, losses));
            }
            m.write(out, false);
        } else if (*synth) {
            const fs::path out = require_out(g, "synth");
            fs::create_directories(out);
            Manifest m("synth", *synth, g);
            sc.seed = g.seed;
            sc.forgetting = !no_forgetting;
            const SyntheticWorld world = generate_world(sc);
            write_text(m, out / "interactions.csv", raw_log_csv(world.raw));
            save_model(world.truth, out / "truth.json");
            m.output(out / "truth.json");
            m.write(out, true);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
