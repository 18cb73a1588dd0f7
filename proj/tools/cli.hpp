#pragma once

// `memekit` command line: one binary, one subcommand per pipeline stage.
//
// Exit status: 0 success, 1 data error, 2 usage error.
// Every run writes `run.json` next to its --out file, and every artifact
// embeds the run configuration that produced it (JSONL artifacts carry it
// as a leading {"run_config": ...} line).
//
// Relative corpus paths (KB, dataset, task, embeddings, golds) resolve against
// --data-root, else $MEMEKIT_DATA_ROOT. Derived artifacts (split plans,
// models, predictions) and outputs are relative to the working directory.
// A JSON --config file supplies defaults; explicit flags override it.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "memekit/memekit.hpp"

namespace memekit::cli {

namespace fs = std::filesystem;

inline constexpr const char* kDataRootEnv = "MEMEKIT_DATA_ROOT";

struct Options {
    // shared
    std::size_t threads = 1;
    std::string config_path;
    std::string data_root;

    // inputs
    std::string kb, kb_emb, kb_text_emb;
    std::string dataset, dataset_emb, dataset_text_emb;
    std::string task;
    std::string split_plan;
    std::string model;
    std::string preds, golds;

    // knobs
    std::string out;
    std::string method = "max";
    std::string fusion = "image";
    std::string mode = "full";
    std::string vote = "template";
    std::string ood = "norm";
    std::string average;
    std::string convention = "max_of_both";
    std::string side = "kb";
    std::string train_split = "train";
    std::string eval_split = "test";
    std::uint64_t seed = 0;
    std::size_t k = 1;
    std::size_t n = 500;
    std::size_t downsample_size = 0;
    std::size_t val_downsample_size = 0;
    bool include_examples = false;
    bool normalize = false;
    bool allow_shared_templates = false;
};

/// Loaded inputs for one run, resolved against the data root.
class Workspace {
public:
    explicit Workspace(const Options& opt) : opt_(opt) {
        if (!opt.data_root.empty()) {
            root_ = opt.data_root;
        } else if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') {
            root_ = env;
        }
    }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        if (path.is_relative() && !root_.empty()) return root_ / path;
        return path;
    }

    const TaskMeta& task() {
        if (!task_) task_ = load_task(resolve(opt_.task));
        return *task_;
    }

    const KnowledgeBase& kb() {
        if (!kb_) {
            kb_image_ = load(opt_.kb_emb);
            if (!opt_.kb_text_emb.empty()) kb_text_ = load(opt_.kb_text_emb);
            kb_ = load_kb(resolve(opt_.kb), kb_image_, kb_text_ ? &*kb_text_ : nullptr);
        }
        return *kb_;
    }

    Modalities kb_modalities() {
        kb();
        return {&kb_image_, kb_text_ ? &*kb_text_ : nullptr};
    }

    const std::vector<MemeRecord>& dataset() {
        if (!dataset_) {
            ds_image_ = load(opt_.dataset_emb);
            if (!opt_.dataset_text_emb.empty()) ds_text_ = load(opt_.dataset_text_emb);
            dataset_ = load_dataset(resolve(opt_.dataset), task(), ds_image_, ds_text_ ? &*ds_text_ : nullptr);
        }
        return *dataset_;
    }

    Modalities dataset_modalities() {
        dataset();
        return {&ds_image_, ds_text_ ? &*ds_text_ : nullptr};
    }

private:
    EmbeddingMatrix load(const std::string& path) const {
        auto m = load_embeddings(resolve(path));
        return opt_.normalize ? l2_normalized(m) : m;
    }

    const Options& opt_;
    fs::path root_;
    std::optional<TaskMeta> task_;
    EmbeddingMatrix kb_image_;
    std::optional<EmbeddingMatrix> kb_text_;
    std::optional<KnowledgeBase> kb_;
    EmbeddingMatrix ds_image_;
    std::optional<EmbeddingMatrix> ds_text_;
    std::optional<std::vector<MemeRecord>> dataset_;
};

// ---------------------------------------------------------------- config

/// Options that never enter the run config: they cannot change outputs.
inline bool is_operational(const std::string& name) {
    return name == "threads" || name == "config" || name == "data-root" || name == "help";
}

/// Every option of the invoked subcommand chain, explicit or defaulted.
inline Json run_config(const std::vector<CLI::App*>& chain) {
    Json config;
    std::string command;
    for (auto* app : chain) {
        if (app->get_parent() != nullptr) command += (command.empty() ? "" : " ") + app->get_name();
    }
    config["command"] = command;
    Json values;
    std::map<std::string, Json> sorted;
    for (auto* app : chain) {
        for (auto* opt : app->get_options()) {
            const auto name = opt->get_single_name();
            if (name.empty() || is_operational(name)) continue;
            if (opt->get_expected_min() == 0) {
                sorted[name] = opt->count() > 0;
            } else if (opt->count() > 0) {
                sorted[name] = opt->results().back();
            } else if (!opt->get_default_str().empty()) {
                sorted[name] = opt->get_default_str();
            }
        }
    }
    for (auto& [k, v] : sorted) values[k] = v;
    config["options"] = values;
    return config;
}

inline std::vector<std::string> config_file_args(const fs::path& path) {
    const Json j = read_json_file(path);
    if (!j.is_object()) throw Error(ErrorCode::bad_manifest, "config file must hold a JSON object");
    std::vector<std::string> args;
    for (const auto& [key, value] : j.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_string()) {
            args.push_back(flag);
            args.push_back(value.get<std::string>());
        } else if (value.is_number()) {
            args.push_back(flag);
            args.push_back(value.dump());
        } else {
            throw Error(ErrorCode::bad_manifest, "config key '" + key + "' must be a scalar");
        }
    }
    return args;
}

/// Inserts config-file values right after the subcommand words so that any
/// flag given on the command line comes later and wins.
inline std::vector<std::string> expand_config(std::vector<std::string> args, const std::set<std::string>& subcommands) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;

    std::size_t insert_at = 0;
    bool in_chain = false;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (subcommands.count(args[i])) {
            in_chain = true;
            insert_at = i + 1;
        } else if (in_chain) {
            break;
        }
    }
    const auto extra = config_file_args(config_path);
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), extra.begin(), extra.end());
    return args;
}

// ---------------------------------------------------------------- outputs

class RunRecorder {
public:
    RunRecorder(Json config, const std::string& out) : config_(std::move(config)), out_(out) {
        if (out_.has_parent_path()) fs::create_directories(out_.parent_path());
    }

    const Json& config() const { return config_; }
    fs::path dir() const { return out_.has_parent_path() ? out_.parent_path() : fs::path("."); }

    /// Writes a JSON artifact with the run config embedded.
    void write_json(const fs::path& path, Json body) {
        Json j;
        j["run_config"] = config_;
        for (auto& [k, v] : body.items()) j[k] = v;
        write_json_file(path, j);
        outputs_.push_back(path.filename().string());
    }

    void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
        std::vector<Json> all;
        all.reserve(rows.size() + 1);
        all.push_back(Json{{"run_config", config_}});
        all.insert(all.end(), rows.begin(), rows.end());
        write_text_file(path, to_jsonl(all));
        outputs_.push_back(path.filename().string());
    }

    void finish() {
        Json run;
        run["run_config"] = config_;
        run["outputs"] = outputs_;
        write_json_file(dir() / "run.json", run);
    }

private:
    Json config_;
    fs::path out_;
    std::vector<std::string> outputs_;
};

// ---------------------------------------------------------------- stages

inline std::vector<MemeRecord> select_items(const std::vector<MemeRecord>& items, const std::optional<SplitPlan>& plan,
                                            const std::string& split_name) {
    std::vector<MemeRecord> out;
    if (plan) {
        const auto lookup = split_lookup(*plan);
        const auto wanted = parse_split(split_name);
        for (const auto& m : items) {
            auto it = lookup.find(m.item_id);
            if (it == lookup.end()) throw Error(ErrorCode::bad_manifest, "item '" + m.item_id + "' missing from split plan");
            if (it->second == wanted) out.push_back(m);
        }
    } else {
        const auto wanted = parse_original_split(split_name);
        for (const auto& m : items) {
            if (m.original_split == wanted) out.push_back(m);
        }
    }
    return out;
}

inline std::optional<SplitPlan> maybe_plan(const Options& opt) {
    if (opt.split_plan.empty()) return std::nullopt;
    return plan_from_json(read_json_file(opt.split_plan));
}

inline int cmd_index(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto& kb = ws.kb();
    const auto refs = build_reference_set(kb, ws.kb_modalities(), parse_fusion_mode(opt.fusion));
    const auto index = refs.index(opt.include_examples);
    Json body;
    body["templates"] = kb.n_templates();
    body["examples"] = kb.n_examples();
    body["entries"] = index.size();
    body["template_entries"] = index.count(EntryKind::template_entry);
    body["example_entries"] = index.count(EntryKind::example);
    body["dim"] = index.dim();
    rec.write_json(opt.out, body);
    std::cout << "indexed " << index.size() << " entries (" << kb.n_templates() << " templates, "
              << index.count(EntryKind::example) << " examples), dim " << index.dim() << '\n';
    return 0;
}

inline int cmd_thresholds(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto& kb = ws.kb();
    const auto refs = build_reference_set(kb, ws.kb_modalities(), parse_fusion_mode(opt.fusion));
    const auto profiles = build_profiles(kb, refs, parse_threshold_method(opt.method), opt.threads);
    rec.write_json(opt.out, profiles_to_json(profiles));
    std::size_t fallback = 0;
    for (const auto& p : profiles.profiles) fallback += p.fallback ? 1 : 0;
    std::cout << profiles.profiles.size() << " templates, " << fallback << " on the global " << opt.method
              << " threshold " << profiles.global.value << '\n';
    return 0;
}

inline std::vector<ItemMatch> match_dataset(const Options& opt, Workspace& ws, ThresholdMethod method) {
    const auto& kb = ws.kb();
    const auto fusion = parse_fusion_mode(opt.fusion);
    const auto refs = build_reference_set(kb, ws.kb_modalities(), fusion);
    const auto index = refs.index(false);
    const auto profiles = build_profiles(kb, refs, method, opt.threads);
    const auto& items = ws.dataset();
    const auto queries = query_matrix(items, ws.dataset_modalities(), fusion);
    return assign_objects(items, queries, index, kb, profiles, opt.threads);
}

inline int cmd_match(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto matches = match_dataset(opt, ws, parse_threshold_method(opt.method));
    const auto& kb = ws.kb();
    std::vector<Json> rows;
    std::size_t instances = 0;
    for (const auto& m : matches) {
        Json row;
        row["item_id"] = m.item_id;
        row["template_id"] = kb.templates[m.template_ordinal].template_id;
        row["distance"] = m.distance;
        row["threshold"] = m.threshold;
        row["instance"] = m.templateness == Templateness::instance;
        row["object_kind"] = std::string(to_string(m.object.kind));
        row["object_id"] = m.object.id;
        rows.push_back(std::move(row));
        instances += m.templateness == Templateness::instance ? 1 : 0;
    }
    rec.write_jsonl(opt.out, rows);
    std::cout << matches.size() << " items: " << instances << " template instances, " << matches.size() - instances
              << " unique identifiers\n";
    return 0;
}

inline void print_summary(const SplitPlan& plan) {
    auto s = summarize(plan);
    std::cout << "split     items  templates  UIs\n";
    for (auto split : {Split::train, Split::val, Split::test, Split::discard}) {
        const auto& row = s.at(split);
        std::cout << std::left << std::setw(8) << to_string(split) << std::right << std::setw(7) << row.items
                  << std::setw(11) << row.templates << std::setw(5) << row.uis << '\n';
    }
    for (const auto& w : plan.warnings) std::cout << "warning: " << w << '\n';
}

inline int cmd_tsplit(const Options& opt, RunRecorder& rec, Workspace& ws) {
    if (opt.allow_shared_templates) {
        throw Error(ErrorCode::invalid_argument, "--allow-shared-templates is reserved and not implemented");
    }
    const auto method = parse_threshold_method(opt.method);
    const auto mode = parse_tsplit_mode(opt.mode);
    const auto matches = match_dataset(opt, ws, method);
    const auto& items = ws.dataset();

    SplitPlan plan;
    switch (mode) {
        case TsplitMode::downsample:
            plan = tsplit_downsample_mode(items, matches, method, opt.seed);
            break;
        case TsplitMode::full:
            plan = tsplit_full_mode(items, matches, method, opt.seed);
            break;
        case TsplitMode::full_downsample: {
            if (opt.downsample_size == 0) throw Error(ErrorCode::invalid_argument, "full-downsample needs --downsample-size");
            const auto full = tsplit_full_mode(items, matches, method, opt.seed);
            std::optional<std::size_t> val_size;
            if (opt.val_downsample_size > 0) val_size = opt.val_downsample_size;
            plan = tsplit_downsample_by_template(full, opt.downsample_size, val_size);
            break;
        }
    }
    if (const auto leaks = find_leaks(plan); !leaks.empty()) {
        throw Error(ErrorCode::invalid_argument, "internal: object '" + leaks.front().id + "' spans two splits");
    }
    rec.write_json(opt.out, plan_to_json(plan));
    print_summary(plan);
    return 0;
}

struct TlcSetup {
    ReferenceSet refs;
    Index index;
    ProfileSet max_profiles;
};

inline TlcSetup tlc_setup(Workspace& ws, FusionMode fusion, bool include_examples, std::size_t threads) {
    auto refs = build_reference_set(ws.kb(), ws.kb_modalities(), fusion);
    auto index = refs.index(include_examples);
    auto profiles = build_profiles(ws.kb(), refs, ThresholdMethod::max, threads);
    return {std::move(refs), std::move(index), std::move(profiles)};
}

inline int cmd_tlc_fit(const Options& opt, RunRecorder& rec, Workspace& ws) {
    TlcConfig config;
    config.fusion = parse_fusion_mode(opt.fusion);
    config.include_examples = opt.include_examples;
    config.k = opt.k;
    config.vote = parse_vote_mode(opt.vote);
    config.ood = parse_ood_mode(opt.ood);
    config.seed = opt.seed;

    const auto plan = maybe_plan(opt);
    const auto train = select_items(ws.dataset(), plan, opt.train_split);
    const auto& task = ws.task();

    auto fit_one = [&](FusionMode fusion, const std::vector<MemeRecord>& items) {
        TlcConfig c = config;
        c.fusion = fusion;
        const auto setup = tlc_setup(ws, fusion, c.include_examples, opt.threads);
        const auto queries = query_matrix(items, ws.dataset_modalities(), fusion);
        return tlc_fit(items, queries, setup.index, ws.kb(), setup.max_profiles, c, opt.threads);
    };

    Json body;
    if (config.fusion == FusionMode::late) {
        // each side learns from the items that carry its modality
        std::vector<MemeRecord> with_text;
        for (const auto& m : train) {
            if (m.text_row) with_text.push_back(m);
        }
        body["fusion"] = "late";
        body["image"] = tlc_model_to_json(fit_one(FusionMode::image_only, train), task);
        body["text"] = tlc_model_to_json(fit_one(FusionMode::text_only, with_text), task);
    } else {
        body["fusion"] = std::string(to_string(config.fusion));
        body["model"] = tlc_model_to_json(fit_one(config.fusion, train), task);
    }
    rec.write_json(opt.out, body);
    std::cout << "fitted on " << train.size() << " training items\n";
    return 0;
}

inline std::vector<Prediction> tlc_run_predictions(const Options& opt, Workspace& ws, const std::vector<MemeRecord>& items) {
    const auto& task = ws.task();
    const Json j = read_json_file(opt.model);
    const auto fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
    if (fusion != FusionMode::late) {
        const auto model = tlc_model_from_json(j.at("model"), task);
        check_model_matches_kb(model, ws.kb());
        const auto setup = tlc_setup(ws, fusion, model.config.include_examples, opt.threads);
        const auto queries = query_matrix(items, ws.dataset_modalities(), fusion);
        return tlc_predict_all(model, items, queries, setup.index, opt.threads);
    }

    const auto image_model = tlc_model_from_json(j.at("image"), task);
    const auto text_model = tlc_model_from_json(j.at("text"), task);
    check_model_matches_kb(image_model, ws.kb());
    check_model_matches_kb(text_model, ws.kb());
    const auto image_setup = tlc_setup(ws, FusionMode::image_only, image_model.config.include_examples, opt.threads);
    const auto text_setup = tlc_setup(ws, FusionMode::text_only, text_model.config.include_examples, opt.threads);
    const auto ds = ws.dataset_modalities();

    std::vector<Prediction> out(items.size());
    parallel_for(items.size(), opt.threads, [&](std::size_t i) {
        const auto& item = items[i];
        ModalityInput image{&image_model, &image_setup.index, ds.image->row(item.image_row)};
        ModalityInput text{&text_model, &text_setup.index, std::nullopt};
        if (item.text_row && ds.text != nullptr) text.query = ds.text->row(*item.text_row);
        out[i] = tlc_predict_late_fusion(item, image, text);
    });
    return out;
}

inline std::vector<Json> prediction_rows(const std::vector<Prediction>& preds, const KnowledgeBase& kb, const TaskMeta& task) {
    std::vector<Json> rows;
    rows.reserve(preds.size());
    for (const auto& p : preds) {
        Json row;
        row["item_id"] = p.item_id;
        row["labels"] = labels_to_json(p.labels, task);
        row["matched_template"] = p.matched_template ? Json(kb.templates.at(*p.matched_template).template_id) : Json(nullptr);
        row["distance"] = p.distance;
        row["backoff"] = std::string(to_string(p.backoff));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline int cmd_tlc_predict(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto plan = maybe_plan(opt);
    const auto items = select_items(ws.dataset(), plan, opt.eval_split);
    const auto preds = tlc_run_predictions(opt, ws, items);
    rec.write_jsonl(opt.out, prediction_rows(preds, ws.kb(), ws.task()));
    std::cout << "predicted " << preds.size() << " items\n";
    return 0;
}

inline Average headline_average(const Options& opt, const TaskMeta& task) {
    return opt.average.empty() ? task.eval_average : parse_average(opt.average);
}

inline ZeroDivision parse_convention(const std::string& s) {
    if (s == "zd0") return ZeroDivision::zd0;
    if (s == "zd1") return ZeroDivision::zd1;
    return ZeroDivision::max_of_both;
}

inline int cmd_tlc_eval(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto plan = maybe_plan(opt);
    const auto items = select_items(ws.dataset(), plan, opt.eval_split);
    const auto preds = tlc_run_predictions(opt, ws, items);
    std::vector<LabelVector> p, g;
    for (std::size_t i = 0; i < items.size(); ++i) {
        p.push_back(preds[i].labels);
        g.push_back(items[i].labels);
    }
    const auto avg = headline_average(opt, ws.task());
    const auto report = f1_report(p, g, ws.task(), parse_convention(opt.convention));
    rec.write_json(opt.out, f1_report_to_json(report, avg));
    std::cout << f1_report_table(report);
    return 0;
}

inline int cmd_eval_f1(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto& task = ws.task();
    std::unordered_map<std::string, LabelVector> gold_of;
    for (const auto& row : read_jsonl_file(ws.resolve(opt.golds))) {
        if (row.contains("run_config")) continue;
        const auto id = row.at("item_id").get<std::string>();
        auto labels = labels_from_json(row.at("labels"), task, "gold '" + id + "'");
        task.check_labels(labels, "gold '" + id + "'");
        gold_of.emplace(id, std::move(labels));
    }
    std::vector<LabelVector> p, g;
    for (const auto& row : read_jsonl_file(opt.preds)) {
        if (row.contains("run_config")) continue;
        const auto id = row.at("item_id").get<std::string>();
        auto it = gold_of.find(id);
        if (it == gold_of.end()) throw Error(ErrorCode::bad_manifest, "prediction for unknown item '" + id + "'");
        auto labels = labels_from_json(row.at("labels"), task, "prediction '" + id + "'");
        if (labels.size() != task.n_labels()) throw Error(ErrorCode::label_count, "prediction '" + id + "'");
        p.push_back(std::move(labels));
        g.push_back(it->second);
    }
    const auto avg = headline_average(opt, task);
    const auto report = f1_report(p, g, task, parse_convention(opt.convention));
    if (!opt.out.empty()) rec.write_json(opt.out, f1_report_to_json(report, avg));
    std::cout << f1_report_table(report) << to_string(avg) << " F1: " << report.headline(avg) << '\n';
    return 0;
}

inline int cmd_analyze_retrieve(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto fusion = parse_fusion_mode(opt.fusion);
    const auto refs = build_reference_set(ws.kb(), ws.kb_modalities(), fusion);
    const auto index = refs.index(opt.include_examples);
    const auto& items = ws.dataset();
    const auto queries = query_matrix(items, ws.dataset_modalities(), fusion);
    const auto pairs = retrieval_report(items, queries, index, ws.kb(), std::min(opt.n, items.size()), opt.threads);
    std::vector<Json> rows;
    for (const auto& p : pairs) rows.push_back(retrieval_pair_to_json(p));
    rec.write_jsonl(opt.out, rows);
    std::cout << rows.size() << " template-meme pairs\n";
    return 0;
}

inline int cmd_analyze_centroids(const Options& opt, RunRecorder& rec, Workspace& ws) {
    const auto fusion = parse_fusion_mode(opt.fusion);
    const auto& kb = ws.kb();
    const auto refs = build_reference_set(kb, ws.kb_modalities(), fusion);
    EmbeddingMatrix kb_vectors;
    std::vector<std::string> kb_ids;
    for (std::size_t r = 0; r < refs.vectors.rows(); ++r) {
        const auto& meta = refs.meta[r];
        if (meta.kind == EntryKind::example && !opt.include_examples) continue;
        kb_vectors.push_back(refs.vectors.row(r));
        std::string id = kb.templates[meta.template_ordinal].template_id;
        if (meta.kind == EntryKind::example) id += "#example" + std::to_string(r);
        kb_ids.push_back(std::move(id));
    }
    const auto& items = ws.dataset();
    const auto ds_vectors = query_matrix(items, ws.dataset_modalities(), fusion);
    std::vector<std::string> ds_ids;
    for (const auto& m : items) ds_ids.push_back(m.item_id);

    const auto side = parse_fit_side(opt.side);
    const std::size_t k = opt.k > 0 ? opt.k : ws.task().n_labels();
    KMeansOptions kopt;
    kopt.k = k;
    kopt.seed = opt.seed;
    kopt.threads = opt.threads;
    const auto report = side == FitSide::kb ? centroid_report(kb_vectors, side, ds_vectors, ds_ids, kopt)
                                            : centroid_report(ds_vectors, side, kb_vectors, kb_ids, kopt);
    rec.write_json(opt.out, centroid_report_to_json(report));
    for (const auto& c : report.centroids) {
        std::cout << c.nearest_entry_id << "  distance " << c.distance << "  cluster size " << c.cluster_size << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- dispatch

inline int dispatch(std::vector<std::string> args, std::ostream& err = std::cerr) {
    Options opt;
    CLI::App app{"Template-aware meme dataset toolkit", "memekit"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--threads", opt.threads, "Worker cap; never changes outputs")->capture_default_str();
    app.add_option("--config", opt.config_path, "JSON file of option defaults");
    app.add_option("--data-root", opt.data_root, "Base directory for relative input paths (overrides $MEMEKIT_DATA_ROOT)");

    auto add_kb = [&](CLI::App* sub, bool required = true) {
        auto* kb = sub->add_option("--kb", opt.kb, "Template manifest (kb.json)");
        auto* emb = sub->add_option("--kb-emb", opt.kb_emb, "Template image embeddings (.emb)");
        if (required) {
            kb->required();
            emb->required();
        }
        sub->add_option("--kb-text-emb", opt.kb_text_emb, "Template text embeddings (.emb)");
        sub->add_flag("--normalize", opt.normalize, "L2-normalize every embedding row on load");
    };
    auto add_dataset = [&](CLI::App* sub) {
        sub->add_option("--dataset", opt.dataset, "Dataset records (dataset.jsonl)")->required();
        sub->add_option("--dataset-emb", opt.dataset_emb, "Dataset image embeddings (.emb)")->required();
        sub->add_option("--dataset-text-emb", opt.dataset_text_emb, "Dataset text embeddings (.emb)");
        sub->add_option("--task", opt.task, "Task metadata (task.json)")->required();
    };
    const std::vector<std::string> fusion_modes{"image", "text", "concat", "hadamard", "norm_avg", "late"};
    const std::vector<std::string> vector_fusions{"image", "text", "concat", "hadamard", "norm_avg"};
    const std::vector<std::string> methods{"max", "median", "mean", "p25"};
    auto add_fusion = [&](CLI::App* sub, const std::vector<std::string>& allowed) {
        sub->add_option("--fusion", opt.fusion, "Modality fusion")->check(CLI::IsMember(allowed));
    };
    auto add_out = [&](CLI::App* sub, bool required = true) {
        auto* o = sub->add_option("--out", opt.out, "Output file (run.json is written beside it)");
        if (required) o->required();
    };

    auto* index = app.add_subcommand("index", "Build the nearest-neighbour index over the knowledge base");
    add_kb(index);
    add_fusion(index, vector_fusions);
    index->add_flag("--include-examples", opt.include_examples, "Index template examples too");
    add_out(index);

    auto* thresholds = app.add_subcommand("thresholds", "Per-template distance thresholds");
    add_kb(thresholds);
    add_fusion(thresholds, vector_fusions);
    thresholds->add_option("--method", opt.method, "Threshold method")->check(CLI::IsMember(methods));
    add_out(thresholds);

    auto* match = app.add_subcommand("match", "Match dataset items to templates or unique identifiers");
    add_kb(match);
    add_dataset(match);
    add_fusion(match, vector_fusions);
    match->add_option("--method", opt.method, "Threshold method")->check(CLI::IsMember(methods));
    add_out(match);

    auto* tsplit = app.add_subcommand("tsplit", "Template-aware dataset splitting");
    tsplit->require_subcommand(1);
    auto* tsplit_run = tsplit->add_subcommand("run", "Produce a split plan");
    add_kb(tsplit_run);
    add_dataset(tsplit_run);
    add_fusion(tsplit_run, vector_fusions);
    tsplit_run->add_option("--mode", opt.mode, "downsample | full | full-downsample")
        ->check(CLI::IsMember({"downsample", "full", "full-downsample"}));
    tsplit_run->add_option("--method", opt.method, "Threshold method")->check(CLI::IsMember(methods));
    tsplit_run->add_option("--seed", opt.seed, "Shuffle seed");
    tsplit_run->add_option("--downsample-size", opt.downsample_size, "Training size target (full-downsample)");
    tsplit_run->add_option("--val-downsample-size", opt.val_downsample_size, "Validation size target (full-downsample)");
    tsplit_run->add_flag("--allow-shared-templates", opt.allow_shared_templates, "Reserved; not implemented");
    add_out(tsplit_run);

    auto* tlc = app.add_subcommand("tlc", "Template-Label Counter classifier");
    tlc->require_subcommand(1);
    auto* tlc_fit_cmd = tlc->add_subcommand("fit", "Fit a model on the training split");
    auto* tlc_predict_cmd = tlc->add_subcommand("predict", "Predict labels for an evaluation split");
    auto* tlc_eval_cmd = tlc->add_subcommand("eval", "Predict and score an evaluation split");
    for (auto* sub : {tlc_fit_cmd, tlc_predict_cmd, tlc_eval_cmd}) {
        add_kb(sub);
        add_dataset(sub);
        sub->add_option("--split-plan", opt.split_plan, "Use splits from a TSplit plan instead of original tags");
        add_out(sub);
    }
    add_fusion(tlc_fit_cmd, fusion_modes);
    tlc_fit_cmd->add_flag("--include-examples", opt.include_examples, "Match against template examples too");
    tlc_fit_cmd->add_option("--k", opt.k, "Neighbours to vote over")->check(CLI::PositiveNumber);
    tlc_fit_cmd->add_option("--vote", opt.vote, "template | label")->check(CLI::IsMember({"template", "label"}));
    tlc_fit_cmd->add_option("--ood", opt.ood, "norm | maj | rand")->check(CLI::IsMember({"norm", "maj", "rand"}));
    tlc_fit_cmd->add_option("--seed", opt.seed, "Seed for the rand backoff");
    tlc_fit_cmd->add_option("--train-split", opt.train_split, "Split to fit on");
    for (auto* sub : {tlc_predict_cmd, tlc_eval_cmd}) {
        sub->add_option("--model", opt.model, "Fitted model (model.json)")->required();
        sub->add_option("--eval-split", opt.eval_split, "Split to predict");
    }
    tlc_eval_cmd->add_option("--average", opt.average, "macro | weighted | micro (default: task)")
        ->check(CLI::IsMember({"macro", "weighted", "micro"}));
    tlc_eval_cmd->add_option("--convention", opt.convention, "zd0 | zd1 | max_of_both")
        ->check(CLI::IsMember({"zd0", "zd1", "max_of_both"}));

    auto* eval = app.add_subcommand("eval", "Score predictions");
    eval->require_subcommand(1);
    auto* eval_f1 = eval->add_subcommand("f1", "F1 report with the dual zero-division convention");
    eval_f1->add_option("--preds", opt.preds, "Predictions (JSONL)")->required();
    eval_f1->add_option("--golds", opt.golds, "Gold dataset (JSONL)")->required();
    eval_f1->add_option("--task", opt.task, "Task metadata (task.json)")->required();
    eval_f1->add_option("--average", opt.average, "macro | weighted | micro (default: task)")
        ->check(CLI::IsMember({"macro", "weighted", "micro"}));
    eval_f1->add_option("--convention", opt.convention, "zd0 | zd1 | max_of_both")
        ->check(CLI::IsMember({"zd0", "zd1", "max_of_both"}));
    add_out(eval_f1, false);

    auto* analyze = app.add_subcommand("analyze", "Exploratory reports");
    analyze->require_subcommand(1);
    auto* retrieve = analyze->add_subcommand("retrieve", "Closest template-meme pairs");
    add_kb(retrieve);
    add_dataset(retrieve);
    add_fusion(retrieve, vector_fusions);
    retrieve->add_flag("--include-examples", opt.include_examples, "Retrieve over template examples too");
    retrieve->add_option("--n", opt.n, "Number of pairs")->check(CLI::PositiveNumber);
    add_out(retrieve);
    auto* centroids = analyze->add_subcommand("centroids", "k-means centroids paired with the nearest entry");
    add_kb(centroids);
    add_dataset(centroids);
    add_fusion(centroids, vector_fusions);
    centroids->add_flag("--include-examples", opt.include_examples, "Include template examples on the KB side");
    centroids->add_option("--k", opt.k, "Clusters (default: number of labels)");
    centroids->add_option("--side", opt.side, "kb | dataset")->check(CLI::IsMember({"kb", "dataset"}));
    centroids->add_option("--seed", opt.seed, "k-means++ seed");
    add_out(centroids);
    // centroids defaults k to the label count rather than 1
    centroids->get_option("--k")->default_str("");

    std::set<std::string> subcommand_names{"index", "thresholds", "match", "tsplit", "run", "tlc",     "fit",
                                           "predict", "eval", "f1",    "analyze", "retrieve", "centroids"};
    try {
        args = expand_config(std::move(args), subcommand_names);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    std::vector<CLI::App*> chain{&app};
    for (CLI::App* cur = &app; !cur->get_subcommands().empty();) {
        cur = cur->get_subcommands().front();
        chain.push_back(cur);
    }
    CLI::App* leaf = chain.back();
    if (leaf == centroids && centroids->get_option("--k")->count() == 0) opt.k = 0;

    try {
        RunRecorder rec(run_config(chain), opt.out.empty() ? std::string("report.json") : opt.out);
        Workspace ws(opt);
        int status = 0;
        if (leaf == index) status = cmd_index(opt, rec, ws);
        else if (leaf == thresholds) status = cmd_thresholds(opt, rec, ws);
        else if (leaf == match) status = cmd_match(opt, rec, ws);
        else if (leaf == tsplit_run) status = cmd_tsplit(opt, rec, ws);
        else if (leaf == tlc_fit_cmd) status = cmd_tlc_fit(opt, rec, ws);
        else if (leaf == tlc_predict_cmd) status = cmd_tlc_predict(opt, rec, ws);
        else if (leaf == tlc_eval_cmd) status = cmd_tlc_eval(opt, rec, ws);
        else if (leaf == eval_f1) status = cmd_eval_f1(opt, rec, ws);
        else if (leaf == retrieve) status = cmd_analyze_retrieve(opt, rec, ws);
        else if (leaf == centroids) status = cmd_analyze_centroids(opt, rec, ws);
        if (status == 0 && !(leaf == eval_f1 && opt.out.empty())) rec.finish();
        return status;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const Json::exception& e) {
        err << "error: malformed input: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

inline int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(std::move(args));
}

}  // namespace memekit::cli
