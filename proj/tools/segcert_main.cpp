// segcert: certification engine and attack harness for Lipschitz-bounded
// semantic segmentation. Subcommands: certify, attack, train, selftest, bench.
//
// Exit codes: 0 success, 2 bad flags or config, 3 I/O failure, 4 shape or
// label mismatch, 5 undefined metric, 6 certificate soundness violation,
// 7 self-test failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "segcert/attack.hpp"
#include "segcert/cert.hpp"
#include "segcert/errors.hpp"
#include "segcert/lipnet.hpp"
#include "segcert/model_io.hpp"
#include "segcert/oracle.hpp"
#include "segcert/parallel.hpp"
#include "segcert/report_json.hpp"
#include "segcert/rng.hpp"
#include "segcert/tensor_io.hpp"

namespace {

using nlohmann::json;
using namespace segcert;

constexpr int kExitBadFlags = 2;
constexpr int kExitIo = 3;
constexpr int kExitShape = 4;
constexpr int kExitUndefinedMetric = 5;
constexpr int kExitSoundness = 6;
constexpr int kExitSelfTest = 7;

std::vector<double> parse_double_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(item, &pos);
            if (pos != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError(std::string(flag) + ": '" + item + "' is not a number");
        }
    }
    return out;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start)
            .count();
    }
};

void emit(const json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << doc.dump(2) << "\n";
    } else {
        write_json_file(doc, out_path);
    }
}

std::string join_args(int argc, char** argv) {
    std::string cmd;
    for (int i = 0; i < argc; ++i) {
        if (i > 0) cmd += ' ';
        cmd += argv[i];
    }
    return cmd;
}

// ---------------------------------------------------------------- certify

struct CertifyArgs {
    std::string config_path;
    std::string logits_path;
    std::string labels_path;
    std::string metric = "pixel-acc";
    double lipschitz = 1.0;
    double p = 2.0;
    std::string eps = "0";
    std::string gamma;
    int class_index = -1;
    std::int32_t ignore_label = 255;
    int threads = 0;
    std::string out;
    std::uint64_t seed = 0;
};

// Optional JSON config supplying the same keys as the certify flags; any
// flag given on the command line wins over the file.
void apply_config_file(const CLI::App& sub, CertifyArgs& args) {
    if (args.config_path.empty()) return;
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in.good()) {
        throw TensorIoError(TensorIoCode::IoFailure,
                            "cannot open config file " + args.config_path);
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + args.config_path + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config file must hold a JSON object");
    }
    const auto list_text = [](const json& v, const std::string& key) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_array()) {
            std::string joined;
            for (const json& item : v) {
                if (!item.is_number()) {
                    throw ConfigError("config key '" + key +
                                      "' entries must be numbers");
                }
                if (!joined.empty()) joined += ',';
                joined += item.dump();
            }
            return joined;
        }
        throw ConfigError("config key '" + key +
                          "' must be a string or an array of numbers");
    };
    static const std::vector<std::string> known{
        "eps",   "gamma",        "logits",  "labels", "metric", "lipschitz",
        "p",     "class",        "ignore-label", "threads", "out", "seed"};
    for (const auto& [key, value] : doc.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        if (sub.count("--" + key) > 0) continue;
        try {
            if (key == "eps") {
                args.eps = list_text(value, key);
            } else if (key == "gamma") {
                args.gamma = list_text(value, key);
            } else if (key == "logits") {
                args.logits_path = value.get<std::string>();
            } else if (key == "labels") {
                args.labels_path = value.get<std::string>();
            } else if (key == "metric") {
                args.metric = value.get<std::string>();
            } else if (key == "lipschitz") {
                args.lipschitz = value.get<double>();
            } else if (key == "p") {
                args.p = value.get<double>();
            } else if (key == "class") {
                args.class_index = value.get<int>();
            } else if (key == "ignore-label") {
                args.ignore_label = value.get<std::int32_t>();
            } else if (key == "threads") {
                args.threads = value.get<int>();
            } else if (key == "out") {
                args.out = value.get<std::string>();
            } else if (key == "seed") {
                args.seed = value.get<std::uint64_t>();
            }
        } catch (const json::exception&) {
            throw ConfigError("config key '" + key + "' has the wrong type");
        }
    }
}

// Splits a rank-3 (single image) or rank-4 (batch) logit tensor.
std::vector<LogitTensor> split_logits(const Tensor& t) {
    if (t.shape.size() == 3) return {logits_from_tensor(t)};
    if (t.shape.size() != 4) {
        throw ShapeError("logits must have rank 3 (K,H,W) or rank 4 (N,K,H,W)");
    }
    const std::size_t n = t.shape[0];
    const std::size_t chunk = t.element_count() / n;
    const auto& src = t.real32();
    std::vector<LogitTensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor one = make_real32(
            {t.shape[1], t.shape[2], t.shape[3]},
            std::vector<float>(src.begin() + i * chunk, src.begin() + (i + 1) * chunk));
        out.push_back(logits_from_tensor(one));
    }
    return out;
}

std::vector<LabelMask> split_labels(const Tensor& t, std::int32_t ignore_label) {
    if (t.shape.size() == 2) return {labels_from_tensor(t, ignore_label)};
    if (t.shape.size() != 3) {
        throw ShapeError("labels must have rank 2 (H,W) or rank 3 (N,H,W)");
    }
    const std::size_t n = t.shape[0];
    std::vector<LabelMask> out;
    out.reserve(n);
    const std::vector<uint32_t> shape{t.shape[1], t.shape[2]};
    const std::size_t chunk =
        static_cast<std::size_t>(t.shape[1]) * static_cast<std::size_t>(t.shape[2]);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor one;
        if (t.dtype == DType::Index8) {
            const auto& src = t.index8();
            one = make_index8(shape, std::vector<uint8_t>(src.begin() + i * chunk,
                                                          src.begin() + (i + 1) * chunk));
        } else if (t.dtype == DType::Index32) {
            const auto& src = t.index32();
            one = make_index32(shape,
                               std::vector<std::int32_t>(src.begin() + i * chunk,
                                                         src.begin() + (i + 1) * chunk));
        } else {
            throw ShapeError("labels must be index8 or index32");
        }
        out.push_back(labels_from_tensor(one, ignore_label));
    }
    return out;
}

int cmd_certify(const CertifyArgs& args, const std::string& command) {
    if (args.logits_path.empty()) {
        throw ConfigError("--logits is required (flag or config file)");
    }
    const Metric metric = metric_from_name(args.metric);
    CertConfig cfg;
    cfg.lipschitz = args.lipschitz;
    cfg.norm_order = args.p;
    cfg.epsilons = parse_double_list(args.eps, "--eps");
    cfg.gammas = parse_double_list(args.gamma, "--gamma");
    cfg.class_index = args.class_index;
    validate(cfg);
    if (metric != Metric::Stability && args.labels_path.empty()) {
        throw MissingLabelsError("--labels is required for metric " + args.metric);
    }

    const int threads = args.threads > 0 ? args.threads : machine_parallelism();

    Timer total;
    Timer read_timer;
    const Tensor logits_tensor = read_tensor(args.logits_path);
    std::vector<LogitTensor> images = split_logits(logits_tensor);
    std::vector<LabelMask> masks;
    if (!args.labels_path.empty()) {
        masks = split_labels(read_tensor(args.labels_path), args.ignore_label);
        if (masks.size() != images.size()) {
            throw ShapeError("batch size mismatch: " + std::to_string(images.size()) +
                             " logit images vs " + std::to_string(masks.size()) +
                             " label masks");
        }
    }
    const double read_ms = read_timer.ms();

    Timer certify_timer;
    std::vector<CertificateReport> reports(images.size());
    if (images.size() > 1) {
        parallel_for(images.size(), threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                reports[i] = certify_report(
                    images[i], masks.empty() ? nullptr : &masks[i], cfg, metric, 1);
            }
        });
    } else {
        reports[0] = certify_report(images[0], masks.empty() ? nullptr : &masks[0], cfg,
                                    metric, threads);
    }
    const double certify_ms = certify_timer.ms();

    RunManifest manifest;
    manifest.command = command;
    manifest.threads = threads;
    manifest.seed = args.seed;
    if (!args.config_path.empty()) {
        manifest.inputs.push_back({args.config_path, file_digest(args.config_path)});
    }
    manifest.inputs.push_back({args.logits_path, file_digest(args.logits_path)});
    if (!args.labels_path.empty()) {
        manifest.inputs.push_back({args.labels_path, file_digest(args.labels_path)});
    }
    manifest.timings_ms = {{"read", read_ms},
                           {"certify", certify_ms},
                           {"total", total.ms()}};

    json per_image = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        json entry = report_to_json(reports[i]);
        entry["index"] = i;
        per_image.push_back(std::move(entry));
    }

    const char* value_key = metric_value_key(metric);
    json agg_eps = json::array();
    for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
        double mean = 0.0;
        for (const CertificateReport& r : reports) mean += r.per_epsilon[e].value;
        mean /= static_cast<double>(reports.size());
        agg_eps.push_back({{"epsilon", cfg.epsilons[e]},
                           {std::string("mean_") + value_key, mean}});
    }
    json agg_gamma = json::array();
    for (std::size_t g = 0; g < cfg.gammas.size(); ++g) {
        double mean = 0.0;
        std::size_t have = 0;
        for (const CertificateReport& r : reports) {
            if (g < r.per_gamma.size()) {
                mean += r.per_gamma[g].radius_lower_bound;
                ++have;
            }
        }
        if (have > 0) mean /= static_cast<double>(have);
        agg_gamma.push_back(
            {{"gamma", cfg.gammas[g]}, {"mean_radius_lower_bound", mean}});
    }
    double mean_clean = 0.0;
    for (const CertificateReport& r : reports) mean_clean += r.clean_value;
    mean_clean /= static_cast<double>(reports.size());

    json doc{{"manifest", manifest_to_json(manifest)},
             {"config", config_to_json(cfg, metric, args.ignore_label)},
             {"per_image", std::move(per_image)},
             {"aggregate",
              {{"images", reports.size()},
               {"mean_clean", mean_clean},
               {"per_epsilon", std::move(agg_eps)},
               {"per_gamma", std::move(agg_gamma)},
               {"certify_ms", certify_ms}}}};
    emit(doc, args.out);
    return 0;
}

// ----------------------------------------------------------------- attack

struct AttackArgs {
    std::string model_dir;
    std::string eps = "0";
    int samples = 20;
    int steps = 100;
    int restarts = 3;
    double step_size = 0.0;
    std::string objective = "misclassify";
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out;
};

int cmd_attack(const AttackArgs& args, const std::string& command) {
    const std::vector<double> epsilons = parse_double_list(args.eps, "--eps");
    if (epsilons.empty()) throw ConfigError("--eps must list at least one budget");
    if (args.samples < 1) throw ConfigError("--samples must be >= 1");

    Timer total;
    const ToyModel model = load_model(args.model_dir);
    const std::vector<SyntheticSample> dataset =
        generate_synthetic_dataset(args.seed, args.samples, model.height, model.classes);

    CertConfig cfg;
    cfg.lipschitz = model.global_lip();
    cfg.norm_order = 2.0;  // the attack is l2; certificates must match
    cfg.epsilons = epsilons;

    AttackConfig attack_cfg;
    attack_cfg.steps = args.steps;
    attack_cfg.restarts = args.restarts;
    attack_cfg.step_size = args.step_size;
    attack_cfg.seed = args.seed;
    if (args.objective == "misclassify") {
        attack_cfg.objective = AttackConfig::Objective::MaximizeMisclassified;
    } else if (args.objective == "margin") {
        attack_cfg.objective = AttackConfig::Objective::UntargetedMargin;
    } else {
        throw ConfigError("--objective must be 'misclassify' or 'margin'");
    }

    Timer attack_timer;
    const int threads = args.threads > 0 ? args.threads : machine_parallelism();
    std::vector<CertificateReport> cert(dataset.size());
    std::vector<std::vector<double>> attacked(dataset.size());
    std::vector<double> clean(dataset.size());
    parallel_for(dataset.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const LogitTensor logits = forward(model, dataset[i].image);
            cert[i] =
                certify_report(logits, &dataset[i].mask, cfg, Metric::PixelAccuracy, 1);
            clean[i] = cert[i].clean_value;
            AttackConfig sample_cfg = attack_cfg;
            sample_cfg.seed = attack_cfg.seed + i;
            const AttackSweep sweep = empirical_accuracy_under_attack(
                model, {dataset[i]}, epsilons, sample_cfg);
            attacked[i].resize(epsilons.size());
            for (std::size_t e = 0; e < epsilons.size(); ++e) {
                attacked[i][e] = sweep.per_sample[e][0];
            }
        }
    });
    const double attack_ms = attack_timer.ms();

    // Certified lower bounds can never exceed the attacked accuracy. The
    // 1e-9 slack covers only division rounding; any real violation is at
    // least one pixel (1/|S|) wide.
    bool sound = true;
    json per_image = json::array();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        json rows = json::array();
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
            const double crpa_value = cert[i].per_epsilon[e].value;
            const double acc = attacked[i][e];
            if (crpa_value > acc + 1e-9) sound = false;
            rows.push_back({{"epsilon", epsilons[e]},
                            {"crpa", crpa_value},
                            {"attacked_accuracy", acc},
                            {"gap", acc - crpa_value}});
        }
        per_image.push_back(
            {{"index", i}, {"clean_accuracy", clean[i]}, {"per_epsilon", std::move(rows)}});
    }

    json agg = json::array();
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
        double mean_crpa = 0.0;
        double mean_acc = 0.0;
        double min_gap = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            mean_crpa += cert[i].per_epsilon[e].value;
            mean_acc += attacked[i][e];
            min_gap = std::min(min_gap, attacked[i][e] - cert[i].per_epsilon[e].value);
        }
        mean_crpa /= static_cast<double>(dataset.size());
        mean_acc /= static_cast<double>(dataset.size());
        agg.push_back({{"epsilon", epsilons[e]},
                       {"mean_crpa", mean_crpa},
                       {"mean_attacked_accuracy", mean_acc},
                       {"min_gap", min_gap}});
    }

    RunManifest manifest;
    manifest.command = command;
    manifest.threads = threads;
    manifest.seed = args.seed;
    manifest.inputs.push_back(
        {args.model_dir + "/model.json", file_digest(args.model_dir + "/model.json")});
    manifest.timings_ms = {{"attack", attack_ms}, {"total", total.ms()}};

    json doc{{"manifest", manifest_to_json(manifest)},
             {"config",
              {{"model", args.model_dir},
               {"lipschitz", cfg.lipschitz},
               {"p", cfg.norm_order},
               {"epsilons", epsilons},
               {"samples", args.samples},
               {"steps", args.steps},
               {"restarts", args.restarts},
               {"objective", args.objective}}},
             {"per_image", std::move(per_image)},
             {"aggregate", {{"per_epsilon", std::move(agg)}, {"sound", sound}}}};
    emit(doc, args.out);

    if (!sound) {
        std::cerr << "soundness violation: a certificate exceeded the attacked accuracy\n";
        return kExitSoundness;
    }
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string out_dir;
    std::uint64_t seed = 0;
    int samples = 200;
    int holdout = 50;
    int size = 16;
    int classes = 2;
    int hidden = 8;
    int blocks = 2;
    int steps = 500;
    double lr = 0.3;
    double tau = 5.0;
};

int cmd_train(const TrainArgs& args, const std::string& command) {
    Timer total;
    const std::vector<SyntheticSample> train_set =
        generate_synthetic_dataset(args.seed, args.samples, args.size, args.classes);
    const std::vector<SyntheticSample> holdout_set = generate_synthetic_dataset(
        args.seed + 1, args.holdout, args.size, args.classes);

    ToyModel model = build_toy_model(args.seed, 1, args.classes, args.hidden, args.blocks,
                                     args.size, args.size);
    model = train_toy(std::move(model), train_set, args.steps, args.lr, args.tau);
    save_model(model, args.out_dir);

    const double train_acc = pixel_accuracy(model, train_set);
    const double holdout_acc = pixel_accuracy(model, holdout_set);

    RunManifest manifest;
    manifest.command = command;
    manifest.seed = args.seed;
    manifest.timings_ms = {{"total", total.ms()}};

    json doc{{"manifest", manifest_to_json(manifest)},
             {"config",
              {{"samples", args.samples},
               {"holdout", args.holdout},
               {"size", args.size},
               {"classes", args.classes},
               {"hidden", args.hidden},
               {"blocks", args.blocks},
               {"steps", args.steps},
               {"lr", args.lr},
               {"tau", args.tau}}},
             {"result",
              {{"model_dir", args.out_dir},
               {"train_accuracy", train_acc},
               {"holdout_accuracy", holdout_acc},
               {"global_lip", model.global_lip()},
               {"recomputed_lip", lipschitz_upper_bound(model)}}}};
    std::cout << doc.dump(2) << "\n";
    return 0;
}

// --------------------------------------------------------------- selftest

struct SelfTestArgs {
    int instances = 1000;
    std::uint64_t seed = 7;
    bool inject_bug = false;
};

int cmd_selftest(const SelfTestArgs& args) {
    Rng rng(args.seed);
    int failures = 0;

    // Knapsack sweeps: engine n_sup / generalized_radius vs enumeration.
    {
        int checked = 0;
        int mismatches = 0;
        for (int inst = 0; inst < args.instances; ++inst) {
            const int n = 1 + static_cast<int>(rng.uniform_int(12));
            RadiusMap radii;
            radii.radius.resize(n);
            std::vector<double> costs(n);
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                const double r = rng.uniform();
                radii.radius[i] = r;
                costs[i] = r * r;
                total += costs[i];
            }
            const SortedRadii sorted = sort_radii(radii, 2.0);
            const double eps = std::sqrt(total) * rng.uniform();
            std::int64_t engine = n_sup(sorted, eps, 2.0);
            if (args.inject_bug && inst == 0) engine += 1;
            const int exact = exact_max_flips(costs, eps * eps);
            if (engine != exact) ++mismatches;
            const int target = 1 + static_cast<int>(rng.uniform_int(n));
            const double engine_radius = generalized_radius(sorted, target, 2.0);
            const double exact_budget = exact_min_budget(costs, target);
            if (std::abs(engine_radius * engine_radius - exact_budget) > 1e-9) {
                ++mismatches;
            }
            ++checked;
        }
        std::cout << "knapsack oracle sweep: " << checked << " instances, " << mismatches
                  << " mismatches\n";
        if (mismatches > 0) ++failures;
    }

    // Worst-case IoU sweeps on random logit instances.
    {
        int checked = 0;
        int mismatches = 0;
        const int iou_instances = std::max(1, args.instances / 2);
        for (int inst = 0; inst < iou_instances; ++inst) {
            const int h = 4;
            const int w = 4;
            const int K = 3;
            LogitTensor logits;
            logits.classes = K;
            logits.height = h;
            logits.width = w;
            logits.values.resize(static_cast<std::size_t>(K) * h * w);
            for (double& v : logits.values) v = rng.uniform(-1.0, 1.0);
            LabelMask labels;
            labels.height = h;
            labels.width = w;
            labels.labels.resize(static_cast<std::size_t>(h) * w);
            for (auto& v : labels.labels) {
                v = static_cast<std::int32_t>(rng.uniform_int(K));
            }
            const int k = static_cast<int>(rng.uniform_int(K));
            CertConfig cfg;
            cfg.lipschitz = 1.0;
            cfg.norm_order = 2.0;
            const double eps = rng.uniform(0.0, 2.0);
            cfg.epsilons = {eps};

            // Reference costs straight from the margin definitions.
            std::vector<double> tp_costs;
            std::vector<double> tn_costs;
            int s_k = 0;
            int clean_fp = 0;
            const auto [m, preds] = margins_and_predictions(logits);
            const auto [tp_raw, tn_raw] = class_margins(logits, k);
            const double scale = margin_scale(cfg);
            for (std::size_t pix = 0; pix < labels.labels.size(); ++pix) {
                if (labels.labels[pix] == k) {
                    ++s_k;
                    if (preds.labels[pix] == k) {
                        const double c = scale * tp_raw.margin[pix];
                        tp_costs.push_back(c * c);
                    } else {
                        tp_costs.push_back(0.0);
                    }
                } else {
                    if (preds.labels[pix] == k) {
                        ++clean_fp;
                    } else {
                        const double c = scale * tn_raw.margin[pix];
                        tn_costs.push_back(c * c);
                    }
                }
            }
            if (s_k == 0) continue;
            double engine = class_iou_worst_case(logits, labels, cfg, k)[0];
            if (args.inject_bug && checked == 0) engine += 0.25;
            const double exact =
                exact_worst_iou(tp_costs, tn_costs, s_k, clean_fp, eps * eps);
            if (std::abs(engine - exact) > 1e-9) ++mismatches;
            ++checked;
        }
        std::cout << "worst-iou oracle sweep: " << checked << " instances, " << mismatches
                  << " mismatches\n";
        if (mismatches > 0) ++failures;
    }

    // Empirical Lipschitz soundness on a small random model.
    {
        const ToyModel model = build_toy_model(args.seed, 1, 2, 8, 2, 12, 12);
        const double bound = lipschitz_upper_bound(model);
        const int pairs = std::min(1000, std::max(100, args.instances));
        int violations = 0;
        for (int i = 0; i < pairs; ++i) {
            FeatureMap a, b;
            a.channels = b.channels = 1;
            a.height = b.height = 12;
            a.width = b.width = 12;
            a.values.resize(144);
            b.values.resize(144);
            for (std::size_t j = 0; j < 144; ++j) {
                a.values[j] = rng.uniform();
                b.values[j] = rng.uniform();
            }
            const LogitTensor fa = forward(model, a);
            const LogitTensor fb = forward(model, b);
            double dx = 0.0;
            double df = 0.0;
            for (std::size_t j = 0; j < a.values.size(); ++j) {
                const double d = a.values[j] - b.values[j];
                dx += d * d;
            }
            for (std::size_t j = 0; j < fa.values.size(); ++j) {
                const double d = fa.values[j] - fb.values[j];
                df += d * d;
            }
            if (std::sqrt(df) > bound * std::sqrt(dx) * (1.0 + 1e-6)) ++violations;
        }
        std::cout << "lipschitz soundness: " << pairs << " pairs, " << violations
                  << " violations\n";
        if (violations > 0) ++failures;
    }

    // Analytic gradient vs central finite differences.
    {
        int bad = 0;
        for (int s = 0; s < 10; ++s) {
            const ToyModel model = build_toy_model(args.seed + 100 + s, 1, 2, 4, 1, 8, 8);
            std::vector<SyntheticSample> data =
                generate_synthetic_dataset(args.seed + 200 + s, 1, 8, 2);
            const Objective obj = Objective::masked_ce(3.0);
            const FeatureMap& image = data[0].image;
            const FeatureMap grad = input_gradient(model, image, obj, data[0].mask);
            const double h = 1e-4;
            double num = 0.0;
            double den = 0.0;
            FeatureMap probe = image;
            for (std::size_t i = 0; i < image.values.size(); ++i) {
                probe.values[i] = image.values[i] + h;
                const double up = objective_value(model, probe, obj, data[0].mask);
                probe.values[i] = image.values[i] - h;
                const double down = objective_value(model, probe, obj, data[0].mask);
                probe.values[i] = image.values[i];
                const double fd = (up - down) / (2.0 * h);
                num += (fd - grad.values[i]) * (fd - grad.values[i]);
                den += fd * fd;
            }
            const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
            if (rel > 1e-3) ++bad;
        }
        std::cout << "gradient check: 10 seeds, " << bad << " failures\n";
        if (bad > 0) ++failures;
    }

    if (failures > 0) {
        std::cout << "selftest: FAIL (" << failures << " suites)\n";
        return kExitSelfTest;
    }
    std::cout << "selftest: PASS\n";
    return 0;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
    std::string size = "1024x1024";
    int classes = 19;
    std::string metric = "pixel-acc";
    int class_index = 11;
    int reps = 10;
    int threads = 0;
    double lipschitz = 1.0;
    double p = 2.0;
    std::string eps = "0.05,0.1,0.2";
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_bench(const BenchArgs& args, const std::string& command) {
    int height = 0;
    int width = 0;
    {
        const auto x = args.size.find('x');
        if (x == std::string::npos) {
            throw ConfigError("--size must look like 1024x1024");
        }
        try {
            height = std::stoi(args.size.substr(0, x));
            width = std::stoi(args.size.substr(x + 1));
        } catch (const std::exception&) {
            throw ConfigError("--size must look like 1024x1024");
        }
        if (height < 1 || width < 1) throw ConfigError("--size must be positive");
    }
    const Metric metric = metric_from_name(args.metric);
    CertConfig cfg;
    cfg.lipschitz = args.lipschitz;
    cfg.norm_order = args.p;
    cfg.epsilons = parse_double_list(args.eps, "--eps");
    cfg.class_index = metric == Metric::ClassIou ? args.class_index : -1;
    validate(cfg);
    if (args.reps < 1) throw ConfigError("--reps must be >= 1");
    const int threads = args.threads > 0 ? args.threads : machine_parallelism();

    Rng rng(args.seed);
    const std::size_t plane = static_cast<std::size_t>(height) * width;

    std::vector<double> runs_ms;
    runs_ms.reserve(args.reps);
    for (int rep = 0; rep < args.reps; ++rep) {
        LogitTensor logits;
        logits.classes = args.classes;
        logits.height = height;
        logits.width = width;
        logits.values.resize(plane * args.classes);
        for (double& v : logits.values) v = rng.uniform(-1.0, 1.0);
        LabelMask labels;
        labels.height = height;
        labels.width = width;
        labels.labels.resize(plane);
        for (auto& v : labels.labels) {
            v = static_cast<std::int32_t>(rng.uniform_int(args.classes));
        }
        Timer t;
        const CertificateReport report =
            certify_report(logits, &labels, cfg, metric, threads);
        runs_ms.push_back(t.ms());
        (void)report;
    }

    std::vector<double> sorted_runs = runs_ms;
    std::sort(sorted_runs.begin(), sorted_runs.end());
    const double median = sorted_runs[sorted_runs.size() / 2];

    RunManifest manifest;
    manifest.command = command;
    manifest.threads = threads;
    manifest.seed = args.seed;
    manifest.timings_ms = {{"total", 0.0}};

    json doc{{"manifest", manifest_to_json(manifest)},
             {"config",
              {{"size", args.size},
               {"classes", args.classes},
               {"metric", args.metric},
               {"class_index", cfg.class_index},
               {"reps", args.reps},
               {"threads", threads},
               {"epsilons", cfg.epsilons}}},
             {"runs_ms", runs_ms},
             {"stats",
              {{"min", sorted_runs.front()},
               {"median", median},
               {"max", sorted_runs.back()}}}};
    emit(doc, args.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"certified robustness for segmentation under lp attacks"};
    app.require_subcommand(1);
    const std::string command = join_args(argc, argv);

    CertifyArgs certify_args;
    CLI::App* certify = app.add_subcommand("certify", "compute certificates from logits");
    certify->add_option("--config", certify_args.config_path,
                        "JSON config supplying the same keys; flags win");
    certify->add_option("--logits", certify_args.logits_path, "SEGT logits (K,H,W) or (N,K,H,W)");
    certify->add_option("--labels", certify_args.labels_path, "SEGT labels (H,W) or (N,H,W)");
    certify->add_option("--metric", certify_args.metric,
                        "pixel-acc | fnr | stability | class-iou");
    certify->add_option("--lipschitz", certify_args.lipschitz, "global Lipschitz bound");
    certify->add_option("--p", certify_args.p, "norm order, 1 <= p < inf");
    certify->add_option("--eps", certify_args.eps, "comma-separated budgets");
    certify->add_option("--gamma", certify_args.gamma, "comma-separated fractions in (0,1]");
    certify->add_option("--class", certify_args.class_index,
                        "class index for class-iou / fnr positive class");
    certify->add_option("--ignore-label", certify_args.ignore_label, "ignored label value");
    certify->add_option("--threads", certify_args.threads, "worker threads (0 = machine)");
    certify->add_option("--out", certify_args.out, "report path (default stdout)");
    certify->add_option("--seed", certify_args.seed, "recorded in the manifest");

    AttackArgs attack_args;
    CLI::App* attack = app.add_subcommand("attack", "attack a saved model and compare to CRPA");
    attack->add_option("--model", attack_args.model_dir, "model directory")->required();
    attack->add_option("--eps", attack_args.eps, "comma-separated l2 budgets");
    attack->add_option("--samples", attack_args.samples, "synthetic test samples");
    attack->add_option("--steps", attack_args.steps, "PGD steps");
    attack->add_option("--restarts", attack_args.restarts, "PGD restarts");
    attack->add_option("--step-size", attack_args.step_size, "PGD step size (0 = auto)");
    attack->add_option("--objective", attack_args.objective, "misclassify | margin");
    attack->add_option("--seed", attack_args.seed, "dataset and attack seed");
    attack->add_option("--threads", attack_args.threads, "worker threads (0 = machine)");
    attack->add_option("--out", attack_args.out, "report path (default stdout)");

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train the toy Lipschitz model");
    train->add_option("--out", train_args.out_dir, "model output directory")->required();
    train->add_option("--seed", train_args.seed, "init and dataset seed");
    train->add_option("--samples", train_args.samples, "training samples");
    train->add_option("--holdout", train_args.holdout, "held-out samples");
    train->add_option("--size", train_args.size, "image side length");
    train->add_option("--classes", train_args.classes, "2 or 3");
    train->add_option("--hidden", train_args.hidden, "hidden channels (even)");
    train->add_option("--blocks", train_args.blocks, "residual blocks");
    train->add_option("--steps", train_args.steps, "SGD steps");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--tau", train_args.tau, "cross-entropy temperature");

    SelfTestArgs selftest_args;
    CLI::App* selftest = app.add_subcommand("selftest", "oracle, Lipschitz, and gradient sweeps");
    selftest->add_option("--instances", selftest_args.instances, "instances per sweep");
    selftest->add_option("--seed", selftest_args.seed, "sweep seed");
    selftest->add_flag("--inject-bug", selftest_args.inject_bug)->group("");

    BenchArgs bench_args;
    CLI::App* bench = app.add_subcommand("bench", "time certification on random maps");
    bench->add_option("--size", bench_args.size, "HxW, e.g. 1024x1024");
    bench->add_option("--classes", bench_args.classes, "class count");
    bench->add_option("--metric", bench_args.metric, "pixel-acc | fnr | stability | class-iou");
    bench->add_option("--class", bench_args.class_index, "class index for class-iou");
    bench->add_option("--reps", bench_args.reps, "repetitions");
    bench->add_option("--threads", bench_args.threads, "worker threads (0 = machine)");
    bench->add_option("--lipschitz", bench_args.lipschitz, "global Lipschitz bound");
    bench->add_option("--p", bench_args.p, "norm order");
    bench->add_option("--eps", bench_args.eps, "comma-separated budgets");
    bench->add_option("--seed", bench_args.seed, "logit map seed");
    bench->add_option("--out", bench_args.out, "report path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitBadFlags;
    }

    try {
        if (certify->parsed()) {
            apply_config_file(*certify, certify_args);
            return cmd_certify(certify_args, command);
        }
        if (attack->parsed()) return cmd_attack(attack_args, command);
        if (train->parsed()) return cmd_train(train_args, command);
        if (selftest->parsed()) return cmd_selftest(selftest_args);
        if (bench->parsed()) return cmd_bench(bench_args, command);
    } catch (const MissingLabelsError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFlags;
    } catch (const UndefinedMetricError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUndefinedMetric;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadFlags;
    } catch (const TensorIoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
