#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "msvdd/cli.hpp"
#include "msvdd/scoring.hpp"

namespace msvdd::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    fs::path out;
};

RunConfig resolve(const Common& c) {
    auto rc = load_run_config(c.config);
    if (c.seed) rc.synth.seed = rc.train.seed = *c.seed;
    if (c.mode) {
        try {
            rc.model.mode = model::parse_mode(*c.mode);
        } catch (const ContractError& e) {
            throw ConfigError(e.what());
        }
    }
    return rc;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void write_file(const fs::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw IoError(std::string("cannot open ") + what + " " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string(what) + " " + path.string() + ": " + e.what());
    }
}

train::TrainedArtifact load_artifact(const fs::path& path) {
    return train::artifact_from_json(read_json_file(path, "artifact"));
}

// Shapes in the manifest must agree with the model.
void check_lengths(const data::Manifest& m, const model::ModelConfig& mc) {
    if (m.audio_length != mc.audio_length || m.imu_length != mc.imu_length) {
        throw DimensionError("window shape mismatch: model expects L_A = " + std::to_string(mc.audio_length) +
                             ", L_I = " + std::to_string(mc.imu_length) + " but the dataset has L_A = " +
                             std::to_string(m.audio_length) + ", L_I = " + std::to_string(m.imu_length));
    }
}

json number_or_string(double v) {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : "-inf";
}

json prf1_json(const eval::Prf1& m) {
    return json{{"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"precision_undefined", m.precision_undefined},
                {"recall_undefined", m.recall_undefined},
                {"f1_undefined", m.f1_undefined},
                {"tp", m.tp},
                {"fp", m.fp},
                {"fn", m.fn},
                {"tn", m.tn}};
}

std::vector<bool> above(const std::vector<double>& scores, double threshold) {
    std::vector<bool> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold;
    return out;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const Common& c, std::ostream& out) {
    const auto rc = resolve(c);
    rc.synth.validate();
    const auto data = data::synth_generate(rc.synth);
    const auto m = data::export_synth(data, rc.synth, c.out);
    out << "wrote " << (c.out / "manifest.json").string() << "\n";
    out << "train: " << rc.synth.train_normal << " normal\n";
    out << "test: " << rc.synth.test_normal << " normal, " << rc.synth.test_collision << " collision, "
        << rc.synth.test_fault << " fault\n";
    out << "entries: " << m.entries.size() << "\n";
    return kOk;
}

int cmd_train(const Common& c, const fs::path& manifest_path, std::ostream& out, std::ostream& err) {
    auto rc = resolve(c);
    const auto manifest = data::read_manifest(manifest_path);
    if (rc.model_lengths_set) {
        check_lengths(manifest, rc.model);
    } else {
        rc.model.audio_length = manifest.audio_length;
        rc.model.imu_length = manifest.imu_length;
    }
    rc.model.validate();
    rc.train.validate(rc.model);

    std::size_t count = 0;
    for (const auto& e : manifest.entries) {
        if (e.split != "train") continue;
        ++count;
        if (e.label && *e.label != "normal") {
            throw ContractError("train split holds anomaly-labelled entry '" + e.id + "' (label " + *e.label +
                                "); training uses normal data only");
        }
    }
    if (count == 0) throw ContractError("manifest has no train entries");

    data::LoadOptions lo;
    lo.threads = rc.threads;
    const auto ds = data::load_split(manifest, "train", std::nullopt, lo);
    std::vector<model::WindowTensors> windows;
    windows.reserve(ds.windows.size());
    for (const auto& w : ds.windows) windows.push_back(data::to_tensors(w));

    std::string log = "epoch,total,msvdd,rec,reg,r2,lr,fraction_outside\n";
    auto result = train::train(windows, rc.model, rc.train, [&](const train::EpochLog& e) {
        log += std::to_string(e.epoch) + "," + eval::format_double(e.total) + "," + eval::format_double(e.msvdd) +
               "," + eval::format_double(e.rec) + "," + eval::format_double(e.reg) + "," +
               eval::format_double(e.r2) + "," + eval::format_double(e.lr) + "," +
               eval::format_double(e.fraction_outside) + "\n";
        err << "epoch " << e.epoch << "/" << rc.train.epochs << "  loss " << e.total << "  rec " << e.rec
            << "  R2 " << e.r2 << "\n";
    });
    result.artifact.normalization = ds.stats;

    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw IoError("cannot create " + c.out.string() + ": " + ec.message());
    write_file(c.out / "artifact.json", train::artifact_to_json(result.artifact).dump() + "\n");
    write_file(c.out / "train_log.csv", log);
    out << "trained on " << windows.size() << " windows (" << model::to_string(rc.model.mode) << ")\n";
    out << "delta* " << eval::format_double(result.artifact.delta_star) << "\n";
    out << "wrote " << (c.out / "artifact.json").string() << "\n";
    return kOk;
}

int cmd_score(const Common& c, const fs::path& artifact_path, const fs::path& manifest_path, const std::string& split,
              std::ostream& out) {
    const auto rc = resolve(c);
    const auto art = load_artifact(artifact_path);
    const auto manifest = data::read_manifest(manifest_path);
    check_lengths(manifest, art.model);
    if (!art.normalization) throw FormatError("artifact has no normalization statistics");

    data::LoadOptions lo;
    lo.threads = rc.threads;
    const auto ds = data::load_split(manifest, split, art.normalization, lo);
    const auto scored = train::score_dataset(art, ds);

    std::ostringstream csv;
    eval::write_scores_csv(csv, scored);
    write_file(c.out, csv.str());
    const auto flagged = std::count_if(scored.begin(), scored.end(), [](const auto& s) { return s.predicted; });
    out << "scored " << scored.size() << " windows from split '" << split << "', " << flagged << " flagged\n";
    out << "wrote " << c.out.string() << "\n";
    return kOk;
}

int cmd_eval(const Common& c, const fs::path& scores_path, const std::optional<fs::path>& roc_path,
             bool point_adjust, std::ostream& out) {
    std::ifstream in(scores_path);
    if (!in) throw IoError("cannot open scores " + scores_path.string());
    const auto rows = eval::read_scores_csv(in);

    std::vector<double> scores;
    std::vector<bool> labels, predicted;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].label) throw FormatError("scores: row " + std::to_string(i + 2) + " (" + rows[i].id + ") has no label");
        scores.push_back(rows[i].delta);
        labels.push_back(*rows[i].label);
        predicted.push_back(rows[i].predicted);
    }
    const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    const bool both = positives > 0 && positives < labels.size();

    json m{{"count", rows.size()}, {"positives", positives}, {"negatives", rows.size() - positives}};
    m["at_threshold"] = prf1_json(eval::prf1(predicted, labels));

    std::optional<eval::BestF1> best;
    if (positives > 0) best = eval::best_f1_threshold(scores, labels);
    if (best) {
        auto j = prf1_json(eval::prf1(above(scores, best->threshold), labels));
        j["threshold"] = number_or_string(best->threshold);
        m["best_f1"] = std::move(j);
    }
    std::optional<eval::Roc> roc;
    if (both) {
        roc = eval::roc_auc(scores, labels);
        m["auc"] = roc->auc;
    } else {
        m["warning"] = rows.empty() ? "no rows: AUC omitted"
                                    : "single-class labels: AUC omitted" +
                                          std::string(positives == 0 ? ", best-F1 omitted" : "");
    }
    if (point_adjust) {
        json pa;
        pa["at_threshold"] = prf1_json(eval::prf1(eval::point_adjust(predicted, labels), labels));
        if (best) {
            auto j = prf1_json(eval::prf1(eval::point_adjust(above(scores, best->threshold), labels), labels));
            j["threshold"] = number_or_string(best->threshold);
            pa["best_f1"] = std::move(j);
        }
        m["point_adjust"] = std::move(pa);
    }

    write_file(c.out, m.dump(2) + "\n");
    if (roc_path) {
        std::ostringstream csv;
        if (roc) {
            eval::write_roc_csv(csv, *roc);
        } else {
            csv << "fpr,tpr,threshold\n";
        }
        write_file(*roc_path, csv.str());
    }

    const auto& at = m["at_threshold"];
    out << "at delta*: precision " << at["precision"].get<double>() << " recall " << at["recall"].get<double>()
        << " f1 " << at["f1"].get<double>() << "\n";
    if (best) out << "best f1 " << best->f1 << "\n";
    if (roc) out << "auc " << roc->auc << "\n";
    if (m.contains("warning")) out << "warning: " << m["warning"].get<std::string>() << "\n";
    out << "wrote " << c.out.string() << "\n";
    return kOk;
}

int cmd_inspect(const fs::path& artifact_path, std::ostream& out) {
    const auto art = load_artifact(artifact_path);
    const auto& mc = art.model;
    const auto ext = stats::eigen_extremes(art.sigma_z);
    out << std::setprecision(10);
    out << "format_version  " << train::kArtifactVersion << "\n";
    out << "mode            " << model::to_string(mc.mode) << "\n";
    out << "L_A, L_I        " << mc.audio_length << ", " << mc.imu_length << "\n";
    out << "d, s            " << mc.d << ", " << mc.s << "\n";
    out << "tokens          audio " << mc.audio_tokens() << ", imu " << mc.imu_tokens() << "\n";
    std::size_t n = 0;
    for (const auto& [_, t] : art.params.tensors) n += t.size();
    out << "parameters      " << n << "\n";
    out << "R^2             " << model::radius_squared(art.params).item() << "\n";
    out << "delta*          " << art.delta_star << "\n";
    out << "mu_D            " << art.mu_d << "\n";
    out << "mu_rec          " << art.mu_rec << "\n";
    out << "w               " << art.train.w << "\n";
    if (mc.mode == model::Mode::euclidean) {
        out << "Sigma_z         Identity (euclidean mode, scoring ignores covariance)\n";
    } else {
        out << "MCD h           " << art.h << "\n";
    }
    out << "lambda_min      " << ext.lambda_min << "\n";
    out << "lambda_max      " << ext.lambda_max << "\n";
    out << "condition       " << ext.lambda_max / ext.lambda_min << "\n";
    if (art.normalization) {
        const auto& s = *art.normalization;
        out << "normalization   left " << s.left.mean << " +/- " << s.left.std << ", right " << s.right.mean << " +/- "
            << s.right.std << ", imu " << s.imu.mean << " +/- " << s.imu.std << "\n";
    }
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multimodal anomaly detection with a Mahalanobis soft-boundary ellipsoid", "msvdd"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    Common common;
    fs::path manifest, artifact, scores;
    std::optional<fs::path> roc;
    std::string split = "test";
    bool point_adjust = false;

    auto add_common = [&](CLI::App* sub, bool with_out, bool out_required) {
        sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Seed for synthesis and training");
        sub->add_option("--mode", common.mode, "mahalanobis or euclidean")
            ->check(CLI::IsMember({"mahalanobis", "euclidean"}));
        if (with_out) {
            auto* o = sub->add_option("--out", common.out, "Output path");
            if (out_required) o->required();
        }
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset (WAV + CSV + manifest)");
    add_common(synth, true, true);

    auto* trn = app.add_subcommand("train", "Train on the manifest's train split");
    add_common(trn, true, true);
    trn->add_option("--manifest", manifest, "Dataset manifest")->required();

    auto* score = app.add_subcommand("score", "Score one split with a trained artifact");
    add_common(score, true, true);
    score->add_option("--artifact", artifact, "Artifact JSON")->required();
    score->add_option("--manifest", manifest, "Dataset manifest")->required();
    score->add_option("--split", split, "Manifest split to score");

    auto* ev = app.add_subcommand("eval", "Metrics from a labelled scores CSV");
    add_common(ev, true, true);
    ev->add_option("--scores", scores, "Scores CSV")->required();
    ev->add_option("--roc", roc, "Also write the ROC curve here");
    ev->add_flag("--point-adjust", point_adjust, "Add point-adjusted metrics");

    auto* insp = app.add_subcommand("inspect", "Summarize an artifact");
    add_common(insp, false, false);
    insp->add_option("--artifact", artifact, "Artifact JSON")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(common, out);
        if (trn->parsed()) return cmd_train(common, manifest, out, err);
        if (score->parsed()) return cmd_score(common, artifact, manifest, split, out);
        if (ev->parsed()) return cmd_eval(common, scores, roc, point_adjust, out);
        if (insp->parsed()) return cmd_inspect(artifact, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace msvdd::cli
