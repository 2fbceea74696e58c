// Command-line front end: generate, filter, train, predict, evaluate, experiment.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "elp/config.hpp"
#include "elp/dataio.hpp"
#include "elp/domain.hpp"
#include "elp/error.hpp"
#include "elp/filter.hpp"
#include "elp/nn/parameters.hpp"
#include "elp/pipeline.hpp"

namespace {

using namespace elp;
using pipeline::Phase;

struct Options {
    std::string config;
    std::string out;
    std::string data;
    std::string report;
    std::string table;
    std::string predictions;
    std::string model;
    std::string pred;
    std::string truth;
    std::string column;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::optional<std::size_t> l_token;
    std::string eit;
    std::string zero_init;
    std::optional<std::size_t> d_model;
    std::optional<int> epochs;
    std::string target;
    std::vector<std::string> sets;
};

std::string keys_footer(const std::string& sub) {
    std::string out = "Config keys (key=value file via --config or --set; flags win):\n";
    for (const auto& [k, v] : config::documented_keys(sub)) out += "  " + k + " (default " + v + ")\n";
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << text;
}

void require_file(const std::string& path) {
    if (!std::filesystem::is_regular_file(path)) throw Error(ErrorKind::IoError, "no such file: " + path);
}

// Config file, then --set pairs, then dedicated flags.
config::RunConfig resolve(const Options& o, const std::string& sub, config::KeyValues base = {}) {
    config::KeyValues kv = std::move(base);
    if (!o.config.empty()) {
        for (const auto& [k, v] : config::load_kv(o.config)) kv[k] = v;
    }
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::ParseError, "--set expects key=value, got '" + s + "'");
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (o.seed) kv[sub == "experiment" ? "seeds" : "seed"] = std::to_string(*o.seed);
    if (!o.seeds.empty()) kv["seeds"] = o.seeds;
    if (o.l_token) kv[sub == "experiment" ? "elp_token_len" : "token_len"] = std::to_string(*o.l_token);
    if (!o.eit.empty()) kv["eit_enabled"] = o.eit;
    if (!o.zero_init.empty()) kv["zero_init_decoder"] = o.zero_init;
    if (o.d_model) kv["d_model"] = std::to_string(*o.d_model);
    if (o.epochs) kv["epochs"] = std::to_string(*o.epochs);
    if (!o.target.empty()) kv["target"] = o.target;
    return config::RunConfig::from_kv(kv);
}

data::SessionSet load(const std::string& path) {
    return pipeline::in_phase(Phase::Load, [&] {
        require_file(path);
        return data::partition(data::load_sessions(path));
    });
}

int cmd_generate(const Options& o) {
    const auto cfg = resolve(o, "generate");
    const auto records = data::generate_synthetic(cfg.generator);
    data::write_sessions(o.out, records);
    std::size_t points = 0;
    for (const auto& r : records) points += r.bl.size();
    std::printf("generated %zu records, %zu points -> %s\n", records.size(), points, o.out.c_str());
    return 0;
}

int cmd_filter(const Options& o) {
    const auto cfg = resolve(o, "filter");
    const auto sessions = load(o.data);
    const auto result = pipeline::in_phase(Phase::Filter, [&] {
        return filter::filter_sessions(sessions.provider_sharing, sessions.consumer_sharing, cfg.filter);
    });
    std::vector<domain::EnergyHistoryRecord> kept;
    for (std::size_t i = 0; i < result.provider.sharing.size(); ++i) {
        kept.push_back(result.provider.sharing[i]);
        kept.push_back(result.consumer.sharing[i]);
    }
    kept.insert(kept.end(), sessions.provider_idle.begin(), sessions.provider_idle.end());
    kept.insert(kept.end(), sessions.consumer_idle.begin(), sessions.consumer_idle.end());
    pipeline::in_phase(Phase::Report, [&] {
        data::write_sessions(o.out, kept);
        write_file(o.report.empty() ? o.out + ".report.csv" : o.report, filter::report_csv(result.report));
    });
    std::size_t sharing_points = 0;
    for (const auto& r : result.provider.sharing) sharing_points += r.bl.size();
    for (const auto& r : result.consumer.sharing) sharing_points += r.bl.size();
    std::printf("kept %zu sessions, removed %zu sessions (%zu points), %zu sharing points remain -> %s\n",
                result.report.kept_session_ids.size(), result.report.outlier_session_ids.size(),
                result.report.points_removed, sharing_points, o.out.c_str());
    return 0;
}

const pipeline::PreparedTarget& pick(const pipeline::PreparedData& d, pipeline::Target t) {
    return t == pipeline::Target::ProviderLoss ? d.provider : d.consumer;
}

int cmd_train(const Options& o) {
    const auto cfg = resolve(o, "train");
    const auto sessions = load(o.data);
    const auto prepared = pipeline::prepare(sessions, cfg.filter, cfg.fractions, cfg.apply_filter);
    pipeline::RunOptions opts;
    opts.train_stride = cfg.train_stride;
    opts.keep_checkpoint = true;
    const auto run = pipeline::train_forecaster(pick(prepared, cfg.target), cfg.model, opts);
    pipeline::in_phase(Phase::Report, [&] {
        write_file(o.out, run.checkpoint);
        write_file(o.out + ".cfg", config::format_kv(cfg.to_kv()));
    });
    std::printf("target=%s epochs_run=%zu best_epoch=%d val_mse=%.6g test_mse=%.6g test_mae=%.6g -> %s\n",
                pipeline::to_string(cfg.target).c_str(), run.history.val_loss.size(), run.history.best_epoch,
                run.val_mse, run.test.mse, run.test.mae, o.out.c_str());
    return 0;
}

int cmd_predict(const Options& o) {
    const auto sidecar = pipeline::in_phase(Phase::Load, [&] {
        require_file(o.model);
        require_file(o.model + ".cfg");
        return config::load_kv(o.model + ".cfg");
    });
    const auto cfg = resolve(o, "predict", sidecar);
    const auto sessions = load(o.data);
    const auto prepared = pipeline::prepare(sessions, cfg.filter, cfg.fractions, cfg.apply_filter);
    const auto& target = pick(prepared, cfg.target);
    model::Easeformer net(cfg.model);
    pipeline::in_phase(Phase::Load, [&] { nn::checkpoint_from_string(net.parameters(), read_file(o.model)); });
    std::vector<pipeline::EvalWindow> windows;
    std::vector<std::vector<double>> preds;
    pipeline::in_phase(Phase::Predict, [&] {
        windows = pipeline::eval_windows(target, target.test, cfg.model, pipeline::fit_table(target, cfg.model));
        if (windows.empty()) throw Error(ErrorKind::InsufficientHistory, "no test session has L_x rows of history");
        for (const auto& w : windows) {
            auto p = net.predict(w.sample.x_en, w.sample.x_de);
            for (double& v : p) v = target.stats.target_inverse(v);
            preds.push_back(std::move(p));
        }
    });
    pipeline::in_phase(Phase::Report, [&] { write_file(o.out, pipeline::predictions_csv(windows, preds)); });
    std::printf("predicted %zu sessions -> %s\n", windows.size(), o.out.c_str());
    return 0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    return out;
}

std::vector<double> read_column(const std::string& path, std::string column) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, path + ": missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.empty()) throw Error(ErrorKind::ParseError, path + ": empty header");
    std::size_t col = header.size() - 1;
    if (!column.empty()) {
        const auto it = std::find(header.begin(), header.end(), column);
        if (it == header.end()) throw Error(ErrorKind::ParseError, path + ": no column '" + column + "'");
        col = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw Error(ErrorKind::ParseError, path + " row " + std::to_string(row) + ": field count mismatch");
        }
        try {
            std::size_t used = 0;
            values.push_back(std::stod(f[col], &used));
            if (used != f[col].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, path + " row " + std::to_string(row) + ": not a number");
        }
    }
    return values;
}

int cmd_evaluate(const Options& o) {
    std::vector<double> pred, truth;
    pipeline::in_phase(Phase::Load, [&] {
        require_file(o.pred);
        if (o.truth.empty()) {
            pred = read_column(o.pred, o.column.empty() ? "prediction" : o.column);
            truth = read_column(o.pred, "truth");
        } else {
            require_file(o.truth);
            pred = read_column(o.pred, o.column);
            truth = read_column(o.truth, o.column);
        }
    });
    const auto [mse, mae] = pipeline::in_phase(Phase::Estimate, [&] {
        return std::make_pair(domain::mse(pred, truth), domain::mae(pred, truth));
    });
    char buf[128];
    std::snprintf(buf, sizeof buf, "metric,value\nMSE,%.10g\nMAE,%.10g\n", mse, mae);
    if (!o.out.empty()) pipeline::in_phase(Phase::Report, [&] { write_file(o.out, buf); });
    std::printf("n=%zu MSE=%.10g MAE=%.10g\n", pred.size(), mse, mae);
    return 0;
}

int cmd_experiment(const Options& o) {
    const auto cfg = resolve(o, "experiment");
    const auto sessions = load(o.data);
    pipeline::ExperimentConfig ec;
    ec.base = cfg.model;
    ec.token_lens = cfg.token_lens;
    ec.seeds = cfg.seeds;
    ec.elp_token_len = cfg.elp_token_len;
    ec.filter = cfg.filter;
    ec.apply_filter = cfg.apply_filter;
    ec.fractions = cfg.fractions;
    ec.options.train_stride = cfg.train_stride;
    ec.predictions_dir = o.predictions;
    ec.threads = pipeline::default_threads();
    const auto report = pipeline::run_experiment_grid(sessions, ec);
    const std::string table = report.to_table();
    pipeline::in_phase(Phase::Report, [&] {
        if (!report.all_finite()) throw Error(ErrorKind::NumericsError, "report contains non-finite values");
        write_file(o.out, report.to_csv());
        write_file(o.table.empty() ? o.out + ".txt" : o.table, table);
        write_file(o.out + ".cfg", config::format_kv(cfg.to_kv()));
    });
    std::fputs(table.c_str(), stdout);
    return 0;
}

std::string one_line(std::string s) {
    for (char& c : s) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy loss prediction for wireless energy sharing sessions"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool model_flags) {
        sub->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
        sub->add_option("--set", o.sets, "override one config key (key=value), repeatable");
        sub->add_option("--seed", o.seed, "seed for generation and training");
        if (model_flags) {
            sub->add_option("--d-model", o.d_model, "model width");
            sub->add_option("--epochs", o.epochs, "training epochs");
        }
        sub->footer(keys_footer(sub->get_name()));
    };

    auto* gen = app.add_subcommand("generate", "write a synthetic session log");
    gen->add_option("--out", o.out, "output CSV")->required();
    common(gen, false);

    auto* filt = app.add_subcommand("filter", "remove outlier sessions with DBSCAN");
    filt->add_option("--data", o.data, "session log CSV")->required();
    filt->add_option("--out", o.out, "filtered session log CSV")->required();
    filt->add_option("--report", o.report, "filter report CSV (default <out>.report.csv)");
    common(filt, false);

    auto* train = app.add_subcommand("train", "train one forecaster and save a checkpoint");
    train->add_option("--data", o.data, "session log CSV")->required();
    train->add_option("--out", o.out, "checkpoint path; config goes to <out>.cfg")->required();
    train->add_option("--target", o.target, "provider or consumer")->check(CLI::IsMember({"provider", "consumer"}));
    train->add_option("--l-token", o.l_token, "start-token length");
    train->add_option("--eit", o.eit, "encoder input transformer")->check(CLI::IsMember({"on", "off"}));
    train->add_option("--zero-init", o.zero_init, "zero prediction block")->check(CLI::IsMember({"on", "off"}));
    common(train, true);

    auto* pred = app.add_subcommand("predict", "forecast the held-out sessions with a checkpoint");
    pred->add_option("--data", o.data, "session log CSV")->required();
    pred->add_option("--model", o.model, "checkpoint written by train")->required();
    pred->add_option("--out", o.out, "prediction CSV (session_id,minute_index,truth,prediction)")->required();
    pred->add_option("--config", o.config, "key=value overrides on top of <model>.cfg")->check(CLI::ExistingFile);
    pred->add_option("--set", o.sets, "override one config key (key=value), repeatable");
    pred->footer(keys_footer("predict"));

    auto* eval = app.add_subcommand("evaluate", "MSE and MAE between two series");
    eval->add_option("--pred", o.pred, "CSV with predictions")->required();
    eval->add_option("--truth", o.truth, "CSV with ground truth; without it the truth column of --pred is used");
    eval->add_option("--column", o.column, "column to compare (default: last column, or prediction)");
    eval->add_option("--out", o.out, "metrics CSV");
    eval->footer("Config keys: none.\n");

    auto* exp = app.add_subcommand("experiment", "model comparison grid plus regression and ELP summary");
    exp->add_option("--data", o.data, "session log CSV")->required();
    exp->add_option("--out", o.out, "report CSV; table goes to <out>.txt")->required();
    exp->add_option("--table", o.table, "aligned text report path");
    exp->add_option("--predictions", o.predictions, "directory for per-run prediction CSVs");
    exp->add_option("--seeds", o.seeds, "seed list, e.g. 0..9 or 0,1,2");
    exp->add_option("--l-token", o.l_token, "start-token length of the ELP summary rows");
    common(exp, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "elp: " << e.what() << "\n\n";
        const CLI::App* bad = &app;
        for (auto* sub : app.get_subcommands()) bad = sub;
        std::cerr << bad->help();
        return 2;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    try {
        if (sub == "generate") return cmd_generate(o);
        if (sub == "filter") return cmd_filter(o);
        if (sub == "train") return cmd_train(o);
        if (sub == "predict") return cmd_predict(o);
        if (sub == "evaluate") return cmd_evaluate(o);
        return cmd_experiment(o);
    } catch (const pipeline::PhaseError& e) {
        std::cerr << "elp: error phase=" << pipeline::to_string(e.phase()) << " kind=" << to_string(e.kind())
                  << " message=\"" << one_line(e.what()) << "\"\n";
    } catch (const Error& e) {
        std::cerr << "elp: error phase=" << (sub == "generate" ? "generate" : "config") << " kind=" << to_string(e.kind())
                  << " message=\"" << one_line(e.what()) << "\"\n";
    } catch (const std::exception& e) {
        std::cerr << "elp: error phase=" << sub << " kind=Internal message=\"" << one_line(e.what()) << "\"\n";
    }
    return 1;
}
