// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <signal.h>
#include <stdlib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <string>

#include "cxr/cxr.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool json_out = false;
};

// Owns a string handed out by the C API.
struct CString {
    char* p = nullptr;
    ~CString() { cxr_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

int fail(cxr_status st) {
    std::fprintf(stderr, "cxr: error: %s (%s)\n", cxr_last_error(), cxr_status_name(st));
    return st == CXR_E_INVALID_ARGUMENT || st == CXR_E_NOT_FOUND ? 2 : 1;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
    return buf;
}

void emit_json(const std::string& s) { std::cout << json::parse(s).dump(2) << "\n"; }

// Blocks until SIGINT or SIGTERM. Signals are masked in main() before any
// library thread starts so only this wait sees them.
void wait_for_signal() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
}

int run_train(const Globals& g, const json& opts) {
    CString out;
    json o = opts;
    o["seed"] = g.seed;
    auto st = cxr_train(o.dump().c_str(), &out.p);
    if (st != CXR_OK) return fail(st);
    if (g.json_out) {
        emit_json(out.str());
        return 0;
    }
    auto r = json::parse(out.str());
    std::cout << "source " << r["source"].get<std::string>() << ": " << r["train_records"] << " train / "
              << r["test_records"] << " test\n"
              << "epochs " << r["epochs_run"] << ", best " << r["best_epoch"]
              << (r["stopped_early"].get<bool>() ? " (early stop)" : "") << "\n\n"
              << r["report"]["text"].get<std::string>() << "\n";
    if (!r["roc_auc"].is_null()) std::cout << "roc_auc " << pct(r["roc_auc"].get<double>()) << "\n";
    std::cout << "digest " << r["digest"].get<std::string>() << "\n";
    std::cout << "parent " << r["parent"].get<std::string>() << "\n";
    if (!r["out"].get<std::string>().empty()) std::cout << "wrote " << r["out"].get<std::string>() << "\n";
    return 0;
}

int run_compress(const Globals& g, const std::string& in, const std::string& outp, const json& opts) {
    CString out;
    auto st = cxr_compress(in.c_str(), outp.c_str(), opts.dump().c_str(), &out.p);
    if (st != CXR_OK) return fail(st);
    if (g.json_out) {
        emit_json(out.str());
        return 0;
    }
    auto r = json::parse(out.str());
    char ratio[32];
    std::snprintf(ratio, sizeof ratio, "%.2f", r["ratio"].get<double>());
    std::cout << "original   " << r["original_size"] << " bytes\n"
              << "compressed " << r["compressed_size"] << " bytes\n"
              << "ratio      " << ratio << "x\n"
              << "digest     " << r["compressed_digest"].get<std::string>() << "\n";
    return 0;
}

int run_report(const Globals& g, const std::string& path) {
    CString out;
    auto st = cxr_report(path.c_str(), &out.p);
    if (st != CXR_OK) return fail(st);
    if (g.json_out) {
        emit_json(out.str());
        return 0;
    }
    auto r = json::parse(out.str());
    std::cout << r["report"]["text"].get<std::string>();
    if (r["roc_auc"].is_null()) std::cout << "\nroc_auc undefined (one class only)\n";
    else std::cout << "\nroc_auc " << pct(r["roc_auc"].get<double>()) << "\n";
    return 0;
}

int run_heatmap(const Globals& g, const std::string& model, const std::string& image, const std::string& outp,
                const json& opts) {
    CString out;
    auto st = cxr_heatmap(model.c_str(), image.c_str(), outp.c_str(), opts.dump().c_str(), &out.p);
    if (st != CXR_OK) return fail(st);
    if (g.json_out) {
        emit_json(out.str());
        return 0;
    }
    auto r = json::parse(out.str());
    char p[32];
    std::snprintf(p, sizeof p, "%.4f", r["probability"].get<double>());
    std::cout << "p(pneumonia) " << p << " verdict " << r["verdict"].get<std::string>() << "\n"
              << "occlusions " << r["evaluations"] << (r["degenerate"].get<bool>() ? " (flat map)" : "") << "\n"
              << "wrote " << outp << "\n";
    return 0;
}

int run_simulate(const Globals& g, const std::string& script, std::string workdir, const std::string& log_path,
                 bool quiet) {
    bool temp = workdir.empty();
    if (temp) {
        std::string tmpl = (fs::temp_directory_path() / "cxr-sim-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) {
            std::perror("cxr: mkdtemp");
            return 1;
        }
        workdir = tmpl;
    } else if (fs::exists(workdir) && !fs::is_empty(workdir)) {
        std::fprintf(stderr, "cxr: error: workdir %s is not empty\n", workdir.c_str());
        return 2;
    }
    CString out;
    auto st = cxr_simulate(script.c_str(), workdir.c_str(), &out.p);
    if (temp) {
        std::error_code ec;
        fs::remove_all(workdir, ec);
    }
    if (st != CXR_OK) return fail(st);
    auto r = json::parse(out.str());
    if (!log_path.empty()) std::ofstream(log_path) << r["events"].get<std::string>();
    if (g.json_out) {
        emit_json(out.str());
        return 0;
    }
    if (!quiet) std::cout << r["events"].get<std::string>() << "\n";
    std::cout << r["summary"].get<std::string>();
    return 0;
}

int run_serve(const Globals& g, const json& cfg, const std::string& publish, const std::string& holdout) {
    json c = cfg;
    c["seed"] = g.seed;
    cxr_server* s = nullptr;
    auto st = cxr_server_open(c.dump().c_str(), &s);
    if (st != CXR_OK) return fail(st);
    std::unique_ptr<cxr_server, decltype(&cxr_server_free)> guard(s, cxr_server_free);
    if (!holdout.empty() && (st = cxr_server_set_holdout(s, holdout.c_str())) != CXR_OK) return fail(st);
    if (!publish.empty()) {
        CString out;
        if ((st = cxr_server_publish(s, publish.c_str(), &out.p)) != CXR_OK) return fail(st);
        auto e = json::parse(out.str());
        std::cout << "published version " << e["version"] << " " << e["compressed_digest"].get<std::string>() << "\n";
    }
    std::uint16_t port = 0;
    if ((st = cxr_server_start(s, &port)) != CXR_OK) return fail(st);
    std::cout << "listening on port " << port << std::endl;
    wait_for_signal();
    cxr_server_stop(s);
    return 0;
}

int run_client(const Globals&, const std::string& config, const json& overrides, const std::string& provision) {
    cxr_client* c = nullptr;
    auto st = cxr_client_open(config.empty() ? nullptr : config.c_str(), overrides.dump().c_str(), &c);
    if (st != CXR_OK) return fail(st);
    std::unique_ptr<cxr_client, decltype(&cxr_client_free)> guard(c, cxr_client_free);
    if (!provision.empty() && (st = cxr_client_provision(c, provision.c_str())) != CXR_OK) return fail(st);
    std::uint16_t port = 0;
    if ((st = cxr_client_start(c, &port)) != CXR_OK) return fail(st);
    std::cout << "edge daemon on http://127.0.0.1:" << port << "/" << std::endl;
    wait_for_signal();
    cxr_client_stop(c);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    CLI::App app{"cxr: pneumonia screening relay (training, compression, server, edge client, simulation)", "cxr"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random choice")->default_val(0);
    app.add_flag("--json", g.json_out, "Print machine-readable JSON");

    // train
    auto* train = app.add_subcommand("train", "Train the reference CNN on a labelled directory or synthetic data");
    std::string data_dir, model_out, resume, history_out, optimizer = "adam";
    std::size_t synthetic = 0, epochs = 500, batch = 64, patience = 100, augment = 0;
    double lr = 0.001, decay = 0.9, test_fraction = 0.2, rebalance = 0.0, gamma = 2.4;
    auto* data_opt = train->add_option("--data", data_dir, "Directory with NORMAL/ and PNEUMONIA/ PGM images");
    auto* syn_opt = train->add_option("--synthetic", synthetic, "Use N synthetic bright/dark disc images instead");
    data_opt->excludes(syn_opt);
    train->add_option("--out", model_out, "Where to write the trained model (.cxrm)")->required();
    train->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
    train->add_option("--batch-size", batch, "Mini-batch size")->capture_default_str();
    train->add_option("--lr", lr, "Learning rate")->capture_default_str();
    train->add_option("--optimizer", optimizer, "adam or sgd")->check(CLI::IsMember({"adam", "sgd"}))->capture_default_str();
    train->add_option("--decay", decay, "Adam beta1 / SGD momentum")->capture_default_str();
    auto* patience_opt =
        train->add_option("--patience", patience, "Epochs without validation improvement before stopping (at most --epochs)")
            ->capture_default_str();
    train->add_option("--test-fraction", test_fraction, "Stratified test split fraction")->capture_default_str();
    train->add_option("--rebalance", rebalance, "Target minority share of the train split (0 = off)")
        ->capture_default_str();
    train->add_option("--augment-copies", augment, "Augmented copies per training record")->capture_default_str();
    train->add_option("--gamma", gamma, "Gamma applied during preprocessing")->capture_default_str();
    train->add_option("--resume", resume, "Continue from a .cxrm or .cxrc model (transfer learning)");
    train->add_option("--history", history_out, "Write the per-epoch loss history as CSV");

    // compress
    auto* compress = app.add_subcommand("compress", "Prune, quantize and Huffman-code a model");
    std::string c_in, c_out;
    double sparsity = 0.9;
    std::uint32_t conv_bits = 8, dense_bits = 5;
    bool compress_biases = false, per_tensor = false;
    compress->add_option("model", c_in, "Input model (.cxrm)")->required()->check(CLI::ExistingFile);
    compress->add_option("output", c_out, "Output file (.cxrc)")->required();
    compress->add_option("--sparsity", sparsity, "Fraction of kernel weights pruned, model-wide")->capture_default_str();
    compress->add_option("--conv-bits", conv_bits, "Codebook bits for conv kernels (32 = keep raw)")
        ->capture_default_str();
    compress->add_option("--dense-bits", dense_bits, "Codebook bits for dense kernels (32 = keep raw)")
        ->capture_default_str();
    compress->add_flag("--compress-biases", compress_biases, "Prune and quantize biases too");
    compress->add_flag("--per-tensor", per_tensor, "Apply the sparsity to every kernel separately");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the central server");
    std::string s_storage = "cxr-server", s_bind = "127.0.0.1", s_section = "private", s_publish, s_holdout,
                s_metric = "f_beta";
    std::uint16_t s_port = 7461;
    std::size_t s_threshold = 50, s_epochs = 20;
    double s_beta = 2.0;
    bool s_auto = false;
    serve->add_option("--storage", s_storage, "Storage root (env CXR_STORAGE_ROOT wins)")->capture_default_str();
    serve->add_option("--port", s_port, "TCP port (env CXR_SERVER_PORT wins)")->capture_default_str();
    serve->add_option("--bind", s_bind, "Bind address")->capture_default_str();
    serve->add_option("--section", s_section, "Section for ingested scans")
        ->check(CLI::IsMember({"private", "public"}))
        ->capture_default_str();
    serve->add_option("--publish", s_publish, "Publish this model (.cxrm) before serving");
    serve->add_option("--holdout", s_holdout, "Frozen evaluation set (NORMAL/, PNEUMONIA/ PGMs)");
    serve->add_option("--retrain-threshold", s_threshold, "Confirmed scans that trigger retraining")
        ->capture_default_str();
    serve->add_option("--metric", s_metric, "Replacement metric")
        ->check(CLI::IsMember({"f_beta", "accuracy"}))
        ->capture_default_str();
    serve->add_option("--beta", s_beta, "Recall weight of f_beta")->capture_default_str();
    serve->add_option("--epochs", s_epochs, "Epochs per retraining")->capture_default_str();
    serve->add_flag("--auto-retrain", s_auto, "Retrain in the background when the threshold is reached");

    // client
    auto* client = app.add_subcommand("client", "Run the edge daemon (HTTP API on localhost)");
    std::string cl_config, cl_storage, cl_host, cl_static, cl_provision;
    std::uint16_t cl_server_port = 0, cl_http_port = 0;
    client->add_option("--config", cl_config, "Client config file (key=value lines)");
    client->add_option("--storage", cl_storage, "Storage directory");
    client->add_option("--server-host", cl_host, "Server host");
    client->add_option("--server-port", cl_server_port, "Server port");
    client->add_option("--http-port", cl_http_port, "Local HTTP port");
    client->add_option("--static-dir", cl_static, "Directory with web UI files to serve");
    client->add_option("--provision", cl_provision, "Install this compressed model (.cxrc) first");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Run a scenario script over the simulated link");
    std::string sim_script, sim_workdir, sim_log;
    bool sim_quiet = false;
    simulate->add_option("script", sim_script, "Scenario script")->required()->check(CLI::ExistingFile);
    simulate->add_option("--workdir", sim_workdir, "Keep server and client state here (must be empty)");
    simulate->add_option("--log", sim_log, "Also write the event log to this file");
    simulate->add_flag("--quiet", sim_quiet, "Print only the summary");

    // report
    auto* report = app.add_subcommand("report", "Classification report and ROC AUC for a predictions file");
    std::string r_path;
    report->add_option("predictions", r_path, "Lines of: [id] label p_pneumonia")->required()->check(CLI::ExistingFile);

    // heatmap
    auto* heatmap = app.add_subcommand("heatmap", "Occlusion saliency overlay for one image");
    std::string h_model, h_image, h_out, h_mode = "overlay";
    std::uint32_t h_patch = 16, h_stride = 8;
    double h_gamma = 2.4;
    bool h_pre = false;
    heatmap->add_option("model", h_model, "Model (.cxrm or .cxrc)")->required()->check(CLI::ExistingFile);
    heatmap->add_option("image", h_image, "Input PGM")->required()->check(CLI::ExistingFile);
    heatmap->add_option("--out", h_out, "Output PGM")->required();
    heatmap->add_option("--mode", h_mode, "overlay or map")->check(CLI::IsMember({"overlay", "map"}))->capture_default_str();
    heatmap->add_option("--patch", h_patch, "Occluder side in pixels")->capture_default_str();
    heatmap->add_option("--stride", h_stride, "Occluder step in pixels")->capture_default_str();
    heatmap->add_option("--gamma", h_gamma, "Gamma applied during preprocessing")->capture_default_str();
    heatmap->add_flag("--preprocessed", h_pre, "Input is already a preprocessed 128x128 image");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) return app.exit(e);
        app.exit(e);
        return 2;
    }

    if (train->parsed()) {
        // The default patience shrinks to fit a short run; an explicit one is
        // validated as given.
        if (patience_opt->count() == 0) patience = std::min(patience, epochs);
        json o = {{"out", model_out},
                  {"epochs", epochs},
                  {"batch_size", batch},
                  {"learning_rate", lr},
                  {"optimizer", optimizer},
                  {"decay", decay},
                  {"patience", patience},
                  {"test_fraction", test_fraction},
                  {"rebalance", rebalance},
                  {"augment_copies", augment},
                  {"gamma", gamma}};
        if (!data_dir.empty()) o["data_dir"] = data_dir;
        else if (synthetic > 0) o["synthetic"] = synthetic;
        else {
            std::fprintf(stderr, "cxr train: one of --data or --synthetic is required\n");
            return 2;
        }
        if (!resume.empty()) o["resume"] = resume;
        if (!history_out.empty()) o["history_out"] = history_out;
        return run_train(g, o);
    }
    if (compress->parsed())
        return run_compress(g, c_in, c_out,
                            {{"sparsity", sparsity},
                             {"conv_bits", conv_bits},
                             {"dense_bits", dense_bits},
                             {"compress_biases", compress_biases},
                             {"per_tensor_sparsity", per_tensor}});
    if (serve->parsed())
        return run_serve(g,
                         {{"storage_root", s_storage},
                          {"port", s_port},
                          {"bind", s_bind},
                          {"section", s_section},
                          {"retrain_threshold", s_threshold},
                          {"metric", s_metric},
                          {"beta", s_beta},
                          {"epochs", s_epochs},
                          {"auto_retrain", s_auto}},
                         s_publish, s_holdout);
    if (client->parsed()) {
        json o = json::object();
        if (!cl_storage.empty()) o["storage"] = cl_storage;
        if (!cl_host.empty()) o["server_host"] = cl_host;
        if (cl_server_port) o["server_port"] = cl_server_port;
        if (cl_http_port) o["http_port"] = cl_http_port;
        if (!cl_static.empty()) o["static_dir"] = cl_static;
        return run_client(g, cl_config, o, cl_provision);
    }
    if (simulate->parsed()) return run_simulate(g, sim_script, sim_workdir, sim_log, sim_quiet);
    if (report->parsed()) return run_report(g, r_path);
    if (heatmap->parsed())
        return run_heatmap(g, h_model, h_image, h_out,
                           {{"mode", h_mode}, {"patch", h_patch}, {"stride", h_stride}, {"gamma", h_gamma},
                            {"preprocessed", h_pre}});
    return 2;
}
