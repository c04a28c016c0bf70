#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "pdf/draws_json.hpp"
#include "pdf/http_api.hpp"
#include "pdf/report.hpp"
#include "pdf/sim.hpp"

using nlohmann::json;

namespace {

// Printed on stdout so scripts can parse it; the exit code is nonzero.
int fail(const std::string& kind, const std::string& message) {
    std::cout << json{{"error", {{"code", kind}, {"message", message}}}}.dump() << '\n';
    return 2;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    return json::parse(in);
}

std::vector<pdf::Scenario> resolve_scenarios(const std::string& spec) {
    if (spec == "all") {
        std::vector<pdf::Scenario> out;
        for (int i = 1; i <= 5; ++i) out.push_back(pdf::builtin_scenario(i));
        return out;
    }
    if (spec.size() == 1 && spec[0] >= '1' && spec[0] <= '5')
        return {pdf::builtin_scenario(spec[0] - '0')};
    return {pdf::scenario_from_json(read_json_file(spec))};
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Precision dose-finding: trial simulation and trial-conduct service"};
    app.require_subcommand(1);

    std::string scenario = "1", design = "pdf", stage2_error = "off", priors = "gamma";
    std::string out_path, format = "table", prior_file, crm_guard = "on";
    std::size_t trials = 100, burn_in = 500, draws = 500;
    std::uint64_t seed = 1;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    double obs_sigma = -1.0;
    std::vector<double> skeleton;

    auto* sim = app.add_subcommand("simulate", "Replicate virtual trials and report operating characteristics");
    sim->add_option("--scenario", scenario, "1..5, 'all', or a scenario JSON file")->capture_default_str();
    sim->add_option("--design", design, "pdf, crm or both")->check(CLI::IsMember({"pdf", "crm", "both"}))->capture_default_str();
    sim->add_option("--trials", trials, "Number of replications")->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--seed", seed, "Master seed")->capture_default_str();
    sim->add_option("--stage2-error", stage2_error, "PK prediction errors in Stage II")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    sim->add_option("--priors", priors, "PK population family of the model")->check(CLI::IsMember({"gamma", "lognormal"}))->capture_default_str();
    sim->add_option("--prior-file", prior_file, "JSON prior specification overriding defaults");
    sim->add_option("--out", out_path, "Output file (stdout when omitted)");
    sim->add_option("--format", format, "csv, json or table")->check(CLI::IsMember({"csv", "json", "table"}))->capture_default_str();
    sim->add_option("--burn-in", burn_in, "MCMC burn-in per fit")->capture_default_str();
    sim->add_option("--draws", draws, "MCMC draws kept per fit")->check(CLI::PositiveNumber)->capture_default_str();
    sim->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sim->add_option("--obs-sigma", obs_sigma, "True log-concentration noise (default 0.5)");
    sim->add_option("--crm-skeleton", skeleton, "CRM skeleton, one value per dose");
    sim->add_option("--crm-safety", crm_guard, "Exclusion guard for CRM")->check(CLI::IsMember({"on", "off"}))->capture_default_str();

    std::string data_dir = "trial-data", seed_mode = "fixed", host = "0.0.0.0";
    int port = 8080;
    std::size_t mcmc_draws = 1000, refine_draws = 0;
    auto* serve = app.add_subcommand("serve", "Run the trial-conduct HTTP service");
    serve->add_option("--data-dir", data_dir, "Directory of stored trial documents")->capture_default_str();
    serve->add_option("--port", port, "Listen port")->capture_default_str();
    serve->add_option("--host", host, "Listen address")->capture_default_str();
    serve->add_option("--mcmc-draws", mcmc_draws, "Draws (and burn-in) per refit")->check(CLI::PositiveNumber)->capture_default_str();
    serve->add_option("--refine-draws", refine_draws, "Background refinement chain length; 0 disables")->capture_default_str();
    serve->add_option("--seed-mode", seed_mode, "fixed or entropy")->check(CLI::IsMember({"fixed", "entropy"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what());
    }

    if (sim->parsed()) {
        try {
            pdf::TrialConfig cfg;
            cfg.mcmc.burn_in = burn_in;
            cfg.mcmc.draws = draws;
            cfg.stage2_error = stage2_error == "on";
            if (!prior_file.empty()) cfg.prior = pdf::prior_from_json(read_json_file(prior_file));
            if (priors == "lognormal") {
                cfg.prior.v_family = pdf::PkFamily::LogNormal;
                cfg.prior.k_family = pdf::PkFamily::LogNormal;
            }
            if (!skeleton.empty()) cfg.crm.skeleton = skeleton;
            cfg.crm.safety_guard = crm_guard == "on";
            cfg.crm.validate();

            std::vector<pdf::OperatingCharacteristics> ocs;
            for (auto sc : resolve_scenarios(scenario)) {
                if (obs_sigma > 0) sc.obs_sigma = obs_sigma;
                sc.validate();
                if (design != "crm")
                    ocs.push_back(pdf::replicate(sc, pdf::Design::PDF, trials, cfg, seed, threads));
                if (design != "pdf")
                    ocs.push_back(pdf::replicate(sc, pdf::Design::CRM, trials, cfg, seed, threads));
            }
            pdf::ReportOptions opts;
            opts.p_target = cfg.escalation.p_target;
            const std::string doc = pdf::emit_report(ocs, pdf::parse_report_format(format), opts);
            if (out_path.empty()) {
                std::cout << doc;
            } else {
                std::ofstream out(out_path);
                if (!out) return fail("io", "cannot write " + out_path);
                out << doc;
            }
        } catch (const json::exception& e) {
            return fail("config", e.what());
        } catch (const std::invalid_argument& e) {
            return fail("config", e.what());
        }
        return 0;
    }

    try {
        pdf::ServiceConfig cfg;
        cfg.data_dir = data_dir;
        cfg.mcmc.burn_in = mcmc_draws;
        cfg.mcmc.draws = mcmc_draws;
        cfg.refine_draws = refine_draws;
        cfg.seed_mode = pdf::parse_seed_mode(seed_mode);
        pdf::TrialService service(cfg);
        httplib::Server server;
        pdf::mount_routes(server, service);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "listening on " << host << ':' << port << '\n';
        if (!server.listen(host, port)) return fail("io", "cannot listen on port " + std::to_string(port));
    } catch (const std::exception& e) {
        return fail("config", e.what());
    }
    return 0;
}
