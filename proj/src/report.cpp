#include "pdf/report.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace pdf {

using nlohmann::json;

namespace {

json trajectory_json(const std::vector<TrajectoryPoint>& traj) {
    json arr = json::array();
    for (const auto& p : traj)
        arr.push_back({{"patient", p.patient},
                       {"dose_level", p.level},
                       {"dlt", p.dlt},
                       {"stage", p.stage},
                       {"v", p.v},
                       {"k", p.k}});
    return arr;
}

json mtd_curve_json(const OperatingCharacteristics& oc, const ReportOptions& opts) {
    json arr = json::array();
    if (!oc.mean_final_beta || !(oc.mean_final_beta->beta1 > 0.0)) return arr;
    for (double vk : opts.vk_points)
        arr.push_back({{"vk", vk},
                       {"dose", predicted_mtd(vk, *oc.mean_final_beta, opts.p_target)},
                       {"dose_level",
                        predicted_mtd_level(vk, *oc.mean_final_beta, opts.p_target,
                                            opts.grid)}});
    return arr;
}

// One CSV/table row: a label and one number per dose level.
struct Row {
    std::string scenario, design, metric;
    std::vector<double> values;
};

std::vector<Row> stage1_rows(const OperatingCharacteristics& oc) {
    std::string d = to_string(oc.design);
    return {{oc.label, d, "true_avg_pd", oc.true_avg},
            {oc.label, d, "tox_rate", oc.tox_rate},
            {oc.label, d, "mean_n", oc.mean_n},
            {oc.label, d, "sel", oc.sel}};
}

std::vector<Row> stage2_rows(const OperatingCharacteristics& oc) {
    std::string d = to_string(oc.design);
    std::vector<double> fn(oc.final_patient_n.begin(), oc.final_patient_n.end());
    std::vector<double> fy(oc.final_patient_y.begin(), oc.final_patient_y.end());
    return {{oc.label, d, "stage2_tox_rate", oc.stage2_tox_rate},
            {oc.label, d, "stage2_mean_n", oc.stage2_mean_n},
            {oc.label, d, "final_patient_n", fn},
            {oc.label, d, "final_patient_dlt", fy}};
}

std::size_t levels_of(const std::vector<OperatingCharacteristics>& ocs,
                      const ReportOptions& opts) {
    return ocs.empty() ? opts.grid.size() : ocs.front().sel.size();
}

std::string emit_csv(const std::vector<OperatingCharacteristics>& ocs,
                     const ReportOptions& opts) {
    std::ostringstream out;
    out << std::setprecision(17);
    const std::size_t D = levels_of(ocs, opts);
    out << "section,scenario,design,metric";
    for (std::size_t d = 1; d <= D; ++d) out << ",dose" << d;
    out << '\n';
    auto emit = [&](const char* section, const std::vector<Row>& rows) {
        for (const auto& r : rows) {
            out << section << ',' << r.scenario << ',' << r.design << ',' << r.metric;
            for (double v : r.values) out << ',' << v;
            out << '\n';
        }
    };
    for (const auto& oc : ocs) emit("stage1", stage1_rows(oc));
    for (const auto& oc : ocs)
        if (oc.design == Design::PDF) emit("stage2", stage2_rows(oc));
    for (const auto& oc : ocs) {
        out << "summary," << oc.label << ',' << to_string(oc.design)
            << ",termination_rate," << oc.termination_rate << '\n';
        out << "summary," << oc.label << ',' << to_string(oc.design) << ",no_selection,"
            << oc.no_selection << '\n';
        if (oc.design == Design::PDF)
            out << "summary," << oc.label << ",pdf,stage2_pooled_rate,"
                << oc.stage2_pooled_rate << '\n';
    }
    return out.str();
}

std::string emit_table(const std::vector<OperatingCharacteristics>& ocs,
                       const ReportOptions& opts) {
    std::ostringstream out;
    const std::size_t D = levels_of(ocs, opts);
    auto header = [&](const char* title) {
        out << title << '\n' << std::left << std::setw(8) << "SC" << std::setw(8) << "design"
            << std::setw(20) << "metric";
        for (std::size_t d = 1; d <= D; ++d) out << std::right << std::setw(9) << d;
        out << '\n';
    };
    auto row = [&](const Row& r) {
        out << std::left << std::setw(8) << r.scenario << std::setw(8) << r.design
            << std::setw(20) << r.metric << std::right << std::fixed << std::setprecision(3);
        for (double v : r.values) out << std::setw(9) << v;
        out << '\n';
        out.unsetf(std::ios::fixed);
    };
    header("Stage I (first patients)");
    for (const auto& oc : ocs)
        for (const auto& r : stage1_rows(oc)) row(r);
    out << '\n';
    header("Stage II (precision stage)");
    for (const auto& oc : ocs)
        if (oc.design == Design::PDF)
            for (const auto& r : stage2_rows(oc)) row(r);
    out << '\n' << "Summary\n";
    for (const auto& oc : ocs)
        out << std::left << std::setw(8) << oc.label << std::setw(8) << to_string(oc.design)
            << "trials=" << oc.n_trials << " terminated=" << std::fixed
            << std::setprecision(3) << oc.termination_rate
            << " stage2_dlt=" << oc.stage2_pooled_rate << '\n';
    return out.str();
}

}  // namespace

ReportFormat parse_report_format(const std::string& s) {
    if (s == "table") return ReportFormat::Table;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    throw std::invalid_argument("unknown report format: " + s);
}

json report_json(const std::vector<OperatingCharacteristics>& ocs,
                 const ReportOptions& opts) {
    json runs = json::array();
    for (const auto& oc : ocs) {
        json r{{"scenario", oc.label},
               {"design", to_string(oc.design)},
               {"n_trials", oc.n_trials},
               {"true_avg_pd", oc.true_avg},
               {"stage1",
                {{"tox_rate", oc.tox_rate},
                 {"mean_n", oc.mean_n},
                 {"sel", oc.sel},
                 {"no_selection", oc.no_selection},
                 {"termination_rate", oc.termination_rate},
                 {"share", oc.stage1_share}}},
               {"stage2",
                {{"tox_rate", oc.stage2_tox_rate},
                 {"mean_n", oc.stage2_mean_n},
                 {"pooled_rate", oc.stage2_pooled_rate}}},
               {"final_patient", {{"n", oc.final_patient_n}, {"dlt", oc.final_patient_y}}},
               {"example_trajectory", trajectory_json(oc.example_trajectory)},
               {"excluded_assignments", oc.excluded_assignments},
               {"predicted_mtd_curve", mtd_curve_json(oc, opts)}};
        if (oc.mean_final_beta)
            r["mean_final_beta"] = {oc.mean_final_beta->beta0, oc.mean_final_beta->beta1};
        runs.push_back(std::move(r));
    }
    return json{{"p_target", opts.p_target}, {"grid", opts.grid.doses()}, {"runs", runs}};
}

std::string emit_report(const std::vector<OperatingCharacteristics>& ocs,
                        ReportFormat format, const ReportOptions& opts) {
    switch (format) {
        case ReportFormat::Json: return report_json(ocs, opts).dump(2) + "\n";
        case ReportFormat::Csv: return emit_csv(ocs, opts);
        case ReportFormat::Table: return emit_table(ocs, opts);
    }
    return {};
}

}  // namespace pdf
