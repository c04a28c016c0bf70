#pragma once

#include <string>
#include <vector>

#include "pdf/sim.hpp"

namespace pdf {

enum class ReportFormat { Table, Csv, Json };
ReportFormat parse_report_format(const std::string& s);

struct ReportOptions {
    double p_target = 0.3;
    DoseGrid grid = DoseGrid::standard();
    /// v k values at which the predicted-MTD curve is tabulated.
    std::vector<double> vk_points{2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 25, 30};
};

nlohmann::json report_json(const std::vector<OperatingCharacteristics>& ocs,
                           const ReportOptions& opts = {});

/*
 * Stage-I table (true average, Y/n, n, Sel%), Stage-II table (rates and counts),
 * the final-patient dose counts, one example trajectory per run, and the
 * predicted-MTD curve against v k. An empty input yields headers only.
 */
std::string emit_report(const std::vector<OperatingCharacteristics>& ocs,
                        ReportFormat format, const ReportOptions& opts = {});

}  // namespace pdf
