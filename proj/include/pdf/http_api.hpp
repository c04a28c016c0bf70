#pragma once

#include <string>

#include <httplib.h>
#include <json.hpp>

#include "pdf/service.hpp"

namespace pdf {

/*
 * Routes, all JSON. Dose levels are 0-based.
 *   POST /trials                       create
 *   GET  /trials                       list ids
 *   GET  /trials/{id}                  snapshot
 *   POST /trials/{id}/cohorts          record a Stage-I cohort
 *   POST /trials/{id}/advance          move to Stage II
 *   POST /trials/{id}/stage2/preview   non-binding Stage-II recommendation
 *   POST /trials/{id}/stage2/patients  record a Stage-II patient
 * Errors: {"error": {"code", "message"}} with status 400, 404 or 409.
 */
void mount_routes(httplib::Server& server, TrialService& service);

CreateRequest parse_create_request(const nlohmann::json& body);
CohortRequest parse_cohort_request(const nlohmann::json& body);
Stage2Request parse_stage2_request(const nlohmann::json& body);
PkPrediction parse_prediction(const nlohmann::json& body);

}  // namespace pdf
