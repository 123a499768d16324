#pragma once

// Generated at configure time from data/*.json (see src/bundled_data.cpp.in).
namespace dike::detail {

extern const char* const kBundledSpectraJson;
extern const char* const kBundledBehaviorsJson;
extern const char* const kBundledFeaturesJson;

}  // namespace dike::detail
