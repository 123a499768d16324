#include "dike/emotion.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <json.hpp>

#include "bundled_data.hpp"
#include "dike/text.hpp"

namespace dike {

namespace {

constexpr std::array<double, 7> kDefaultAnchors{-1.0, -0.6, -0.3, 0.0, 0.3, 0.6, 1.0};

// Distances closer than this count as a tie (0.45 sits exactly between 0.3 and
// 0.6, but not in binary floating point).
constexpr double kTieEpsilon = 1e-9;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFiniteValue, std::string(what) + " must be finite");
  }
}

}  // namespace

Intensity::Intensity(double value) : value_(value) {
  require_finite(value, "intensity");
  if (value < -1.0 || value > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "intensity outside [-1, +1]");
  }
}

bool Intensity::is_default_anchor() const noexcept {
  return std::find(kDefaultAnchors.begin(), kDefaultAnchors.end(), value_) != kDefaultAnchors.end();
}

std::span<const double> default_anchors() { return kDefaultAnchors; }

EmotionSpectrum::EmotionSpectrum(std::string id, std::string description,
                                 std::vector<EmotionTerm> terms)
    : id_(std::move(id)), description_(std::move(description)), terms_(std::move(terms)) {
  if (id_.empty()) throw Error(ErrorCode::kInvalidArgument, "spectrum id is empty");
  if (terms_.size() < 3 || terms_.size() % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "spectrum " + id_ + " needs an odd number of terms");
  }
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    auto& t = terms_[i];
    t.spectrum_id = id_;
    if (t.label.empty()) throw Error(ErrorCode::kInvalidArgument, "empty label in " + id_);
    if (i > 0 && !(terms_[i - 1].intensity < t.intensity)) {
      throw Error(ErrorCode::kInvalidArgument, "terms of " + id_ + " not strictly ascending");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (text::iequals(terms_[j].label, t.label)) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate label " + t.label + " in " + id_);
      }
    }
    // Negation must land on an anchor.
    const double mirror = -t.intensity.value();
    if (terms_[terms_.size() - 1 - i].intensity.value() != mirror) {
      throw Error(ErrorCode::kInvalidArgument, "anchors of " + id_ + " are not symmetric");
    }
  }
  if (terms_.front().intensity.value() != -1.0 || terms_.back().intensity.value() != 1.0 ||
      neutral().intensity.value() != 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "spectrum " + id_ + " must span -1, 0, +1");
  }
}

const EmotionTerm* EmotionSpectrum::find(std::string_view label) const noexcept {
  for (const auto& t : terms_) {
    if (text::iequals(t.label, label)) return &t;
  }
  return nullptr;
}

const EmotionTerm& EmotionSpectrum::term(std::string_view label) const {
  if (const auto* t = find(label)) return *t;
  throw Error(ErrorCode::kUnknownLabel,
              "label '" + std::string(label) + "' not in spectrum " + id_);
}

Intensity intensity_of(const EmotionSpectrum& spectrum, std::string_view label) {
  return spectrum.term(label).intensity;
}

const EmotionTerm& negate(const EmotionSpectrum& spectrum, std::string_view label) {
  const auto& t = spectrum.term(label);
  const auto& terms = spectrum.terms();
  const auto pos = static_cast<std::size_t>(&t - terms.data());
  return terms[terms.size() - 1 - pos];
}

const EmotionTerm& scale(const EmotionSpectrum& spectrum, std::string_view label, double factor) {
  if (!std::isfinite(factor)) {
    throw Error(ErrorCode::kNonFiniteValue, "scale factor must be finite");
  }
  const auto& t = spectrum.term(label);
  return nearest_anchor(spectrum, t.intensity.value() * factor);
}

std::size_t nearest_anchor_index(std::span<const double> anchors, double value) {
  require_finite(value, "value");
  if (anchors.empty()) throw Error(ErrorCode::kInvalidArgument, "no anchors");
  const double v = std::clamp(value, -1.0, 1.0);
  std::size_t best = 0;
  double best_dist = std::abs(v - anchors[0]);
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    const double d = std::abs(v - anchors[i]);
    if (d < best_dist - kTieEpsilon) {
      best = i;
      best_dist = d;
    } else if (d <= best_dist + kTieEpsilon && std::abs(anchors[i]) < std::abs(anchors[best])) {
      best = i;
      best_dist = std::min(d, best_dist);
    }
  }
  return best;
}

const EmotionTerm& nearest_anchor(const EmotionSpectrum& spectrum, double value) {
  std::vector<double> anchors;
  anchors.reserve(spectrum.terms().size());
  for (const auto& t : spectrum.terms()) anchors.push_back(t.intensity.value());
  return spectrum.terms()[nearest_anchor_index(anchors, value)];
}

void CalibrationTable::set(std::string locale, std::string label, double factor) {
  if (!std::isfinite(factor) || factor == 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "calibration factor must be finite and nonzero");
  }
  entries_[{text::to_lower(locale), text::to_lower(label)}] = factor;
}

double CalibrationTable::factor(std::string_view locale, std::string_view label) const {
  auto it = entries_.find({text::to_lower(locale), text::to_lower(label)});
  return it == entries_.end() ? 1.0 : it->second;
}

const EmotionTerm& calibrate(const EmotionSpectrum& spectrum, std::string_view label,
                             std::string_view locale, const CalibrationTable& table) {
  return scale(spectrum, label, table.factor(locale, label));
}

SpectrumLibrary::SpectrumLibrary(std::vector<EmotionSpectrum> spectra, CalibrationTable calibration)
    : spectra_(std::move(spectra)), calibration_(std::move(calibration)) {
  for (std::size_t i = 0; i < spectra_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (spectra_[i].id() == spectra_[j].id()) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate spectrum id " + spectra_[i].id());
      }
    }
  }
}

SpectrumLibrary SpectrumLibrary::from_json(std::string_view json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("spectra: ") + e.what());
  }
  if (doc.value("schema_version", 0) != 1) {
    throw Error(ErrorCode::kSchemaMismatch, "spectra: unsupported schema_version", "$.schema_version");
  }
  std::vector<double> anchors(kDefaultAnchors.begin(), kDefaultAnchors.end());
  if (doc.contains("anchors")) anchors = doc.at("anchors").get<std::vector<double>>();

  std::vector<EmotionSpectrum> spectra;
  try {
    for (const auto& s : doc.at("spectra")) {
      std::vector<EmotionTerm> terms;
      for (const auto& t : s.at("terms")) {
        EmotionTerm term;
        term.label = t.at("label").get<std::string>();
        term.intensity = Intensity(t.at("intensity").get<double>());
        term.is_basic = t.value("is_basic", false);
        if (std::find(anchors.begin(), anchors.end(), term.intensity.value()) == anchors.end()) {
          throw Error(ErrorCode::kInvalidArgument, "term " + term.label + " is not on an anchor");
        }
        terms.push_back(std::move(term));
      }
      spectra.emplace_back(s.at("id").get<std::string>(), s.value("description", ""),
                           std::move(terms));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("spectra: ") + e.what());
  }
  CalibrationTable calibration;
  if (doc.contains("calibration")) {
    for (const auto& c : doc.at("calibration")) {
      calibration.set(c.at("locale").get<std::string>(), c.at("label").get<std::string>(),
                      c.at("factor").get<double>());
    }
  }
  return SpectrumLibrary(std::move(spectra), std::move(calibration));
}

SpectrumLibrary SpectrumLibrary::load_file(const std::string& path) {
  return from_json(text::read_file(path));
}

const SpectrumLibrary& SpectrumLibrary::bundled() {
  static const SpectrumLibrary lib = from_json(detail::kBundledSpectraJson);
  return lib;
}

std::string SpectrumLibrary::to_json() const {
  using nlohmann::json;
  json doc;
  doc["schema_version"] = 1;
  doc["kind"] = "emotion_spectra";
  json spectra = json::array();
  for (const auto& s : spectra_) {
    json terms = json::array();
    for (const auto& t : s.terms()) {
      terms.push_back({{"label", t.label}, {"intensity", t.intensity.value()}, {"is_basic", t.is_basic}});
    }
    spectra.push_back({{"id", s.id()}, {"description", s.description()}, {"terms", terms}});
  }
  doc["spectra"] = spectra;
  json cal = json::array();
  for (const auto& [key, factor] : calibration_.entries()) {
    cal.push_back({{"locale", key.first}, {"label", key.second}, {"factor", factor}});
  }
  doc["calibration"] = cal;
  return doc.dump();
}

const EmotionSpectrum& SpectrumLibrary::get(std::string_view id) const {
  for (const auto& s : spectra_) {
    if (s.id() == id) return s;
  }
  throw Error(ErrorCode::kNotFound, "no spectrum " + std::string(id));
}

std::optional<std::string> SpectrumLibrary::canonical_label(std::string_view label) const {
  for (const auto& s : spectra_) {
    if (const auto* t = s.find(label)) return t->label;
  }
  return std::nullopt;
}

}  // namespace dike
