#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dike/error.hpp"

namespace dike {

// A scalar on the emotion axis, [-1, +1]. Stored terms always carry one of the
// spectrum anchors; other values only appear transiently during arithmetic.
class Intensity {
 public:
  constexpr Intensity() = default;
  explicit Intensity(double value);

  constexpr double value() const noexcept { return value_; }
  bool is_default_anchor() const noexcept;

  friend constexpr bool operator==(Intensity a, Intensity b) { return a.value_ == b.value_; }
  friend constexpr auto operator<=>(Intensity a, Intensity b) { return a.value_ <=> b.value_; }

 private:
  double value_ = 0.0;
};

// {-1.0, -0.6, -0.3, 0.0, +0.3, +0.6, +1.0}
std::span<const double> default_anchors();

struct EmotionTerm {
  std::string spectrum_id;
  std::string label;
  Intensity intensity;
  bool is_basic = false;

  friend bool operator==(const EmotionTerm&, const EmotionTerm&) = default;
};

class EmotionSpectrum {
 public:
  // Validates ordering, endpoints, neutral midpoint and per-spectrum label
  // uniqueness. Throws Error{kInvalidArgument} on violation.
  EmotionSpectrum(std::string id, std::string description, std::vector<EmotionTerm> terms);

  const std::string& id() const noexcept { return id_; }
  const std::string& description() const noexcept { return description_; }
  const std::vector<EmotionTerm>& terms() const noexcept { return terms_; }

  // Case-insensitive label lookup.
  const EmotionTerm* find(std::string_view label) const noexcept;
  const EmotionTerm& term(std::string_view label) const;
  const EmotionTerm& neutral() const { return terms_[terms_.size() / 2]; }

 private:
  std::string id_;
  std::string description_;
  std::vector<EmotionTerm> terms_;
};

Intensity intensity_of(const EmotionSpectrum& spectrum, std::string_view label);

// Term whose intensity is the arithmetic negation of the named term's.
const EmotionTerm& negate(const EmotionSpectrum& spectrum, std::string_view label);

// intensity * factor, clamped to [-1, +1], then quantized. Clamping is
// intentional: products such as -1 * 1.5 occur while planning adjustments.
const EmotionTerm& scale(const EmotionSpectrum& spectrum, std::string_view label, double factor);

// Term minimizing |value - anchor| after clamping value to [-1, +1]. Ties go to
// the anchor nearer 0.0.
const EmotionTerm& nearest_anchor(const EmotionSpectrum& spectrum, double value);

// Same rule over a bare list of anchors; returns the index of the winner.
std::size_t nearest_anchor_index(std::span<const double> anchors, double value);

// Static (locale, label) -> factor table. Labels outside the table, and the
// default locale, use factor 1.0.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  void set(std::string locale, std::string label, double factor);
  double factor(std::string_view locale, std::string_view label) const;
  const std::map<std::pair<std::string, std::string>, double>& entries() const noexcept {
    return entries_;
  }

 private:
  std::map<std::pair<std::string, std::string>, double> entries_;
};

const EmotionTerm& calibrate(const EmotionSpectrum& spectrum, std::string_view label,
                             std::string_view locale, const CalibrationTable& table);

class SpectrumLibrary {
 public:
  SpectrumLibrary() = default;
  SpectrumLibrary(std::vector<EmotionSpectrum> spectra, CalibrationTable calibration);

  // Versioned JSON document, see data/spectra.json.
  static SpectrumLibrary from_json(std::string_view json_text);
  static SpectrumLibrary load_file(const std::string& path);
  // The seven basic spectra plus the love-letter vocabulary, compiled in.
  static const SpectrumLibrary& bundled();

  std::string to_json() const;

  const std::vector<EmotionSpectrum>& spectra() const noexcept { return spectra_; }
  const EmotionSpectrum& get(std::string_view id) const;
  const CalibrationTable& calibration() const noexcept { return calibration_; }

  // Canonical label for a case-insensitive match anywhere in the library.
  std::optional<std::string> canonical_label(std::string_view label) const;

 private:
  std::vector<EmotionSpectrum> spectra_;
  CalibrationTable calibration_;
};

}  // namespace dike
