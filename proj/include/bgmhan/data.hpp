#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bgmhan/errors.hpp"
#include "bgmhan/profile.hpp"
#include "bgmhan/prng.hpp"

namespace bgmhan {

// Ingestion outcome: parsed profiles plus anything worth telling the user.
// Records with recoverable gaps (a missing text field) load with "NaN"
// substituted and a warning; malformed records are rejected into `errors`
// with their line numbers and do not stop the rest of the file.
struct LoadReport {
  std::vector<Profile> profiles;
  std::vector<std::string> warnings;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

LoadReport load_profiles(const std::string& path);
LoadReport read_profiles(std::istream& in);
void save_profiles(const std::vector<Profile>& profiles, const std::string& path);
void write_profiles(const std::vector<Profile>& profiles, std::ostream& out);

// True when the text tokenizes to at least one word: it contains some
// character that is neither whitespace nor a sentence delimiter.
bool field_has_content(const std::string& text);

// Replaces every content-free text field with the reserved token "NaN" so the
// downstream pipeline always sees at least one real token per field.
Profile handle_missing(Profile p);

struct DatasetSplit {
  std::vector<Profile> train;
  std::vector<Profile> validation;
  std::vector<Profile> test;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.90, 0.05, 0.05};
};

// Label-stratified split: per class, shuffle by seed and allocate counts by
// largest-remainder rounding of the fractions, then reshuffle each split.
// Fractions must sum to 1; every split must receive at least one sample of
// each class or a SplitError is raised.
DatasetSplit stratified_split(const std::vector<Profile>& profiles,
                              const std::array<double, 3>& fractions, std::uint64_t seed);

struct GenConfig {
  std::size_t n = 600;
  std::uint64_t seed = 0;
  double signal_strength = 0.9;   // 1 - probability a label is re-rolled at random
  double blank_fraction = 0.0;    // per-field probability of blanking after labeling
  double positive_fraction = 0.5; // target share of positive labels before noise
};

// Seeded synthetic applicant profiles. Grades, leadership entries, and essay
// signal phrases determine an integer latent score; the pre-noise label is
// that score thresholded, so it is a pure function of the generated text.
std::vector<Profile> generate_synthetic(const GenConfig& cfg);
std::vector<Profile> generate_synthetic(std::size_t n, std::uint64_t seed,
                                        double signal_strength);

// All field texts joined with newlines, e.g. as a tokenizer training corpus.
std::string corpus_text(const std::vector<Profile>& profiles);

// The generator's scoring rule, re-derived from profile text alone.
struct SyntheticScore {
  int grade_points = 0;       // 0..14: A=4 .. E=0 per subject, H1 bands halved
  int leadership_points = 0;  // 0..2: highest role seniority
  int piq_points = 0;         // 0..2: distinct signal phrases, capped
  int total = 0;              // grade + 4*leadership + 4*piq
};

SyntheticScore synthetic_score(const Profile& p);

inline constexpr int kSyntheticThreshold = 15;  // total >= threshold -> label 1

int synthetic_oracle_label(const Profile& p);

}  // namespace bgmhan
