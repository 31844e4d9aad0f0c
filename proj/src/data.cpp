#include "bgmhan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "bgmhan/embedding.hpp"  // split_sentences

namespace bgmhan {

namespace {

// ---------------------------------------------------------------------------
// Record file format: one record per line, tab-separated key=value pairs in
// the fixed order id, gcea, gceo, leadership, piq, label. Values escape
// backslash, tab, newline, and carriage return.
// ---------------------------------------------------------------------------

std::string escape_value(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_value(const std::string& s, std::size_t line_no) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 >= s.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": dangling escape");
    }
    const char c = s[++i];
    switch (c) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default:
        throw ParseError("line " + std::to_string(line_no) + ": unknown escape \\" +
                         std::string(1, c));
    }
  }
  return out;
}

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\v' || c == '\f' || c == '\r';
}

// ---------------------------------------------------------------------------
// Synthetic generator vocabulary. The scoring constants are shared with the
// oracle below: the label is a pure function of the generated text.
// ---------------------------------------------------------------------------

// Subject names are all at least 9 characters long so that the trailing band
// token of a grade sentence ("... H2.") starts past the 12th non-space
// character; see the geometry notes on generate_synthetic.
const char* const kSubjects[] = {"Mathematics", "Chemistry",  "Economics",  "Geography",
                                 "Computing",   "Literature", "Philosophy", "Psychology",
                                 "Accounting",  "Management"};
constexpr std::size_t kSubjectCount = sizeof(kSubjects) / sizeof(kSubjects[0]);

const char* const kClubs[] = {"Robotics Club", "Debate Society", "Chamber Choir",
                              "Soccer Team",   "Drama Club",     "Science Society",
                              "Archery Club",  "Chess Club"};
constexpr std::size_t kClubCount = sizeof(kClubs) / sizeof(kClubs[0]);

const char* const kCategories[] = {"STEM", "arts", "sports", "service"};
const char* const kLevels[] = {"school", "regional", "national"};

// Role seniority: rank 2 (leading), rank 1 (supporting office), rank 0.
const char* const kSeniorRoles[] = {"President", "Captain", "Chairperson"};
const char* const kOfficerRoles[] = {"Vice-President", "Secretary", "Treasurer"};
const char* const kJuniorRoles[] = {"Member"};

// Activity statements share sentence templates whose first 12 non-space
// characters are identical, so the scoring phrases are distinguishable only
// deeper into the sentence. Scored phrases add points; neutral ones do not.
const char* const kSignalPhrases[] = {
    "spearheaded a community initiative",
    "founded a new student enterprise",
    "published independent research",
    "represented the country in international competition",
};
constexpr std::size_t kSignalCount = sizeof(kSignalPhrases) / sizeof(kSignalPhrases[0]);

const char* const kNeutralPhrases[] = {
    "enjoyed quiet afternoons in the library",
    "learned to organise my study notes",
    "helped tidy the classroom after lessons",
    "discovered a lasting interest in reading",
};
constexpr std::size_t kNeutralCount = sizeof(kNeutralPhrases) / sizeof(kNeutralPhrases[0]);

// Both prefixes are exactly 12 non-space characters ("Inmyfinalyea",
// "Duringmytime") before any informative word appears.
const char* const kPiqTemplates[] = {
    "In my final year I also ",
    "During my time at school I ",
};

const char* const kOLevelGrades[] = {"A1", "A2", "B3", "B4", "C5", "C6"};

constexpr char kGradeLetters[] = {'A', 'B', 'C', 'D', 'E'};

int grade_points_of(char letter) {
  switch (letter) {
    case 'A': return 4;
    case 'B': return 3;
    case 'C': return 2;
    case 'D': return 1;
    case 'E': return 0;
    default: return -1;
  }
}

// H1 subjects carry half the H2 weight, rounded down.
int banded_grade_points(char letter, bool h1) {
  const int pts = grade_points_of(letter);
  if (pts < 0) return pts;
  return h1 ? pts / 2 : pts;
}

int role_rank_of(const std::string& word) {
  for (const char* r : kSeniorRoles) {
    if (word == r) return 2;
  }
  for (const char* r : kOfficerRoles) {
    if (word == r) return 1;
  }
  for (const char* r : kJuniorRoles) {
    if (word == r) return 0;
  }
  return -1;
}

std::size_t pick_weighted(Rng& rng, const double* weights, std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weights[i];
  double u = rng.uniform(0.0, total);
  for (std::size_t i = 0; i < n; ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return n - 1;
}

struct DraftProfile {
  std::array<char, 4> grades{};
  std::array<std::size_t, 4> subjects{};
  std::size_t h1_slot = 3;  // which of the four subjects is the H1 band
  int role_rank = 0;
  std::vector<std::size_t> phrases;
  int total = 0;
};

// One candidate draw at the requested quality. The mixtures are deliberately
// boundary-heavy: most draws land near the decision threshold, so every
// scored cue (including the activity phrases) is frequently decisive. Text is
// assembled afterwards so rejected draws stay cheap.
DraftProfile draw_candidate(Rng& rng, bool high) {
  static const double kHighGrade[] = {0.30, 0.40, 0.20, 0.07, 0.03};
  static const double kLowGrade[] = {0.03, 0.12, 0.30, 0.35, 0.20};
  static const double kHighRank[] = {0.20, 0.45, 0.35};  // rank 0,1,2
  static const double kLowRank[] = {0.55, 0.35, 0.10};
  static const double kHighPhrases[] = {0.25, 0.40, 0.35};  // 0,1,2 phrases
  static const double kLowPhrases[] = {0.50, 0.35, 0.15};

  DraftProfile d;
  d.h1_slot = rng.index(4);
  int grade_total = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t g = pick_weighted(rng, high ? kHighGrade : kLowGrade, 5);
    d.grades[i] = kGradeLetters[g];
    grade_total += banded_grade_points(d.grades[i], i == d.h1_slot);
  }
  d.role_rank = static_cast<int>(pick_weighted(rng, high ? kHighRank : kLowRank, 3));
  const std::size_t phrase_count = pick_weighted(rng, high ? kHighPhrases : kLowPhrases, 3);
  std::vector<std::size_t> pool(kSignalCount);
  for (std::size_t i = 0; i < kSignalCount; ++i) pool[i] = i;
  rng.shuffle(pool);
  d.phrases.assign(pool.begin(), pool.begin() + phrase_count);
  d.total = grade_total + 4 * d.role_rank + 4 * static_cast<int>(phrase_count);
  return d;
}

std::string role_of_rank(Rng& rng, int rank) {
  switch (rank) {
    case 2: return kSeniorRoles[rng.index(3)];
    case 1: return kOfficerRoles[rng.index(3)];
    default: return kJuniorRoles[0];
  }
}

}  // namespace

// --- record io -------------------------------------------------------------

void write_profiles(const std::vector<Profile>& profiles, std::ostream& out) {
  for (const Profile& p : profiles) {
    if (p.label != 0 && p.label != 1) {
      throw ContractError("write_profiles: profile " + p.id + " has label " +
                          std::to_string(p.label));
    }
    out << "id=" << escape_value(p.id);
    for (std::size_t i = 0; i < kFieldCount; ++i) {
      out << '\t' << field_name(i) << '=' << escape_value(field_text(p, i));
    }
    out << "\tlabel=" << p.label << '\n';
  }
}

void save_profiles(const std::vector<Profile>& profiles, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_profiles: cannot open " + path + " for writing");
  write_profiles(profiles, out);
  if (!out) throw IoError("save_profiles: write to " + path + " failed");
}

LoadReport read_profiles(std::istream& in) {
  LoadReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      std::map<std::string, std::string> kv;
      std::size_t start = 0;
      while (start <= line.size()) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) tab = line.size();
        const std::string part = line.substr(start, tab - start);
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos) {
          throw ParseError("line " + std::to_string(line_no) + ": expected key=value, got \"" +
                           part + "\"");
        }
        const std::string key = part.substr(0, eq);
        if (key != "id" && key != "label" &&
            !(key == "gcea" || key == "gceo" || key == "leadership" || key == "piq")) {
          throw ParseError("line " + std::to_string(line_no) + ": unknown field \"" + key + "\"");
        }
        if (kv.count(key)) {
          throw ParseError("line " + std::to_string(line_no) + ": duplicate field \"" + key +
                           "\"");
        }
        kv[key] = unescape_value(part.substr(eq + 1), line_no);
        if (tab == line.size()) break;
        start = tab + 1;
      }
      if (!kv.count("id")) {
        throw ParseError("line " + std::to_string(line_no) + ": missing field \"id\"");
      }
      if (!kv.count("label")) {
        throw ParseError("line " + std::to_string(line_no) + ": missing field \"label\"");
      }
      const std::string& label = kv["label"];
      if (label != "0" && label != "1") {
        throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1, got \"" +
                         label + "\"");
      }
      Profile p;
      p.id = kv["id"];
      p.label = label == "1" ? 1 : 0;
      for (std::size_t i = 0; i < kFieldCount; ++i) {
        auto it = kv.find(field_name(i));
        if (it == kv.end()) {
          report.warnings.push_back("line " + std::to_string(line_no) + ": missing field \"" +
                                    field_name(i) + "\"; substituted NaN");
          field_text(p, i) = "NaN";
        } else {
          field_text(p, i) = it->second;
        }
      }
      report.profiles.push_back(handle_missing(std::move(p)));
    } catch (const ParseError& e) {
      report.errors.push_back(e.what());
    }
  }
  return report;
}

LoadReport load_profiles(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_profiles: cannot open " + path);
  return read_profiles(in);
}

// --- missing fields ----------------------------------------------------------

bool field_has_content(const std::string& text) {
  for (char c : text) {
    if (!is_ws(c) && c != '.') return true;
  }
  return false;
}

Profile handle_missing(Profile p) {
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (!field_has_content(field_text(p, i))) field_text(p, i) = "NaN";
  }
  return p;
}

// --- stratified split --------------------------------------------------------

DatasetSplit stratified_split(const std::vector<Profile>& profiles,
                              const std::array<double, 3>& fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("stratified_split: fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("stratified_split: fractions must sum to 1, got " + std::to_string(sum));
  }

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const int y = profiles[i].label;
    if (y != 0 && y != 1) {
      throw ContractError("stratified_split: profile " + profiles[i].id + " has label " +
                          std::to_string(y));
    }
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }

  Rng rng(seed);
  DatasetSplit split;
  split.seed = seed;
  split.fractions = fractions;
  std::array<std::vector<Profile>*, 3> outs = {&split.train, &split.validation, &split.test};
  std::array<std::size_t, 3> allocated{};  // running totals, used to break remainder ties

  for (std::size_t cls = 0; cls < 2; ++cls) {
    auto& members = by_class[cls];
    rng.shuffle(members);

    // Largest-remainder allocation of this class across the three splits.
    const double m = static_cast<double>(members.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double quota = m * fractions[s];
      counts[s] = static_cast<std::size_t>(std::floor(quota));
      remainder[s] = quota - std::floor(quota);
      assigned += counts[s];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
      return allocated[a] < allocated[b];
    });
    for (std::size_t k = 0; assigned < members.size(); ++k, ++assigned) ++counts[order[k % 3]];
    for (std::size_t s = 0; s < 3; ++s) allocated[s] += counts[s];

    for (std::size_t s = 0; s < 3; ++s) {
      if (counts[s] == 0) {
        throw SplitError("class " + std::to_string(cls) + " has " +
                         std::to_string(members.size()) + " samples; split " +
                         std::to_string(s) + " would receive none");
      }
    }

    std::size_t cursor = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) {
        outs[s]->push_back(profiles[members[cursor++]]);
      }
    }
  }

  for (auto* out : outs) rng.shuffle(*out);
  return split;
}

// --- synthetic generator -----------------------------------------------------

std::vector<Profile> generate_synthetic(const GenConfig& cfg) {
  if (cfg.n < 4) throw ConfigError("generate_synthetic: n must be >= 4");
  if (!(cfg.signal_strength >= 0.0 && cfg.signal_strength <= 1.0)) {
    throw ConfigError("generate_synthetic: signal_strength must be in [0,1]");
  }
  if (!(cfg.blank_fraction >= 0.0 && cfg.blank_fraction <= 1.0)) {
    throw ConfigError("generate_synthetic: blank_fraction must be in [0,1]");
  }
  if (!(cfg.positive_fraction >= 0.0 && cfg.positive_fraction <= 1.0)) {
    throw ConfigError("generate_synthetic: positive_fraction must be in [0,1]");
  }

  Rng rng(cfg.seed);

  // Exact pre-noise class counts, order shuffled.
  std::vector<int> wanted(cfg.n, 0);
  const std::size_t positives = static_cast<std::size_t>(
      std::lround(cfg.positive_fraction * static_cast<double>(cfg.n)));
  for (std::size_t i = 0; i < std::min(positives, cfg.n); ++i) wanted[i] = 1;
  rng.shuffle(wanted);

  std::vector<Profile> out;
  out.reserve(cfg.n);
  std::vector<std::size_t> subject_pool(kSubjectCount);
  for (std::size_t i = 0; i < kSubjectCount; ++i) subject_pool[i] = i;

  for (std::size_t idx = 0; idx < cfg.n; ++idx) {
    const bool high = wanted[idx] == 1;

    DraftProfile d;
    bool accepted = false;
    for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
      d = draw_candidate(rng, high);
      accepted = (d.total >= kSyntheticThreshold) == high;
    }
    if (!accepted) {
      // Force an extreme draw; totals 30 and 0 always land on the right side.
      d.grades = high ? std::array<char, 4>{'A', 'A', 'A', 'A'}
                      : std::array<char, 4>{'E', 'E', 'E', 'E'};
      d.role_rank = high ? 2 : 0;
      d.phrases.clear();
      if (high) d.phrases = {0, 1};
      d.total = high ? 30 : 0;
    }

    Profile p;
    p.id = "sp" + std::to_string(idx);

    rng.shuffle(subject_pool);
    for (std::size_t i = 0; i < 4; ++i) d.subjects[i] = subject_pool[i];
    std::string gcea;
    for (std::size_t i = 0; i < 4; ++i) {
      const char* band = i == d.h1_slot ? "H1" : "H2";
      gcea += std::string(1, d.grades[i]) + " in " + kSubjects[d.subjects[i]] + " " + band + ". ";
    }
    p.gcea = gcea;

    std::string gceo;
    const std::size_t o_count = 3;
    for (std::size_t i = 0; i < o_count; ++i) {
      gceo += std::string("O-Level ") + kSubjects[subject_pool[4 + i]] + " " +
              kOLevelGrades[rng.index(6)] + ". ";
    }
    p.gceo = gceo;

    const std::size_t entries = 1 + rng.index(2);
    std::string leadership;
    for (std::size_t e = 0; e < entries; ++e) {
      // Later entries never outrank the first, so the first entry carries the
      // profile's seniority and the oracle's max-rank scan stays faithful.
      const int rank = e == 0 ? d.role_rank : static_cast<int>(rng.index(
                                                  static_cast<std::size_t>(d.role_rank) + 1));
      leadership += role_of_rank(rng, rank) + " of the " + kClubs[rng.index(kClubCount)] + ", " +
                    std::to_string(2016 + rng.index(8)) + ", " + kCategories[rng.index(4)] +
                    ", " + kLevels[rng.index(3)] + " level. ";
    }
    p.leadership = leadership;

    // Always exactly three activity sentences, so sentence count carries no
    // label information; only the phrase deep inside each sentence does.
    std::vector<std::string> piq_sentences;
    for (std::size_t phrase : d.phrases) {
      piq_sentences.push_back(std::string(kPiqTemplates[rng.index(2)]) + kSignalPhrases[phrase]);
    }
    std::vector<std::size_t> neutral_pool(kNeutralCount);
    for (std::size_t i = 0; i < kNeutralCount; ++i) neutral_pool[i] = i;
    rng.shuffle(neutral_pool);
    for (std::size_t j = 0; piq_sentences.size() < 3; ++j) {
      piq_sentences.push_back(std::string(kPiqTemplates[rng.index(2)]) +
                              kNeutralPhrases[neutral_pool[j]]);
    }
    rng.shuffle(piq_sentences);
    std::string piq;
    for (const std::string& s : piq_sentences) piq += s + ". ";
    p.piq = piq;

    int label = wanted[idx];
    if (rng.bernoulli(1.0 - cfg.signal_strength)) label = rng.bernoulli(0.5) ? 1 : 0;
    p.label = label;

    for (std::size_t i = 0; i < kFieldCount; ++i) {
      if (cfg.blank_fraction > 0.0 && rng.bernoulli(cfg.blank_fraction)) {
        field_text(p, i).clear();
      }
    }
    out.push_back(handle_missing(std::move(p)));
  }
  return out;
}

std::vector<Profile> generate_synthetic(std::size_t n, std::uint64_t seed,
                                        double signal_strength) {
  GenConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.signal_strength = signal_strength;
  return generate_synthetic(cfg);
}

std::string corpus_text(const std::vector<Profile>& profiles) {
  std::string out;
  for (const Profile& p : profiles) {
    for (std::size_t i = 0; i < kFieldCount; ++i) {
      out += field_text(p, i);
      out += '\n';
    }
  }
  return out;
}

// --- oracle scoring ----------------------------------------------------------

SyntheticScore synthetic_score(const Profile& p) {
  SyntheticScore score;

  for (const std::string& sentence : split_sentences(p.gcea)) {
    // Grade sentences read "<letter> in <subject> <band>"; an H1 band halves
    // the grade's weight (rounded down).
    if (sentence.size() >= 2 && sentence[1] == ' ') {
      const std::size_t cut = sentence.rfind(' ');
      const bool h1 = cut != std::string::npos && sentence.substr(cut + 1) == "H1";
      const int pts = banded_grade_points(sentence[0], h1);
      if (pts >= 0) score.grade_points += pts;
    }
  }

  for (const std::string& sentence : split_sentences(p.leadership)) {
    const std::size_t space = sentence.find(' ');
    const std::string first = space == std::string::npos ? sentence : sentence.substr(0, space);
    score.leadership_points = std::max(score.leadership_points, role_rank_of(first));
  }
  score.leadership_points = std::max(score.leadership_points, 0);

  int phrases = 0;
  for (std::size_t i = 0; i < kSignalCount; ++i) {
    if (p.piq.find(kSignalPhrases[i]) != std::string::npos) ++phrases;
  }
  score.piq_points = std::min(phrases, 2);

  score.total = score.grade_points + 4 * score.leadership_points + 4 * score.piq_points;
  return score;
}

int synthetic_oracle_label(const Profile& p) {
  return synthetic_score(p).total >= kSyntheticThreshold ? 1 : 0;
}

}  // namespace bgmhan
