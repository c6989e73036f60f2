#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sentiport/csv.hpp"
#include "sentiport/date.hpp"
#include "sentiport/error.hpp"
#include "sentiport/market_data.hpp"

namespace sentiport {

enum class Label { Positive = 0, Negative = 1, Neutral = 2 };
inline constexpr std::array<Label, 3> kLabels = {Label::Positive, Label::Negative, Label::Neutral};

inline const char* to_string(Label l) {
  switch (l) {
    case Label::Positive: return "Positive";
    case Label::Negative: return "Negative";
    case Label::Neutral: return "Neutral";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  std::string t;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "positive" || t == "pos") return Label::Positive;
  if (t == "negative" || t == "neg") return Label::Negative;
  if (t == "neutral" || t == "neu") return Label::Neutral;
  return std::nullopt;
}

struct LabelResult {
  Label label = Label::Neutral;
  double polarity = 0.0;
};

/// One dated text observation about an asset.
struct SentimentRecord {
  Date date;
  std::string asset_id;
  std::string text;
  Label label = Label::Neutral;
  double polarity = 0.0;
  long long likes = 0;
  long long retweets = 0;
  long long comments = 0;
};

/// Aggregate over one fixed 7-calendar-day window.
struct WeeklySentiment {
  std::string asset_id;
  Date window_start;
  std::size_t n_total = 0, n_pos = 0, n_neg = 0, n_neu = 0;
  double mean_pol = 0.0, max_pol = 0.0, median_pol = 0.0;
  double ratio = 1.0;
  bool sufficient = false;
};

/// Minimum records for a window to count as representative.
inline constexpr std::size_t kSufficientRecords = 30;
/// |polarity| below this is labelled Neutral.
inline constexpr double kNeutralBand = 0.05;
/// Squash constant in s / sqrt(s^2 + alpha).
inline constexpr double kPolarityAlpha = 15.0;

inline constexpr std::array<const char*, 14> kDefaultNegations = {
    "not", "no", "never", "neither", "nor", "without", "isn't", "wasn't", "don't", "doesn't", "didn't", "won't",
    "can't", "cannot"};

/// Token valences plus negation and intensifier rules.
class Lexicon {
 public:
  Lexicon() = default;

  void set_valence(std::string token, double v) {
    if (!(v >= -1.0 && v <= 1.0)) throw ValidationError("valence out of [-1,1] for '" + token + "'");
    valence_[std::move(token)] = v;
  }
  void add_negation(std::string token) { negations_.insert(std::move(token)); }
  void set_intensifier(std::string token, double mult) {
    if (!(mult > 0)) throw ValidationError("intensifier multiplier must be positive for '" + token + "'");
    intensifiers_[std::move(token)] = mult;
  }

  const double* valence(const std::string& t) const {
    auto it = valence_.find(t);
    return it == valence_.end() ? nullptr : &it->second;
  }
  bool is_negation(const std::string& t) const { return negations_.count(t) != 0; }
  const double* intensifier(const std::string& t) const {
    auto it = intensifiers_.find(t);
    return it == intensifiers_.end() ? nullptr : &it->second;
  }

  bool empty() const noexcept { return valence_.empty(); }
  std::size_t size() const noexcept { return valence_.size(); }
  bool has_negations() const noexcept { return !negations_.empty(); }

  /// Small finance-flavoured default word list.
  static Lexicon builtin() {
    Lexicon lx;
    const std::pair<const char*, double> words[] = {
        {"good", 0.5},       {"great", 0.7},     {"excellent", 0.8}, {"strong", 0.5},    {"gain", 0.5},
        {"gains", 0.5},      {"growth", 0.5},    {"profit", 0.6},    {"profits", 0.6},   {"beat", 0.5},
        {"beats", 0.5},      {"bullish", 0.7},   {"rally", 0.6},     {"surge", 0.6},     {"soar", 0.7},
        {"soars", 0.7},      {"up", 0.2},        {"upgrade", 0.6},   {"record", 0.4},    {"win", 0.5},
        {"positive", 0.5},   {"buy", 0.4},       {"outperform", 0.6}, {"love", 0.6},     {"happy", 0.5},
        {"rise", 0.4},       {"rises", 0.4},     {"higher", 0.3},    {"boost", 0.5},     {"success", 0.6},
        {"bad", -0.5},       {"terrible", -0.8}, {"weak", -0.5},     {"loss", -0.6},     {"losses", -0.6},
        {"decline", -0.5},   {"drop", -0.5},     {"drops", -0.5},    {"fall", -0.4},     {"falls", -0.4},
        {"miss", -0.5},      {"misses", -0.5},   {"bearish", -0.7},  {"crash", -0.8},    {"plunge", -0.7},
        {"down", -0.2},      {"downgrade", -0.6}, {"lawsuit", -0.5}, {"sell", -0.4},     {"negative", -0.5},
        {"underperform", -0.6}, {"fear", -0.5},  {"hate", -0.6},     {"lower", -0.3},    {"risk", -0.3},
        {"recall", -0.5},    {"fraud", -0.8},    {"layoffs", -0.6},  {"cut", -0.4},      {"failure", -0.7}};
    for (auto [w, v] : words) lx.set_valence(w, v);
    for (const char* n : kDefaultNegations) lx.add_negation(n);
    const std::pair<const char*, double> boosts[] = {{"very", 1.5}, {"extremely", 2.0}, {"really", 1.3},
                                                     {"slightly", 0.5}, {"somewhat", 0.7}, {"hugely", 1.8}};
    for (auto [w, m] : boosts) lx.set_intensifier(w, m);
    return lx;
  }

 private:
  std::unordered_map<std::string, double> valence_;
  std::unordered_set<std::string> negations_;
  std::unordered_map<std::string, double> intensifiers_;
};

/// Lexicon file: `token<TAB>valence` per line, plus `@negation<TAB>token` and
/// `@intensifier<TAB>token<TAB>multiplier` directives. '#' starts a comment
/// line. Without any @negation line the built-in negation set is used.
inline Lexicon parse_lexicon(std::string_view text, const std::string& source) {
  Lexicon lx;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t s = 0;
    while (true) {
      auto t = line.find('\t', s);
      cols.emplace_back(line.substr(s, t == std::string_view::npos ? std::string_view::npos : t - s));
      if (t == std::string_view::npos) break;
      s = t + 1;
    }
    if (cols[0] == "@negation" && cols.size() == 2) {
      lx.add_negation(cols[1]);
    } else if (cols[0] == "@intensifier" && cols.size() == 3) {
      auto m = csv::to_double(cols[2]);
      if (!m) throw ParseError(source, line_no, "bad intensifier multiplier");
      lx.set_intensifier(cols[1], *m);
    } else if (cols.size() == 2) {
      auto v = csv::to_double(cols[1]);
      if (!v) throw ParseError(source, line_no, "bad valence '" + cols[1] + "'");
      lx.set_valence(cols[0], *v);
    } else {
      throw ParseError(source, line_no, "expected token<TAB>valence");
    }
  }
  if (!lx.has_negations())
    for (const char* n : kDefaultNegations) lx.add_negation(n);
  return lx;
}

/// Lower-cased tokens of letters, digits and apostrophes.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '\'' || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Lexicon-rule scorer. Negations flip and intensifiers scale the next
/// scored token; the raw sum s is squashed as s / sqrt(s^2 + 15).
inline LabelResult label_text(std::string_view text, const Lexicon& lexicon) {
  if (lexicon.empty()) throw ConfigError("lexicon is empty");
  double sum = 0.0, pending_mult = 1.0;
  bool pending_negation = false;
  for (const auto& tok : tokenize(text)) {
    if (lexicon.is_negation(tok)) {
      pending_negation = !pending_negation;
      continue;
    }
    if (const double* m = lexicon.intensifier(tok)) {
      pending_mult *= *m;
      continue;
    }
    if (const double* v = lexicon.valence(tok)) {
      sum += (pending_negation ? -1.0 : 1.0) * pending_mult * *v;
      pending_negation = false;
      pending_mult = 1.0;
    }
  }
  const double pol = std::clamp(sum / std::sqrt(sum * sum + kPolarityAlpha), -1.0, 1.0);
  if (std::abs(pol) < kNeutralBand) return {Label::Neutral, 0.0};
  return {pol > 0 ? Label::Positive : Label::Negative, pol};
}

/// Anything that maps text to a label; the lexicon scorer is the default.
using Labeler = std::function<LabelResult(std::string_view)>;

inline Labeler lexicon_labeler(Lexicon lexicon) {
  return [lx = std::move(lexicon)](std::string_view t) { return label_text(t, lx); };
}

/// Laplace-smoothed positive/negative ratio.
inline double sentiment_ratio(std::size_t n_pos, std::size_t n_neg) {
  return (static_cast<double>(n_pos) + 1.0) / (static_cast<double>(n_neg) + 1.0);
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

inline WeeklySentiment aggregate_weekly(std::span<const SentimentRecord> records, Date window_start,
                                        const std::string& asset_id = {}) {
  WeeklySentiment w;
  w.asset_id = asset_id.empty() && !records.empty() ? records.front().asset_id : asset_id;
  w.window_start = window_start;
  const Date last = window_start.plus_days(6);
  std::vector<double> pols;
  pols.reserve(records.size());
  for (const auto& r : records) {
    if (r.date < window_start || last < r.date)
      throw ValidationError("record dated " + r.date.iso() + " outside window starting " + window_start.iso());
    if (r.asset_id != w.asset_id) throw ValidationError("record for asset '" + r.asset_id + "' in window for '" + w.asset_id + "'");
    switch (r.label) {
      case Label::Positive: ++w.n_pos; break;
      case Label::Negative: ++w.n_neg; break;
      case Label::Neutral: ++w.n_neu; break;
    }
    pols.push_back(r.polarity);
  }
  w.n_total = pols.size();
  if (!pols.empty()) {
    // Sort first so the sum, and thus the mean, is independent of input order.
    std::sort(pols.begin(), pols.end());
    w.mean_pol = std::accumulate(pols.begin(), pols.end(), 0.0) / static_cast<double>(pols.size());
    w.max_pol = pols.back();
    w.median_pol = median_of(pols);
  }
  w.ratio = sentiment_ratio(w.n_pos, w.n_neg);
  w.sufficient = w.n_total >= kSufficientRecords;
  return w;
}

/// Consecutive non-overlapping 7-day windows from `anchor` through the last
/// record; windows without records are included (empty aggregates).
inline std::vector<WeeklySentiment> weekly_windows(std::vector<SentimentRecord> records, Date anchor,
                                                   const std::string& asset_id) {
  std::stable_sort(records.begin(), records.end(),
                   [](const SentimentRecord& a, const SentimentRecord& b) { return a.date < b.date; });
  std::vector<WeeklySentiment> out;
  if (records.empty()) return out;
  std::size_t i = 0;
  while (i < records.size() && records[i].date < anchor) ++i;
  for (Date start = anchor; i < records.size(); start = start.plus_days(7)) {
    const Date end = start.plus_days(7);
    std::size_t j = i;
    while (j < records.size() && records[j].date < end) ++j;
    out.push_back(aggregate_weekly(std::span<const SentimentRecord>(records.data() + i, j - i), start, asset_id));
    i = j;
  }
  return out;
}

/// Per-date ratio; dates without records get 1.0.
inline std::vector<double> daily_ratio_series(std::span<const SentimentRecord> records, std::span<const Date> dates) {
  std::map<Date, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& r : records) {
    auto& c = counts[r.date];
    if (r.label == Label::Positive) ++c.first;
    else if (r.label == Label::Negative) ++c.second;
  }
  std::vector<double> out;
  out.reserve(dates.size());
  for (Date d : dates) {
    auto it = counts.find(d);
    out.push_back(it == counts.end() ? 1.0 : sentiment_ratio(it->second.first, it->second.second));
  }
  return out;
}

/// Engagement sums and ratio per calendar date, per asset.
inline std::map<std::string, std::vector<DailyFeatures>> daily_features(std::span<const SentimentRecord> records) {
  struct Acc {
    double likes = 0, retweets = 0, comments = 0;
    std::size_t pos = 0, neg = 0;
  };
  std::map<std::string, std::map<Date, Acc>> acc;
  for (const auto& r : records) {
    auto& a = acc[r.asset_id][r.date];
    a.likes += static_cast<double>(r.likes);
    a.retweets += static_cast<double>(r.retweets);
    a.comments += static_cast<double>(r.comments);
    if (r.label == Label::Positive) ++a.pos;
    else if (r.label == Label::Negative) ++a.neg;
  }
  std::map<std::string, std::vector<DailyFeatures>> out;
  for (const auto& [asset, days] : acc)
    for (const auto& [d, a] : days)
      out[asset].push_back({d, a.likes, a.retweets, a.comments, sentiment_ratio(a.pos, a.neg)});
  return out;
}

// ---------------------------------------------------------------------------
// Label audit

/// Row-normalized 3x3 confusion matrix (rows true, columns predicted) in
/// kLabels order.
struct LabelAudit {
  std::array<std::array<double, 3>, 3> matrix{};
  std::array<std::size_t, 3> support{};
  double accuracy = 0.0;
  std::size_t n = 0;
};

inline LabelAudit confusion(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("truth and prediction lengths differ");
  if (truth.empty()) throw InsufficientDataError("audit sample is empty");
  LabelAudit a;
  std::array<std::array<std::size_t, 3>, 3> counts{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = static_cast<std::size_t>(truth[i]), p = static_cast<std::size_t>(predicted[i]);
    ++counts[t][p];
    ++a.support[t];
    if (t == p) ++correct;
  }
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t p = 0; p < 3; ++p)
      a.matrix[t][p] = a.support[t] == 0 ? 0.0 : static_cast<double>(counts[t][p]) / static_cast<double>(a.support[t]);
  a.n = truth.size();
  a.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  return a;
}

struct AuditSample {
  std::string text;
  Label truth;
};

inline LabelAudit audit_labels(std::span<const AuditSample> sample, const Labeler& labeler) {
  std::vector<Label> truth, pred;
  for (const auto& s : sample) {
    truth.push_back(s.truth);
    pred.push_back(labeler(s.text).label);
  }
  return confusion(truth, pred);
}

inline LabelAudit audit_labels(std::span<const AuditSample> sample, const Lexicon& lexicon) {
  return audit_labels(sample, lexicon_labeler(lexicon));
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Reads `date, asset, text, label?, polarity?, likes, retweets, comments`.
/// Rows carrying a label are trusted as-is; others go through `labeler`.
/// A trusted label without polarity gets +/-0.5 or 0 so the sign invariant holds.
inline std::vector<SentimentRecord> parse_sentiment_csv(std::string_view text, const std::string& source,
                                                        const Labeler& labeler) {
  const auto rows = csv::parse(text, source);
  if (rows.empty()) throw ParseError(source, 1, "empty file, header row required");
  const csv::Header h(rows.front());
  const auto c_date = h.require("date", source), c_asset = h.require("asset", source);
  const auto c_text = h.find("text");
  const auto c_label = h.find("label"), c_pol = h.find("polarity");
  const auto c_likes = h.find("likes"), c_rt = h.find("retweets"), c_com = h.find("comments");

  auto field = [](const csv::Row& r, std::optional<std::size_t> c) -> std::string {
    return c && *c < r.fields.size() ? r.fields[*c] : std::string{};
  };
  auto count = [&](const csv::Row& r, std::optional<std::size_t> c, const char* name) -> long long {
    const auto s = csv::Header::trim(field(r, c));
    if (s.empty()) return 0;
    auto v = csv::to_int(s);
    if (!v || *v < 0) throw ParseError(source, r.line, std::string("bad ") + name + " '" + s + "'");
    return *v;
  };

  std::vector<SentimentRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    SentimentRecord rec;
    auto d = Date::parse(csv::Header::trim(field(r, c_date)));
    if (!d) throw ParseError(source, r.line, "bad date '" + field(r, c_date) + "'");
    rec.date = *d;
    rec.asset_id = csv::Header::trim(field(r, c_asset));
    if (rec.asset_id.empty()) throw ParseError(source, r.line, "missing asset");
    rec.text = field(r, c_text);
    rec.likes = count(r, c_likes, "likes");
    rec.retweets = count(r, c_rt, "retweets");
    rec.comments = count(r, c_com, "comments");

    const auto lab_s = csv::Header::trim(field(r, c_label));
    if (!lab_s.empty()) {
      auto lab = parse_label(lab_s);
      if (!lab) throw ParseError(source, r.line, "bad label '" + lab_s + "'");
      rec.label = *lab;
      const auto pol_s = csv::Header::trim(field(r, c_pol));
      if (!pol_s.empty()) {
        auto p = csv::to_double(pol_s);
        if (!p || *p < -1.0 || *p > 1.0) throw ParseError(source, r.line, "bad polarity '" + pol_s + "'");
        rec.polarity = *p;
        const bool coherent = (rec.label == Label::Positive && *p > 0) || (rec.label == Label::Negative && *p < 0) ||
                              (rec.label == Label::Neutral && *p == 0);
        if (!coherent) throw ValidationError(source + ":" + std::to_string(r.line) + ": label and polarity sign disagree");
      } else {
        rec.polarity = rec.label == Label::Positive ? 0.5 : rec.label == Label::Negative ? -0.5 : 0.0;
      }
    } else {
      const auto res = labeler(rec.text);
      rec.label = res.label;
      rec.polarity = res.polarity;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string format_sentiment_csv(std::span<const SentimentRecord> records) {
  std::string out = "date,asset,text,label,polarity,likes,retweets,comments\n";
  for (const auto& r : records) {
    out += r.date.iso() + "," + csv::escape(r.asset_id) + "," + csv::escape(r.text) + "," + to_string(r.label) + "," +
           csv::fmt(r.polarity) + "," + std::to_string(r.likes) + "," + std::to_string(r.retweets) + "," +
           std::to_string(r.comments) + "\n";
  }
  return out;
}

/// Audit CSV: `text, label` columns.
inline std::vector<AuditSample> parse_audit_csv(std::string_view text, const std::string& source) {
  const auto rows = csv::parse(text, source);
  if (rows.empty()) throw ParseError(source, 1, "empty file, header row required");
  const csv::Header h(rows.front());
  const auto c_text = h.require("text", source), c_label = h.require("label", source);
  std::vector<AuditSample> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.fields.size() <= std::max(c_text, c_label)) throw ParseError(source, r.line, "too few fields");
    auto lab = parse_label(r.fields[c_label]);
    if (!lab) throw ParseError(source, r.line, "bad label '" + r.fields[c_label] + "'");
    out.push_back({r.fields[c_text], *lab});
  }
  return out;
}

}  // namespace sentiport
