/**
 * @file stats.cpp
 * @brief ANOVA, Tukey HSD with a quadrature studentized-range CDF, Turing scoring.
 */
#include "muspike/stats.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "muspike/csv.h"
#include "muspike/error.h"

namespace muspike {

Description describe(std::span<const double> values) {
  Description d;
  d.n = static_cast<int>(values.size());
  if (values.empty()) return d;
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / d.n;
  double ss = 0.0;
  for (double v : values) ss += (v - d.mean) * (v - d.mean);
  d.std = std::sqrt(ss / d.n);
  return d;
}

double f_sf(double f, double df1, double df2) {
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  // P(F > f) = I_{d2/(d2+d1 f)}(d2/2, d1/2)
  const double x = df2 / (df2 + df1 * f);
  return boost::math::ibeta(df2 / 2.0, df1 / 2.0, x);
}

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

void check_groups(std::span<const std::vector<double>> groups) {
  if (groups.size() < 2) throw Error(ErrorCode::InsufficientData, "need at least two groups");
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error(ErrorCode::InsufficientData, "every group needs at least two observations");
    for (double v : g) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite observation");
    }
  }
  const double first = groups[0][0];
  for (const auto& g : groups) {
    for (double v : g) {
      if (v != first) return;
    }
  }
  throw Error(ErrorCode::DegenerateGroups, "all observations are identical");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Fixed composite Gauss-Legendre rules keep the CDF exactly monotone in q:
// every node contributes a term that is non-decreasing in q.
constexpr int kInnerPanels = 8;
constexpr double kInnerLo = -8.5;
constexpr double kInnerHi = 8.5;
constexpr int kOuterPanels = 16;

template <class F>
double composite_gauss(F&& f, double a, double b, int panels) {
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const double h = (b - a) / panels;
  double sum = 0.0;
  for (int i = 0; i < panels; ++i) {
    const double lo = a + i * h;
    sum += Rule::integrate(f, lo, lo + h);
  }
  return sum;
}

}  // namespace

double prange_normal(double w, int k) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (!(w > 0.0)) return 0.0;
  if (std::isinf(w)) return 1.0;
  const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  auto integrand = [&](double z) {
    const double inner = normal_cdf(z) - normal_cdf(z - w);
    return inv_sqrt_2pi * std::exp(-0.5 * z * z) * std::pow(std::max(inner, 0.0), k - 1);
  };
  const double p = k * composite_gauss(integrand, kInnerLo, kInnerHi, kInnerPanels);
  return std::clamp(p, 0.0, 1.0);
}

double ptukey(double q, int k, double df) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "df must be positive");
  if (!(q > 0.0)) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (df > 1e6) return prange_normal(q, k);
  // s = sqrt(chi2_df / df); density in log space.
  boost::math::chi_squared_distribution<double> chi(df);
  const double x_lo = boost::math::quantile(chi, 1e-14);
  const double x_hi = boost::math::quantile(boost::math::complement(chi, 1e-14));
  const double s_lo = std::sqrt(x_lo / df);
  const double s_hi = std::sqrt(x_hi / df);
  const double log_norm =
      0.5 * df * std::log(df) - boost::math::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::numbers::ln2;
  auto integrand = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double log_f = log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
    return std::exp(log_f) * prange_normal(q * s, k);
  };
  return std::clamp(composite_gauss(integrand, s_lo, s_hi, kOuterPanels), 0.0, 1.0);
}

AnovaResult anova_oneway(std::span<const std::vector<double>> groups) {
  check_groups(groups);
  std::size_t n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    n += g.size();
    grand += std::accumulate(g.begin(), g.end(), 0.0);
  }
  grand /= static_cast<double>(n);
  AnovaResult r;
  for (const auto& g : groups) {
    const double m = mean_of(g);
    r.ss_between += g.size() * (m - grand) * (m - grand);
    for (double v : g) r.ss_within += (v - m) * (v - m);
  }
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(n - groups.size());
  r.ms_within = r.ss_within / r.df_within;
  const double ms_between = r.ss_between / r.df_between;
  if (r.ss_within == 0.0) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.f = ms_between / r.ms_within;
    r.p = f_sf(r.f, r.df_between, r.df_within);
  }
  return r;
}

std::vector<TukeyResult> tukey_hsd(std::span<const std::vector<double>> groups, std::span<const std::string> labels,
                                   double alpha) {
  if (labels.size() != groups.size()) throw Error(ErrorCode::InvalidArgument, "one label per group required");
  const AnovaResult a = anova_oneway(groups);
  const int k = static_cast<int>(groups.size());
  std::vector<double> means;
  for (const auto& g : groups) means.push_back(mean_of(g));
  std::vector<TukeyResult> out;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      TukeyResult t;
      t.a = labels[i];
      t.b = labels[j];
      t.mean_diff = means[j] - means[i];
      // Tukey-Kramer standard error handles unequal group sizes.
      const double se =
          std::sqrt(a.ms_within / 2.0 * (1.0 / groups[i].size() + 1.0 / groups[j].size()));
      if (se == 0.0) {
        t.q = t.mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
      } else {
        t.q = std::abs(t.mean_diff) / se;
      }
      t.p = 1.0 - ptukey(t.q, k, a.df_within);
      t.p = std::clamp(t.p, 0.0, 1.0);
      t.significant = t.p < alpha;
      out.push_back(std::move(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view turing_answer_code(TuringAnswer a) {
  switch (a) {
    case TuringAnswer::Human: return "H";
    case TuringAnswer::AI: return "AI";
    case TuringAnswer::Uncertain: return "U";
  }
  return "U";
}

std::optional<TuringAnswer> parse_turing_answer(std::string_view s) {
  if (s == "H") return TuringAnswer::Human;
  if (s == "AI") return TuringAnswer::AI;
  if (s == "U") return TuringAnswer::Uncertain;
  return std::nullopt;
}

TuringSummary turing_accuracy(std::span<const TuringResponse> responses) {
  if (responses.empty()) throw Error(ErrorCode::EmptyResponses, "no Turing responses");
  TuringSummary s;
  for (const auto& r : responses) {
    const bool human = r.source == kHumanSource;
    const bool ok = (human && r.answer == TuringAnswer::Human) || (!human && r.answer == TuringAnswer::AI);
    for (Accuracy* acc : {&s.overall, &s.by_group[r.listener_group], &s.by_source[r.source]}) {
      acc->total++;
      acc->correct += ok;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

std::string_view response_csv_header() {
  return "participant_id,group,piece_id,dataset,source,question_id,value,turing_answer,timestamp";
}

std::string write_responses_csv(std::span<const ResponseRow> rows) {
  std::string out(response_csv_header());
  out += '\n';
  for (const auto& r : rows) {
    out += csv::join({r.participant_id, r.group, r.piece_id, r.dataset, r.source, r.question_id,
                      r.value ? std::to_string(*r.value) : std::string(), r.turing_answer, r.timestamp});
    out += '\n';
  }
  return out;
}

std::vector<ResponseRow> read_responses_csv(std::string_view text) {
  const auto table = csv::parse(text);
  if (table.empty() || csv::join(table[0]) != response_csv_header()) {
    throw Error(ErrorCode::InvalidArgument, "response table header mismatch");
  }
  std::vector<ResponseRow> out;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& c = table[i];
    if (c.size() != 9) throw Error(ErrorCode::InvalidArgument, "response row " + std::to_string(i) + " has wrong width");
    ResponseRow r{c[0], c[1], c[2], c[3], c[4], c[5], std::nullopt, c[7], c[8]};
    if (!c[6].empty()) {
      try {
        std::size_t used = 0;
        r.value = std::stoi(c[6], &used);
        if (used != c[6].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "bad rating '" + c[6] + "'");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string analysis_label(std::string_view source) {
  return source == kHumanSource ? std::string("Reference") : std::string(source);
}

namespace {

template <class T>
void push_unique(std::vector<T>& v, const T& x) {
  if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
}

int question_number(const std::string& q) {
  if (q.size() > 1 && q[0] == 'Q') {
    try {
      return std::stoi(q.substr(1));
    } catch (const std::exception&) {
    }
  }
  return 1000;
}

}  // namespace

Analysis analyze(std::span<const ResponseRow> rows, const AnalysisOptions& opts) {
  if (rows.empty()) throw Error(ErrorCode::EmptyResponses, "no responses");
  Analysis out;

  std::vector<std::string> groups, questions, sources;
  bool has_human = false;
  for (const auto& r : rows) {
    push_unique(groups, r.group);
    if (r.value) push_unique(questions, r.question_id);
    if (r.source == kHumanSource) {
      has_human = true;
    } else {
      push_unique(sources, r.source);
    }
  }
  if (has_human) sources.insert(sources.begin(), std::string(kHumanSource));
  std::stable_sort(questions.begin(), questions.end(),
                   [](const std::string& a, const std::string& b) { return question_number(a) < question_number(b); });

  for (const auto& g : groups) {
    for (const auto& q : questions) {
      std::vector<std::vector<double>> data;
      std::vector<std::string> labels;
      for (const auto& src : sources) {
        std::vector<double> vals;
        if (opts.per_participant) {
          std::vector<std::string> order;
          std::map<std::string, std::pair<double, int>> acc;
          for (const auto& r : rows) {
            if (r.group != g || r.question_id != q || r.source != src || !r.value) continue;
            push_unique(order, r.participant_id);
            acc[r.participant_id].first += *r.value;
            acc[r.participant_id].second += 1;
          }
          for (const auto& p : order) vals.push_back(acc[p].first / acc[p].second);
        } else {
          for (const auto& r : rows) {
            if (r.group == g && r.question_id == q && r.source == src && r.value) vals.push_back(*r.value);
          }
        }
        if (vals.empty()) continue;
        out.descriptives.push_back({g, q, analysis_label(src), describe(vals)});
        data.push_back(std::move(vals));
        labels.push_back(analysis_label(src));
      }
      AnovaRow arow{g, q, std::nullopt, ""};
      try {
        arow.r = anova_oneway(data);
        for (auto& t : tukey_hsd(data, labels, opts.alpha)) out.tukey.push_back({g, q, std::move(t)});
      } catch (const Error& e) {
        arow.error = std::string(e.name());
      }
      out.anova.push_back(std::move(arow));
    }
  }

  std::vector<TuringResponse> turing;
  for (const auto& r : rows) {
    if (r.question_id != "Q14") continue;
    const auto a = parse_turing_answer(r.turing_answer);
    if (!a) throw Error(ErrorCode::InvalidArgument, "bad Turing answer '" + r.turing_answer + "'");
    turing.push_back({r.group, r.source, *a});
  }
  if (!turing.empty()) out.turing = turing_accuracy(turing);
  return out;
}

std::string write_descriptives_csv(std::span<const DescriptiveRow> rows) {
  std::string out = "group,question,source,mean,std,n\n";
  for (const auto& r : rows) {
    out += csv::join({r.group, r.question, r.source, csv::format_number(r.d.mean), csv::format_number(r.d.std),
                      std::to_string(r.d.n)});
    out += '\n';
  }
  return out;
}

std::string write_anova_csv(std::span<const AnovaRow> rows) {
  std::string out = "group,question,f,p,df_between,df_within,error\n";
  for (const auto& r : rows) {
    if (r.r) {
      out += csv::join({r.group, r.question, csv::format_number(r.r->f), csv::format_number(r.r->p),
                        std::to_string(r.r->df_between), std::to_string(r.r->df_within), ""});
    } else {
      out += csv::join({r.group, r.question, "NA", "NA", "NA", "NA", r.error});
    }
    out += '\n';
  }
  return out;
}

std::string write_tukey_csv(std::span<const TukeyRow> rows) {
  std::string out = "group,question,pair,mean_diff,q,p,significant\n";
  for (const auto& r : rows) {
    out += csv::join({r.group, r.question, r.r.a + "-" + r.r.b, csv::format_number(r.r.mean_diff),
                      csv::format_number(r.r.q), csv::format_number(r.r.p), r.r.significant ? "true" : "false"});
    out += '\n';
  }
  return out;
}

std::string write_turing_csv(const TuringSummary& s) {
  std::string out = "scope,key,correct,total,accuracy\n";
  auto line = [&](const std::string& scope, const std::string& key, const Accuracy& a) {
    out += csv::join({scope, key, std::to_string(a.correct), std::to_string(a.total), csv::format_number(a.value())});
    out += '\n';
  };
  line("overall", "all", s.overall);
  for (const auto& [g, a] : s.by_group) line("group", g, a);
  for (const auto& [src, a] : s.by_source) line("source", analysis_label(src), a);
  return out;
}

}  // namespace muspike
