#pragma once

// CSV and SVG emission for risk experiments and NTK traces.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "postkernel/ntk_lab.hpp"

namespace postkernel {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

struct RiskRow {
  std::uint64_t seed = 0;
  std::string prior;
  std::size_t n_train = 0;
  std::string method;
  std::string mode;
  double risk = 0.0;
  double std_error = 0.0;
};

inline constexpr const char* kRiskCsvHeader = "seed,prior,n_train,method,mode,risk,stderr";
inline constexpr const char* kTraceCsvHeader =
    "epoch,train_acc,test_acc,a_train,a_test,atilde_train,atilde_test,erank_train,erank_test,trace_train";

inline void write_risk_csv(std::ostream& out, const std::vector<RiskRow>& rows) {
  out << kRiskCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.seed << ',' << r.prior << ',' << r.n_train << ',' << r.method << ',' << r.mode << ','
        << format_double(r.risk) << ',' << format_double(r.std_error) << '\n';
  }
}

inline void write_trace_csv(std::ostream& out, const ntk::AlignmentTrace& trace) {
  out << kTraceCsvHeader << '\n';
  for (const auto& r : trace) {
    out << r.epoch;
    for (double v : {r.train_acc, r.test_acc, r.a_train, r.a_test, r.atilde_train, r.atilde_test, r.erank_train,
                     r.erank_test, r.trace_train}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
}

namespace detail {

struct Series {
  std::string label;
  std::string color;
  std::function<double(const ntk::TraceRecord&)> value;
};

inline void svg_panel(std::ostream& out, const ntk::AlignmentTrace& trace, const std::string& title,
                      const std::vector<Series>& series, double x0, double y0, double w, double h) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const auto& s : series) {
    for (const auto& r : trace) {
      lo = std::min(lo, s.value(r));
      hi = std::max(hi, s.value(r));
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double e_max = std::max(1, trace.back().epoch);
  const auto px = [&](double epoch) { return x0 + w * epoch / e_max; };
  const auto py = [&](double v) { return y0 + h - h * (v - lo) / (hi - lo); };

  out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  out << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\" font-size=\"12\">" << title << "</text>\n";
  out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" font-size=\"9\" text-anchor=\"end\">"
      << format_double(hi) << "</text>\n";
  out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + h << "\" font-size=\"9\" text-anchor=\"end\">"
      << format_double(lo) << "</text>\n";
  double legend_y = y0 + 14;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : trace) out << px(r.epoch) << ',' << py(s.value(r)) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << x0 + w - 4 << "\" y=\"" << legend_y << "\" font-size=\"10\" text-anchor=\"end\" fill=\""
        << s.color << "\">" << s.label << "</text>\n";
    legend_y += 12;
  }
}

}  // namespace detail

/// Four panels: accuracy, alignment, RKHS-norm alignment, effective rank.
inline void write_trace_svg(std::ostream& out, const ntk::AlignmentTrace& trace) {
  using R = ntk::TraceRecord;
  const double w = 300, h = 180, pad = 60;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * (w + pad) + pad << "\" height=\""
      << 2 * (h + pad) + pad << "\">\n";
  if (!trace.empty()) {
    const std::string train = "#1f77b4";
    const std::string test = "#d62728";
    detail::svg_panel(out, trace, "(A) accuracy",
                      {{"train", train, [](const R& r) { return r.train_acc; }},
                       {"test", test, [](const R& r) { return r.test_acc; }}},
                      pad, pad, w, h);
    detail::svg_panel(out, trace, "(B) alignment a",
                      {{"train", train, [](const R& r) { return r.a_train; }},
                       {"test", test, [](const R& r) { return r.a_test; }}},
                      2 * pad + w, pad, w, h);
    detail::svg_panel(out, trace, "(C) RKHS-norm alignment",
                      {{"train", train, [](const R& r) { return r.atilde_train; }},
                       {"test", test, [](const R& r) { return r.atilde_test; }}},
                      pad, 2 * pad + h, w, h);
    detail::svg_panel(out, trace, "(D) effective rank",
                      {{"train", train, [](const R& r) { return r.erank_train; }},
                       {"test", test, [](const R& r) { return r.erank_test; }}},
                      2 * pad + w, 2 * pad + h, w, h);
  }
  out << "</svg>\n";
}

}  // namespace postkernel
