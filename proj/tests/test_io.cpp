#include <gtest/gtest.h>

#include <charconv>
#include <sstream>

#include "postkernel/config.hpp"
#include "postkernel/instances.hpp"
#include "postkernel/prior_io.hpp"
#include "postkernel/report.hpp"

using namespace postkernel;

TEST(Config, ParsesKeysCommentsAndWhitespace) {
  const ExperimentConfig cfg = parse_config(
      "# risk run\n"
      "command = risk\n"
      "  prior=p.json   # trailing comment\n"
      "seed = 12\n"
      "mode = mc\n"
      "samples = 500\n"
      "rtol = 1e-8\n"
      "widths = 2, 8 ,8\n"
      "inject_zero_labels = true\n",
      "/data/cfg");
  EXPECT_EQ(cfg.command, "risk");
  EXPECT_EQ(cfg.prior_path, "/data/cfg/p.json");
  EXPECT_EQ(cfg.seed, 12u);
  EXPECT_EQ(cfg.mode, "mc");
  EXPECT_EQ(cfg.samples, 500u);
  EXPECT_EQ(cfg.rtol, 1e-8);
  EXPECT_EQ(cfg.widths, (std::vector<std::size_t>{2, 8, 8}));
  EXPECT_TRUE(cfg.inject_zero_labels);
  EXPECT_EQ(cfg.n_train, 1u);
}

TEST(Config, AbsolutePriorPathIsKept) {
  EXPECT_EQ(parse_config("prior = /abs/p.json\n", "/elsewhere").prior_path, "/abs/p.json");
}

TEST(Config, Errors) {
  EXPECT_THROW(parse_config("colour = blue\n"), ConfigError);
  EXPECT_THROW(parse_config("seed\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = seven\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = -1\n"), ConfigError);
  EXPECT_THROW(parse_config("svg = maybe\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.cfg"), ConfigError);

  ExperimentConfig cfg;
  cfg.command = "train";
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.command = "risk";
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.prior_path = "/nonexistent/prior.json";
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg = ExperimentConfig{};
  cfg.command = "ntk";
  cfg.rtol = 0.0;
  EXPECT_THROW(validate(cfg), ConfigError);
  cfg.rtol = 1e-7;
  cfg.mode = "fast";
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(PriorDocument, ParsesEnsembleWithDefaults) {
  const PriorDocument doc = parse_prior_document(R"({
    "grid": {"points": [[0, 0], [1, 0], [0, 1]]},
    "family": "ensemble",
    "ensemble": {"functions": [[1, 2, 3], [0, 0, 1]]}
  })");
  ASSERT_TRUE(doc.prior.has_value());
  EXPECT_EQ(doc.name, "");
  EXPECT_EQ(doc.grid.test_pmf, Vector::Constant(3, 1.0 / 3));
  const auto& e = std::get<DiscreteEnsemblePrior>(*doc.prior);
  EXPECT_EQ(e.weights, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(e.functions[0](2), 3.0);
}

TEST(PriorDocument, RejectsMalformedDocuments) {
  EXPECT_THROW(parse_prior_document("{not json"), InvalidPriorError);
  EXPECT_THROW(parse_prior_document(R"({"grid": {"points": [[0]]}, "family": "wishart"})"), InvalidPriorError);
  EXPECT_THROW(parse_prior_document(R"({"grid": {"points": [[0], [1]]}, "family": "ensemble",
                                        "ensemble": {"functions": [[1, 2, 3]]}})"),
               InvalidPriorError);
  EXPECT_THROW(parse_prior_document(R"({"grid": {"points": [[0], [0]]}, "family": "ensemble",
                                        "ensemble": {"functions": [[1, 2]]}})"),
               InvalidPriorError);
  EXPECT_THROW(parse_prior_document(R"({"grid": {"points": [[0], [1]]}, "family": "gaussian",
                                        "gaussian": {"mean": [0, 0], "covariance": [[1, 2], [2, 1]]}})"),
               InvalidPriorError);
  EXPECT_THROW(parse_prior_document(R"({"grid": {"points": [[0], [1]]}, "family": "ensemble",
                                        "ensemble": {"functions": [[1, 2]], "weights": [0.4]}})"),
               InvalidPriorError);
  EXPECT_THROW(parse_prior_document(R"({"family": "ensemble"})"), InvalidPriorError);
  EXPECT_THROW(load_prior_document("/nonexistent/prior.json"), ConfigError);
}

TEST(PriorDocument, RoundTripsEveryFamily) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    const std::size_t m = 2 + seed % 5;
    PriorDocument doc;
    doc.name = "doc" + std::to_string(seed);
    doc.grid = uniform_grid(m);
    doc.grid.test_pmf = instances::random_pmf(rng, m);
    switch (seed % 4) {
      case 0: doc.prior = instances::random_ensemble(rng, 5, m); break;
      case 1: doc.prior = instances::random_gaussian(rng, m, false); break;
      case 2:
        doc.prior = GaussianMixturePrior{{instances::random_gaussian(rng, m, true), instances::random_gaussian(rng, m, false)},
                                         {0.25, 0.75}};
        break;
      default: doc.meta = instances::random_meta_ensemble(rng, 4, m);
    }
    const std::string text = dump_prior_document(doc);
    const PriorDocument back = parse_prior_document(text);
    EXPECT_EQ(back.name, doc.name);
    EXPECT_EQ(back.grid.test_pmf, doc.grid.test_pmf);
    EXPECT_EQ(dump_prior_document(back), text) << "seed " << seed;
    if (doc.prior) {
      EXPECT_EQ(second_moment_matrix(*back.prior), second_moment_matrix(*doc.prior));
      EXPECT_EQ(mean_vector(*back.prior), mean_vector(*doc.prior));
    } else {
      ASSERT_TRUE(back.meta.has_value());
      EXPECT_EQ(back.meta->weights, doc.meta->weights);
      EXPECT_EQ(back.meta->tasks[1].train_pmf, doc.meta->tasks[1].train_pmf);
    }
  }
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(1e-7), "1e-07");
  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, double(i % 40 - 20));
    const std::string s = format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v);
  }
}

TEST(Csv, RiskSchema) {
  std::ostringstream out;
  write_risk_csv(out, {{3, "four_function", 1, "zero", "exact", 1.0, 0.0}});
  EXPECT_EQ(out.str(), "seed,prior,n_train,method,mode,risk,stderr\n3,four_function,1,zero,exact,1,0\n");
}

TEST(Csv, TraceSchema) {
  std::ostringstream out;
  ntk::TraceRecord r;
  r.epoch = 5;
  r.train_acc = 0.75;
  write_trace_csv(out, {r});
  EXPECT_EQ(out.str(),
            "epoch,train_acc,test_acc,a_train,a_test,atilde_train,atilde_test,erank_train,erank_test,trace_train\n"
            "5,0.75,0,0,0,0,0,0,0,0\n");
}

TEST(Svg, HasFourPanels) {
  std::ostringstream out;
  ntk::AlignmentTrace trace(3);
  for (int i = 0; i < 3; ++i) {
    trace[std::size_t(i)].epoch = i;
    trace[std::size_t(i)].a_train = 0.1 * i;
  }
  write_trace_svg(out, trace);
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("<svg", 0), 0u);
  std::size_t panels = 0;
  for (std::size_t at = s.find("<polyline"); at != std::string::npos; at = s.find("<polyline", at + 1)) ++panels;
  EXPECT_GE(panels, 4u);
}
