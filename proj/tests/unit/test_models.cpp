#include <gtest/gtest.h>

#include <map>

#include "support/grad_check.hpp"
#include "tdntc/models.hpp"

namespace tdntc {
namespace {

ModelConfig cfg_for(Variant v, std::size_t n = 48, std::size_t c = 141, std::size_t u = 128) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.n_features = n;
  cfg.n_classes = c;
  cfg.units = u;
  cfg.td_units = u;
  return cfg;
}

Tensor random_input(const ModelGraph& g, std::size_t batch, Rng& rng) {
  return testing::random_like(batch_shape(batch, g.input_shape()), rng, 0.0, 1.0);
}

std::size_t enumerate_weights(ModelGraph& g) {
  std::size_t n = 0;
  for (auto& [name, p] : g.named_parameters()) n += p->value.size();
  return n;
}

// ---- parameter accounting ---------------------------------------------------------

TEST(ParameterTable, M3TimeDistributedGoldenCounts) {
  auto g = build_model(cfg_for(Variant::M3_TD));
  const auto rows = g.stage_table();
  const std::vector<std::tuple<std::string, std::string, std::size_t>> expect = {
      {"CNN_2D", "(3x3x1+1)x128", 1280},
      {"MP_2D", "-", 0},
      {"BN", "2x128", 256},
      {"Reshape", "-", 0},
      {"LSTM", "4x[(128+1)x128+128^2]", 131584},
      {"TD(FFNN_0)", "128x128+128", 16512},
      {"Flatten", "-", 0},
      {"FFNN_1", "6x128x141+141", 108429},
  };
  ASSERT_EQ(rows.size(), expect.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].network, std::get<0>(expect[i]));
    EXPECT_EQ(rows[i].calculation, std::get<1>(expect[i]));
    EXPECT_EQ(rows[i].parameters, std::get<2>(expect[i]));
  }
  EXPECT_EQ(g.parameter_count(), 258061u);
}

TEST(ParameterTable, M3VanillaGoldenCounts) {
  auto g = build_model(cfg_for(Variant::M3_VAN));
  const auto rows = g.stage_table();
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[5].network, "FFNN_0");
  EXPECT_EQ(rows[5].parameters, 16512u);
  EXPECT_EQ(rows[7].network, "FFNN_1");
  EXPECT_EQ(rows[7].calculation, "128x141+141");
  EXPECT_EQ(rows[7].parameters, 18189u);
  EXPECT_EQ(g.parameter_count(), 167821u);
}

TEST(ParameterTable, TdVanillaDeltaConfinedToDecisionLayer) {
  auto td = build_model(cfg_for(Variant::M3_TD));
  auto van = build_model(cfg_for(Variant::M3_VAN));
  EXPECT_EQ(td.parameter_count() - van.parameter_count(), 90240u);
  const auto a = td.stage_table(), b = van.stage_table();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i + 1 < a.size(); ++i) EXPECT_EQ(a[i].parameters, b[i].parameters) << a[i].network;
  EXPECT_EQ(a.back().parameters - b.back().parameters, 90240u);
}

TEST(ParameterTable, CosDecisionLayer) {
  auto g = build_model(cfg_for(Variant::M3_TD, 48, 24));
  EXPECT_EQ(g.stage_table().back().parameters, 18456u);
}

TEST(ParameterTable, TableTextHasTotals) {
  auto g = build_model(cfg_for(Variant::M3_TD));
  const auto text = stage_table_text(g);
  EXPECT_NE(text.find("Network"), std::string::npos);
  EXPECT_NE(text.find("Trainable parameters"), std::string::npos);
  EXPECT_NE(text.find("108,429"), std::string::npos);
  EXPECT_NE(text.find("258,061"), std::string::npos);
}

TEST(ParameterProperty, FormulaEqualsEnumerationOverGrid) {
  for (auto v : kAllVariants) {
    for (std::size_t n : {12, 48}) {
      for (std::size_t c : {2, 24, 141}) {
        auto g = build_model(cfg_for(v, n, c));
        std::size_t table_total = 0;
        for (const auto& r : g.stage_table()) table_total += r.parameters;
        EXPECT_EQ(g.parameter_count(), enumerate_weights(g)) << to_string(v) << " N=" << n << " C=" << c;
        EXPECT_EQ(table_total, g.parameter_count());
      }
    }
  }
}

// ---- structure --------------------------------------------------------------------

TEST(BuildModel, M2SequenceIsNStepsOfWidthOne) {
  auto g = build_model(cfg_for(Variant::M2_TD));
  EXPECT_EQ(g.input_shape(), (Shape{48, 1}));
  EXPECT_EQ(g.stages().front().name, "LSTM");
  EXPECT_EQ(g.stages().front().output, (Shape{48, 128}));
}

TEST(BuildModel, M3PooledGridBecomesSixSteps) {
  auto g = build_model(cfg_for(Variant::M3_TD));
  EXPECT_EQ(g.input_shape(), (Shape{8, 6}));
  std::map<std::string, Shape> out;
  for (const auto& s : g.stages()) out[s.name] = s.output;
  EXPECT_EQ(out["CNN_2D"], (Shape{128, 6, 4}));
  EXPECT_EQ(out["MP_2D"], (Shape{128, 3, 2}));
  EXPECT_EQ(out["Reshape"], (Shape{6, 128}));
  EXPECT_EQ(out["Flatten"], (Shape{768}));
}

TEST(BuildModel, M1VanillaUsesOneDenseOverFlattenedMap) {
  auto g = build_model(cfg_for(Variant::M1_VAN));
  const auto rows = g.stage_table();
  EXPECT_EQ(rows.back().network, "FFNN_1");
  EXPECT_EQ(rows.back().parameters, 128u * 141u + 141u);
  EXPECT_EQ(rows[rows.size() - 2].parameters, 768u * 128u + 128u);
}

TEST(BuildModel, GeometryErrorNamesStage) {
  try {
    build_model(cfg_for(Variant::M3_TD, 13));
    FAIL() << "expected BuildError";
  } catch (const BuildError& e) {
    EXPECT_EQ(e.stage(), "CNN_2D");
  }
  auto cfg = cfg_for(Variant::M1_TD);
  cfg.factors = FactorPair{7, 7};
  try {
    build_model(cfg);
    FAIL() << "expected BuildError";
  } catch (const BuildError& e) {
    EXPECT_EQ(e.stage(), "Input");
  }
  // Model 2 has no spatial stage, so any N builds
  EXPECT_NO_THROW(build_model(cfg_for(Variant::M2_VAN, 13)));
}

TEST(BuildModel, ConfigErrors) {
  EXPECT_THROW(build_model(cfg_for(Variant::M3_TD, 48, 1)), ConfigError);
  EXPECT_THROW(build_model(cfg_for(Variant::M3_TD, 48, 2, 0)), ConfigError);
}

TEST(BuildModel, SeedDeterminesWeights) {
  auto a = build_model(cfg_for(Variant::M3_TD, 12, 2, 8));
  auto b = build_model(cfg_for(Variant::M3_TD, 12, 2, 8));
  auto cfg = cfg_for(Variant::M3_TD, 12, 2, 8);
  cfg.seed = 2;
  auto c = build_model(cfg);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  EXPECT_EQ(pa[0]->value, pb[0]->value);
  EXPECT_NE(pa[0]->value, pc[0]->value);
}

TEST(Variant, ParsesSpellings) {
  EXPECT_EQ(parse_variant("m3-td"), Variant::M3_TD);
  EXPECT_EQ(parse_variant("M1_VAN"), Variant::M1_VAN);
  EXPECT_EQ(parse_variant("m2_van"), Variant::M2_VAN);
  EXPECT_THROW(parse_variant("m4-td"), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  auto cfg = cfg_for(Variant::M2_VAN, 12, 5, 16);
  cfg.factors = FactorPair{3, 4};
  cfg.seed = 77;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  EXPECT_THROW(config_from_json(nlohmann::json{{"variant", "M3_TD"}}), ConfigError);
}

// ---- forward / backward ------------------------------------------------------------

TEST(ModelGradients, ShapesMatchParametersForEveryVariant) {
  Rng rng(1);
  for (auto v : kAllVariants) {
    auto g = build_model(cfg_for(v, 48, 24));
    Tensor x = random_input(g, 4, rng);
    g.zero_grad();
    Tensor logits = g.forward(x, Mode::Train);
    ASSERT_EQ(logits.shape(), (Shape{4, 24}));
    std::vector<int> labels = {0, 5, 23, 7};
    auto loss = softmax_cross_entropy_batch(logits, labels);
    Tensor dx = g.backward(loss.grad);
    EXPECT_EQ(dx.shape(), x.shape()) << to_string(v);
    for (auto& [name, p] : g.named_parameters()) EXPECT_EQ(p->grad.shape(), p->value.shape()) << name;
  }
}

// End-to-end check of the composed backward pass against central differences
// of the batch cross-entropy, on narrow models.
TEST(ModelGradients, FiniteDifferenceOnSmallModels) {
  Rng rng(8);
  for (auto v : kAllVariants) {
    auto cfg = cfg_for(v, 12, 3, 4);
    auto g = build_model(cfg);
    Tensor x = random_input(g, 4, rng);
    std::vector<int> labels = {0, 1, 2, 1};
    auto loss_at = [&] { return softmax_cross_entropy_batch(g.forward(x, Mode::Train), labels).loss; };
    g.zero_grad();
    g.backward(softmax_cross_entropy_batch(g.forward(x, Mode::Train), labels).grad);
    for (auto& [name, p] : g.named_parameters()) {
      const Tensor analytic = p->grad;
      const Tensor original = p->value;
      auto objective = [&](const Tensor& probe) {
        p->value = probe;
        const double l = loss_at();
        p->value = original;
        return l;
      };
      const double err = testing::relative_error(analytic, finite_diff_grad(objective, original, 1e-5));
      EXPECT_LT(err, 1e-4) << to_string(v) << " " << name;
    }
  }
}

TEST(Predict, ArgmaxAndTies) {
  auto r = predict_from_logits(Tensor::matrix({{std::log(0.1), std::log(0.7), std::log(0.2)}, {1.0, 1.0, 0.0}}));
  EXPECT_EQ(r.classes, (std::vector<int>{1, 0}));
  EXPECT_NEAR(r.probs.at(0, 1), 0.7, 1e-12);
  EXPECT_NEAR(r.probs.at(1, 0) + r.probs.at(1, 1) + r.probs.at(1, 2), 1.0, 1e-12);
}

TEST(Predict, BatchIsOrderPreservingAndDeterministic) {
  Rng rng(3);
  auto g = build_model(cfg_for(Variant::M3_TD, 48, 5, 16));
  Tensor x = random_input(g, 6, rng);
  auto all = predict(g, x);
  EXPECT_EQ(all.classes, predict(g, x).classes);
  for (std::size_t i = 0; i < 6; ++i) {
    auto one = predict(g, batch_rows(x, i, i + 1));
    EXPECT_EQ(one.classes[0], all.classes[i]);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(one.probs.at(0, k), all.probs.at(i, k), 1e-12);
  }
}

TEST(Predict, ArgmaxInvariantUnderPositiveScaling) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(20);
    Tensor logits = testing::random_like({3, c}, rng, -5.0, 5.0);
    const double scale = rng.uniform(0.01, 100.0);
    Tensor scaled = logits;
    for (auto& val : scaled.data()) val *= scale;
    EXPECT_EQ(predict_from_logits(logits).classes, predict_from_logits(scaled).classes);
  }
}

TEST(Predict, WrongInputShape) {
  auto g = build_model(cfg_for(Variant::M3_TD, 48, 5, 8));
  EXPECT_THROW(predict(g, Tensor({2, 6, 8})), ShapeError);
  EXPECT_THROW(predict(g, Tensor({48})), ShapeError);
}

TEST(HolisticFeatures, WidthsAndDeterminism) {
  Rng rng(5);
  auto td = build_model(cfg_for(Variant::M3_TD, 48, 141));
  auto van = build_model(cfg_for(Variant::M3_VAN, 48, 141));
  Tensor x = random_input(td, 2, rng);
  auto ftd = extract_holistic_features(td, x);
  EXPECT_EQ(ftd.shape(), (Shape{2, 768}));
  EXPECT_EQ(extract_holistic_features(van, x).shape(), (Shape{2, 128}));
  EXPECT_EQ(ftd, extract_holistic_features(td, x));
}

TEST(ShapeInputs, FramesAndSequences) {
  Dataset ds;
  ds.class_names = {"a"};
  std::vector<double> f(12);
  for (std::size_t i = 0; i < 12; ++i) f[i] = static_cast<double>(i) / 11.0;
  ds.records.push_back({f, 0});
  auto frames = shape_inputs(cfg_for(Variant::M1_TD, 12, 2), ds);
  EXPECT_EQ(frames.shape(), (Shape{1, 4, 3}));
  EXPECT_EQ(frames.at(0, 1, 0), f[3]);
  auto seq = shape_inputs(cfg_for(Variant::M2_TD, 12, 2), ds);
  EXPECT_EQ(seq.shape(), (Shape{1, 12, 1}));
  EXPECT_EQ(seq.at(0, 5, 0), f[5]);
  EXPECT_THROW(shape_inputs(cfg_for(Variant::M2_TD, 48, 2), ds), ShapeError);
}

}  // namespace
}  // namespace tdntc
