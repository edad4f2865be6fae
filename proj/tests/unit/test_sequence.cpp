#include <doctest.h>

#include <cmath>

#include "foley/error.hpp"
#include "foley/optim.hpp"
#include "foley/sequence.hpp"
#include "op_cases.hpp"

using namespace foley;
using ad::Tensor;

namespace {

seq::LstmCell oracle_cell() {
  seq::LstmCell c;
  c.input_dim = 3;
  c.hidden_dim = 2;
  std::vector<double> wx(3 * 8), wh(2 * 8);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 8; ++j) wx[i * 8 + j] = 0.1 * std::sin(static_cast<double>(i * 8 + j + 1));
  }
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 8; ++j) wh[i * 8 + j] = 0.1 * std::cos(static_cast<double>(i * 8 + j + 1));
  }
  c.input_weight = Tensor::from({3, 8}, wx, true);
  c.recurrent_weight = Tensor::from({2, 8}, wh, true);
  for (std::size_t g = 0; g < 4; ++g) {
    c.gate_gain[g] = Tensor::full({2}, 1.0 + 0.1 * static_cast<double>(g), true);
    c.gate_bias[g] = Tensor::full({2}, 0.05 * static_cast<double>(g), true);
  }
  return c;
}

seq::FsLstmConfig toy_config() {
  seq::FsLstmConfig c;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.num_fast_cells = 3;
  c.num_classes = 3;
  c.residual_dim = 5;
  c.seed = 11;
  return c;
}

std::vector<Tensor> random_sequence(std::size_t steps, std::size_t batch, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(testing::random_input({{batch, dim}}, rng).detach());
  return xs;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_SUITE("lstm cell") {
  TEST_CASE("one step matches the numpy reference") {
    const auto cell = oracle_cell();
    const seq::CellState prev{Tensor::from({1, 2}, {0.1, -0.1}), Tensor::from({1, 2}, {0.2, 0.05})};
    const auto next = seq::lstm_cell_step(cell, prev, Tensor::from({1, 3}, {0.3, -0.2, 0.5}), {});
    CHECK(next.hidden[0] == doctest::Approx(-0.07263238273132298).epsilon(1e-12));
    CHECK(next.hidden[1] == doctest::Approx(0.15076275017509128).epsilon(1e-12));
    CHECK(next.cell[0] == doctest::Approx(-0.09397875023488195).epsilon(1e-12));
    CHECK(next.cell[1] == doctest::Approx(0.6568309868486335).epsilon(1e-12));
  }

  TEST_CASE("all-zero weights, state and input give a zero state") {
    Rng rng(1);
    auto cell = seq::LstmCell::create(3, 4, 1.0, rng);
    nn::ParamList params;
    cell.collect("cell", params);
    nn::zero_all(params);
    const auto next = seq::lstm_cell_step(cell, seq::zero_state(2, 4), Tensor::zeros({2, 3}), {});
    for (double v : next.hidden.data()) CHECK(v == 0.0);
    for (double v : next.cell.data()) CHECK(v == 0.0);
  }

  TEST_CASE("forget bias starts at one") {
    Rng rng(1);
    const auto cell = seq::LstmCell::create(3, 4, 1.0, rng);
    for (double v : cell.gate_bias[1].data()) CHECK(v == 1.0);
    for (double v : cell.gate_bias[0].data()) CHECK(v == 0.0);
  }

  TEST_CASE("full zoneout carries the state unchanged") {
    const auto cell = oracle_cell();
    const seq::CellState prev{Tensor::from({1, 2}, {0.1, -0.1}), Tensor::from({1, 2}, {0.2, 0.05})};
    for (auto mode : {seq::Mode::train, seq::Mode::eval}) {
      const auto next = seq::lstm_cell_step(cell, prev, Tensor::from({1, 3}, {0.3, -0.2, 0.5}), {mode, 1.0, {}});
      CHECK(values(next.hidden) == values(prev.hidden));
      CHECK(values(next.cell) == values(prev.cell));
    }
  }

  TEST_CASE("input-free cell and shape errors") {
    Rng rng(2);
    const auto free = seq::LstmCell::create(0, 4, 1.0, rng);
    CHECK_NOTHROW(seq::lstm_cell_step(free, seq::zero_state(1, 4), Tensor{}, {}));
    CHECK_THROWS_AS(seq::lstm_cell_step(free, seq::zero_state(1, 4), Tensor::zeros({1, 3}), {}), ShapeError);
    const auto cell = oracle_cell();
    CHECK_THROWS_AS(seq::lstm_cell_step(cell, seq::zero_state(1, 3), Tensor::zeros({1, 3}), {}), ShapeError);
    CHECK_THROWS_AS(seq::lstm_cell_step(cell, seq::zero_state(1, 2), Tensor::zeros({1, 4}), {}), ShapeError);
  }

  TEST_CASE("one step passes a gradient check") {
    const auto cell = oracle_cell();
    nn::ParamList params;
    cell.collect("cell", params);
    const seq::StepContext ctx{seq::Mode::train, 0.3, {5, 1, 2, 0}};
    const auto r = ad::grad_check(
        [&](std::span<const Tensor> in) {
          const auto next = seq::lstm_cell_step(cell, {in[1], in[2]}, in[0], ctx);
          return ad::add(ad::sum(ad::mul(next.hidden, next.hidden)), ad::sum(next.cell));
        },
        {Tensor::from({2, 3}, {0.3, -0.2, 0.5, 0.1, 0.4, -0.6}, true), Tensor::from({2, 2}, {0.1, -0.1, 0.3, 0.2}, true),
         Tensor::from({2, 2}, {0.2, 0.05, -0.3, 0.1}, true)});
    CHECK(r.passed);
    const auto p = ad::grad_check_params(
        [&] {
          const auto next = seq::lstm_cell_step(cell, {Tensor::from({1, 2}, {0.1, -0.1}), Tensor::from({1, 2}, {0.2, 0.05})},
                                                Tensor::from({1, 3}, {0.3, -0.2, 0.5}), ctx);
          return ad::sum(ad::mul(next.hidden, Tensor::from({1, 2}, {1.0, -2.0})));
        },
        nn::tensors_of(params));
    INFO("param rel err ", p.max_relative_error);
    CHECK(p.passed);
  }
}

TEST_SUITE("fs-lstm") {
  TEST_CASE("output shapes for the default class and bin counts") {
    seq::FsLstmConfig c;
    c.input_dim = 6;
    const seq::FsLstm model(c);
    const auto xs = random_sequence(5, 2, 6, 1);
    const auto out = model.forward(xs, {});
    REQUIRE(out.logits.size() == 5);
    CHECK(out.logits[0].shape() == ad::Shape{2, 12});
    const auto res = model.residuals(out);
    CHECK(res[4].shape() == ad::Shape{2, 129});
    CHECK(model.aligned_residuals(out, 9).shape() == ad::Shape{18, 129});
  }

  TEST_CASE("zero weights give uniform class probabilities") {
    const seq::FsLstm model(toy_config());
    nn::ParamList params;
    model.collect(params);
    nn::zero_all(params);
    const auto out = model.forward(random_sequence(1, 1, 3, 2), {});
    const auto p = ad::softmax(model.pooled_logits(out));
    for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("reversing the frames changes the logits") {
    const seq::FsLstm model(toy_config());
    auto xs = random_sequence(6, 1, 3, 3);
    const auto forward = values(model.pooled_logits(model.forward(xs, {})));
    std::reverse(xs.begin(), xs.end());
    CHECK(values(model.pooled_logits(model.forward(xs, {}))) != forward);
  }

  TEST_CASE("deep fast cells run only when there are more than two") {
    auto c = toy_config();
    c.num_fast_cells = 2;
    const seq::FsLstm two(c);
    two.forward(random_sequence(4, 1, 3, 4), {});
    CHECK(two.deep_fast_steps() == 0);
    c.num_fast_cells = 4;
    const seq::FsLstm four(c);
    four.forward(random_sequence(4, 1, 3, 4), {});
    CHECK(four.deep_fast_steps() == 8);
    CHECK(four.fast_cells()[2].input_dim == 0);
  }

  TEST_CASE("forward passes are bitwise repeatable") {
    auto c = toy_config();
    c.zoneout_prob = 0.0;
    c.dropout_prob = 0.0;
    const seq::FsLstm model(c);
    const auto xs = random_sequence(5, 2, 3, 5);
    CHECK(values(model.pooled_logits(model.forward(xs, {seq::Mode::train, 1}))) ==
          values(model.pooled_logits(model.forward(xs, {seq::Mode::train, 2}))));
    const seq::FsLstm stochastic(toy_config());
    CHECK(values(stochastic.pooled_logits(stochastic.forward(xs, {seq::Mode::train, 3}))) ==
          values(stochastic.pooled_logits(stochastic.forward(xs, {seq::Mode::train, 3}))));
  }

  TEST_CASE("heads are independent") {
    const seq::FsLstm model(toy_config());
    const auto xs = random_sequence(4, 2, 3, 6);
    const auto out = model.forward(xs, {});
    const auto logits = values(model.pooled_logits(out));
    const auto residual = values(model.aligned_residuals(out, 4));
    nn::ParamList res_head;
    model.residual_head().collect("r", res_head);
    nn::zero_all(res_head);
    const auto out2 = model.forward(xs, {});
    CHECK(values(model.pooled_logits(out2)) == logits);
    const auto zeroed = model.aligned_residuals(out2, 4);
    for (double v : zeroed.data()) CHECK(v == 0.0);
    nn::ParamList cls_head;
    model.class_head().collect("c", cls_head);
    nn::zero_all(cls_head);
    CHECK(values(model.pooled_logits(model.forward(xs, {}))) != logits);
    CHECK(residual.size() == 2 * 4 * 5);
  }

  TEST_CASE("argmax is invariant to positive rescaling") {
    const seq::FsLstm model(toy_config());
    const auto logits = model.pooled_logits(model.forward(random_sequence(3, 4, 3, 7), {}));
    const auto scaled = ad::scale(logits, 3.7);
    for (std::size_t b = 0; b < 4; ++b) {
      auto row = logits.data().subspan(b * 3, 3);
      auto srow = scaled.data().subspan(b * 3, 3);
      CHECK(std::max_element(row.begin(), row.end()) - row.begin() ==
            std::max_element(srow.begin(), srow.end()) - srow.begin());
    }
  }

  TEST_CASE("feature width mismatch and bad configurations") {
    const seq::FsLstm model(toy_config());
    CHECK_THROWS_AS(model.forward(random_sequence(2, 1, 4, 1), {}), ShapeError);
    auto c = toy_config();
    c.num_fast_cells = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = toy_config();
    c.hidden_dim = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("simple baseline shares the interface") {
    const auto model = seq::make_sequence_model(seq::SequenceKind::simple_lstm, toy_config());
    const auto out = model->forward(random_sequence(3, 2, 3, 8), {});
    CHECK(model->pooled_logits(out).shape() == ad::Shape{2, 3});
    nn::ParamList simple, fs;
    model->collect(simple);
    seq::make_sequence_model(seq::SequenceKind::fs_lstm, toy_config())->collect(fs);
    CHECK(simple.size() < fs.size());
  }
}

TEST_SUITE("fs-lstm loss") {
  TEST_CASE("exact residuals and confident logits leave only cross-entropy") {
    const auto logits = Tensor::from({1, 3}, {30.0, 0.0, 0.0});
    const std::size_t label[] = {0};
    const auto target = Tensor::from({2, 2}, {1.0, 2.0, 0.5, 0.25});
    const auto base = Tensor::from({2, 2}, {0.5, 0.5, 0.5, 0.5});
    const auto loss = seq::fslstm_loss(logits, ad::sub(target, base), label, target, base);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
  }

  TEST_CASE("unit residual error on a single frame adds ln 2") {
    const auto logits = Tensor::from({1, 2}, {0.0, 0.0});
    const std::size_t label[] = {1};
    const auto zero = Tensor::zeros({1, 3});
    const auto loss = seq::fslstm_loss(logits, Tensor::from({1, 3}, {0, 1, 0}), label, zero, zero);
    CHECK(loss.item() == doctest::Approx(std::log(2.0) + std::log(2.0)).epsilon(1e-12));
    const auto ce_only = seq::fslstm_loss(logits, Tensor::from({1, 3}, {0, 1, 0}), label, zero, zero, 0.0);
    CHECK(ce_only.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("misaligned rows raise an alignment error") {
    const std::size_t label[] = {0};
    CHECK_THROWS_AS(seq::fslstm_loss(Tensor::zeros({1, 2}), Tensor::zeros({3, 4}), label, Tensor::zeros({2, 4}),
                                     Tensor::zeros({2, 4})),
                    AlignmentError);
  }

  TEST_CASE("full loss passes a gradient check through every parameter") {
    const seq::FsLstm model(toy_config());
    nn::ParamList params;
    model.collect(params);
    const auto xs = random_sequence(3, 2, 3, 9);
    Rng rng(10);
    const auto target = testing::random_input({{8, 5}, testing::Domain::positive}, rng).detach();
    const auto base = testing::random_input({{8, 5}, testing::Domain::positive}, rng).detach();
    const std::size_t labels[] = {2, 0};
    const auto r = ad::grad_check_params(
        [&] {
          const auto out = model.forward(xs, {seq::Mode::train, 4});
          return seq::fslstm_loss(model.pooled_logits(out), model.aligned_residuals(out, 4), labels, target, base);
        },
        nn::tensors_of(params));
    INFO("rel err ", r.max_relative_error, " at input ", r.worst_input);
    CHECK(r.passed);
  }
}
