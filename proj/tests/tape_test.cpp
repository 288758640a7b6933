#include "dclm/gradcheck.hpp"
#include "dclm/tape.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace dclm;
using dclm::testing::fd_check;
using dclm::testing::random_tensor;

TEST_CASE("matmul forward matches a hand computation") {
  Tape tape;
  Tensor a = Tensor::zeros_matrix(2, 3);
  a.value << 1, 2, 3, 4, 5, 6;
  Tensor b = Tensor::zeros_matrix(3, 2);
  b.value << 7, 8, 9, 10, 11, 12;
  Var c = tape.matmul(tape.leaf(a), tape.leaf(b));
  CHECK(tape.value(c)(0, 0) == doctest::Approx(58));
  CHECK(tape.value(c)(0, 1) == doctest::Approx(64));
  CHECK(tape.value(c)(1, 0) == doctest::Approx(139));
  CHECK(tape.value(c)(1, 1) == doctest::Approx(154));
}

TEST_CASE("concat stacks and slice recovers the pieces") {
  Tape tape;
  Tensor a = Tensor::zeros_vector(2);
  a.value << 1, 2;
  Tensor b = Tensor::zeros_vector(3);
  b.value << 3, 4, 5;
  Var joined = tape.concat(tape.leaf(a), tape.leaf(b));
  CHECK(tape.rows(joined) == 5);
  CHECK(tape.value(joined)(2, 0) == doctest::Approx(3));
  Var back = tape.slice(joined, 2, 5);
  CHECK(tape.value(back) == b.value);
}

TEST_CASE("pointwise ops at zero") {
  Tape tape;
  Tensor z = Tensor::zeros_vector(4);
  Var l = tape.leaf(z);
  CHECK(tape.value(tape.sigmoid(l))(1, 0) == doctest::Approx(0.5));
  CHECK(tape.value(tape.tanh(l))(2, 0) == doctest::Approx(0.0));
}

TEST_CASE("mean averages all elements") {
  Tape tape;
  Tensor a = Tensor::zeros_matrix(2, 2);
  a.value << 1, 2, 3, 6;
  CHECK(tape.value(tape.mean(tape.leaf(a)))(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("softmax cross entropy on uniform logits is log V") {
  Tape tape;
  Tensor z = Tensor::zeros_vector(7);
  Var loss = tape.softmax_cross_entropy(tape.leaf(z), 3);
  CHECK(tape.value(loss)(0, 0) == doctest::Approx(std::log(7.0)));
}

TEST_CASE("softmax cross entropy is shift invariant") {
  Rng rng(11);
  Tensor z = random_tensor(9, 1, rng);
  Tensor shifted = z;
  shifted.value.array() += 123.25;
  Tape tape;
  const Scalar a = tape.value(tape.softmax_cross_entropy(tape.leaf(z), 4))(0, 0);
  const Scalar b =
      tape.value(tape.softmax_cross_entropy(tape.leaf(shifted), 4))(0, 0);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy survives large logits") {
  Tape tape;
  Tensor z = Tensor::zeros_vector(3);
  z.value << 1000, 999, -1000;
  const Scalar loss =
      tape.value(tape.softmax_cross_entropy(tape.leaf(z), 0))(0, 0);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(std::log(1 + std::exp(-1.0))));
}

TEST_CASE("shape mismatches name the op and shapes") {
  Tape tape;
  Tensor a = Tensor::zeros_matrix(2, 3);
  Tensor b = Tensor::zeros_matrix(2, 3);
  try {
    tape.matmul(tape.leaf(a), tape.leaf(b));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.slice(tape.leaf(a), 1, 5), ShapeError);
  Tensor v = Tensor::zeros_vector(2);
  CHECK_THROWS_AS(tape.add(tape.leaf(a), tape.leaf(v)), ShapeError);
  CHECK_THROWS_AS(tape.softmax_cross_entropy(tape.leaf(a), 0), ShapeError);
  CHECK_THROWS_AS(tape.softmax_cross_entropy(tape.leaf(v), 2), ShapeError);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  Tensor a = Tensor::zeros_matrix(2, 2);
  Var l = tape.leaf(a);
  CHECK_THROWS_AS(tape.backward(l), ShapeError);
}

TEST_CASE("lookup gradient scatters into the table row") {
  Tape tape;
  Tensor table = Tensor::zeros_matrix(4, 3);
  table.value.setConstant(0.25);
  Var t = tape.leaf(table);
  Var row = tape.lookup(t, 2);
  Var loss = tape.scale(tape.mean(row), 3.0);
  tape.backward(loss);
  REQUIRE(table.has_grad());
  CHECK(table.grad.row(2).sum() == doctest::Approx(3.0));
  CHECK(table.grad.row(0).cwiseAbs().sum() == doctest::Approx(0.0));
  CHECK(table.grad.row(1).cwiseAbs().sum() == doctest::Approx(0.0));
  CHECK(table.grad.row(3).cwiseAbs().sum() == doctest::Approx(0.0));
}

TEST_CASE("repeated lookup of one row accumulates") {
  Tape tape;
  Tensor table = Tensor::zeros_matrix(3, 2);
  Var t = tape.leaf(table);
  Var sum = tape.add(tape.lookup(t, 1), tape.lookup(t, 1));
  tape.backward(tape.mean(sum));
  REQUIRE(table.has_grad());
  CHECK(table.grad(1, 0) == doctest::Approx(1.0));
  CHECK(table.grad(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("backward into a sink leaves tensors untouched") {
  Rng rng(5);
  Tensor a = random_tensor(3, 3, rng);
  Tensor b = random_tensor(3, 3, rng);

  Matrix direct_a, direct_b;
  {
    Tape tape;
    Var loss = tape.mean(tape.matmul(tape.leaf(a), tape.leaf(b)));
    tape.backward(loss);
    direct_a = a.grad;
    direct_b = b.grad;
    a.drop_grad();
    b.drop_grad();
  }
  {
    Tape tape;
    GradSink sink;
    Var loss = tape.mean(tape.matmul(tape.leaf(a), tape.leaf(b)));
    tape.backward(loss, sink);
    CHECK_FALSE(a.has_grad());
    CHECK_FALSE(b.has_grad());
    REQUIRE(sink.find(&a) != nullptr);
    REQUIRE(sink.find(&b) != nullptr);
    CHECK(*sink.find(&a) == direct_a);
    CHECK(*sink.find(&b) == direct_b);
  }
}

TEST_CASE("tape pool reuse gives identical results") {
  Rng rng(7);
  Tensor a = random_tensor(4, 4, rng);
  Tape tape;
  auto run = [&]() -> Scalar {
    Var loss = tape.mean(tape.tanh(tape.matmul(tape.leaf(a), tape.leaf(a))));
    tape.backward(loss);
    Scalar g = a.grad.sum();
    a.drop_grad();
    return g;
  };
  const Scalar first = run();
  const Scalar second = run();
  CHECK(first == second);
}

TEST_CASE("finite differences confirm every op") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    {
      ParameterSet p;
      p.add("a", random_tensor(3, 4, rng));
      p.add("b", random_tensor(4, 2, rng));
      fd_check(p, [](Tape& t, ParameterSet& p) {
        return t.mean(t.matmul(t.leaf(p.get("a")), t.leaf(p.get("b"))));
      });
    }
    {
      ParameterSet p;
      p.add("a", random_tensor(3, 3, rng));
      p.add("b", random_tensor(3, 3, rng));
      p.add("c", random_tensor(3, 3, rng));
      fd_check(p, [](Tape& t, ParameterSet& p) {
        Var s = t.add(t.leaf(p.get("a")), t.leaf(p.get("b")));
        return t.mean(t.mul(s, t.leaf(p.get("c"))));
      });
    }
    {
      ParameterSet p;
      p.add("a", random_tensor(2, 1, rng));
      p.add("b", random_tensor(4, 1, rng));
      fd_check(p, [](Tape& t, ParameterSet& p) {
        Var j = t.concat(t.leaf(p.get("a")), t.leaf(p.get("b")));
        return t.mean(t.tanh(t.slice(j, 1, 5)));
      });
    }
    {
      ParameterSet p;
      p.add("a", random_tensor(3, 2, rng));
      fd_check(p, [](Tape& t, ParameterSet& p) {
        return t.mean(t.tanh(t.sigmoid(t.leaf(p.get("a")))));
      });
    }
    {
      ParameterSet p;
      p.add("table", random_tensor(5, 3, rng));
      fd_check(p, [](Tape& t, ParameterSet& p) {
        Var tab = t.leaf(p.get("table"));
        Var sum = t.add(t.lookup(tab, 1), t.lookup(tab, 4));
        Var twice = t.add(t.lookup(tab, 1), sum);
        return t.scale(t.mean(t.sigmoid(twice)), 1.75);
      });
    }
    {
      ParameterSet p;
      p.add("w", random_tensor(6, 4, rng));
      p.add("x", random_tensor(4, 1, rng));
      p.add("bias", random_tensor(6, 1, rng));
      const int target = static_cast<int>(rng.below(6));
      fd_check(p, [target](Tape& t, ParameterSet& p) {
        Var z = t.add(t.matmul(t.leaf(p.get("w")), t.leaf(p.get("x"))),
                      t.leaf(p.get("bias")));
        return t.softmax_cross_entropy(z, target);
      });
    }
    {
      // One leaf feeding two paths exercises gradient accumulation.
      ParameterSet p;
      p.add("a", random_tensor(3, 3, rng));
      p.add("b", random_tensor(3, 3, rng));
      p.add("c", random_tensor(3, 3, rng));
      fd_check(p, [](Tape& t, ParameterSet& p) {
        Var a = t.leaf(p.get("a"));
        Var left = t.matmul(a, t.leaf(p.get("b")));
        Var right = t.matmul(a, t.leaf(p.get("c")));
        return t.mean(t.mul(t.tanh(left), t.sigmoid(right)));
      });
    }
  }
}
