#include <gtest/gtest.h>

#include <random>

#include "nmrdeco/sequence.hpp"
#include "oracles.hpp"

using namespace nmrdeco;
using namespace nmrdeco::seq;
using oracle::kPi;
using oracle::Mat;

namespace {

const char* kEntangling = "[θ]x^2 - [π/2]x^{1,2} - 1/(4J12) - [π]x^{1,2} - 1/(4J12) - [π/2]y^2";
const char* kBellPrep = "[pi/2]x^{1,2} - 1/(4J12) - [pi]x^{1,2} - 1/(4J12) - [pi/2]y^{2}";

std::vector<TokenKind> kinds(const std::vector<Token>& t) {
  std::vector<TokenKind> out;
  for (const auto& x : t) out.push_back(x.kind);
  return out;
}

SyntaxError syntax_error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const SyntaxError& e) {
    return e;
  }
  ADD_FAILURE() << "no syntax error for: " << text;
  return SyntaxError(0, 0, "none");
}

// Random well-formed AST over labels {1,2,3} (or TCE-style labels).
PulseSequence random_sequence(std::mt19937_64& gen) {
  std::uniform_int_distribution<int> pick(0, 99);
  const bool decouple = pick(gen) % 3 == 0;
  const std::vector<std::string> labels =
      decouple ? std::vector<std::string>{"1", "2"} : std::vector<std::string>{"1", "2", "3"};
  PulseSequence s;
  const int length = 1 + pick(gen) % 8;
  for (int i = 0; i < length; ++i) {
    switch (pick(gen) % 5) {
      case 0:
      case 1: {
        Pulse p;
        switch (pick(gen) % 4) {
          case 0: p.angle = PiMultiple{(pick(gen) % 7) - 3 == 0 ? 1 : (pick(gen) % 7) - 3, 1 + pick(gen) % 4}; break;
          case 1: p.angle = Degrees{static_cast<double>(pick(gen)) + 0.25}; break;
          case 2: p.angle = Radians{0.001 * pick(gen)}; break;
          default: p.angle = Symbol{"theta"};
        }
        if (auto* pm = std::get_if<PiMultiple>(&p.angle); pm && pm->numerator == 0) pm->numerator = 1;
        p.axis = pick(gen) % 2 ? Axis::x : Axis::y;
        for (const auto& l : labels)
          if (pick(gen) % 2 || (p.targets.empty() && l == labels.back())) p.targets.push_back(l);
        s.elements.push_back(p);
        break;
      }
      case 2: s.elements.push_back(Delay{CouplingQuarter{"1", std::to_string(2 + pick(gen) % 2)}}); break;
      case 3:
        s.elements.push_back(Delay{FixedDelay{0.5 * (pick(gen) % 9), pick(gen) % 2 ? TimeUnit::ms : TimeUnit::us}});
        break;
      default: s.elements.push_back(Refocus{Delay{Symbol{"t"}}});
    }
  }
  if (decouple) {
    s.elements.insert(s.elements.begin(), Decouple{"3", true});
    s.elements.push_back(Decouple{"3", false});
  }
  for (const auto& e : s.elements) {
    if (const auto* p = std::get_if<Pulse>(&e))
      if (const auto* sym = std::get_if<Symbol>(&p->angle)) s.parameters.insert(sym->name);
    if (std::holds_alternative<Refocus>(e)) s.parameters.insert("t");
  }
  return s;
}

SpinSystem three_spin(double o1, double o2, double o3) {
  return SpinSystem({{"1", o1}, {"2", o2}, {"3", o3}}, {{"1", "2", 103.1}, {"2", "3", 201.3}, {"1", "3", 9.23}}, "2");
}

}  // namespace

// ---------------------------------------------------------------------------
// tokenize

TEST(Tokenize, PulseWithTargetSet) {
  const auto t = tokenize("[pi/2]x^{1,2}");
  const std::vector<TokenKind> expected{TokenKind::LBracket, TokenKind::Angle,  TokenKind::RBracket, TokenKind::Axis,
                                        TokenKind::Caret,    TokenKind::LBrace, TokenKind::Label,    TokenKind::Comma,
                                        TokenKind::Label,    TokenKind::RBrace, TokenKind::End};
  EXPECT_EQ(kinds(t), expected);
  EXPECT_EQ(*t[1].angle, Angle(PiMultiple{1, 2}));
  EXPECT_EQ(t[6].text, "1");
  EXPECT_EQ(t[8].text, "2");
}

TEST(Tokenize, CouplingDelay) {
  const auto t = tokenize("1/(4J12)");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].kind, TokenKind::CouplingDelay);
  EXPECT_EQ(t[0].a, "1");
  EXPECT_EQ(t[0].b, "2");
  const auto named = tokenize("1/(4JC1C2) - 1/(4J{C2,H})");
  EXPECT_EQ(named[0].a, "C1");
  EXPECT_EQ(named[0].b, "C2");
  EXPECT_EQ(named[2].a, "C2");
  EXPECT_EQ(named[2].b, "H");
}

TEST(Tokenize, ThetaSpellingsGiveTheSameParameter) {
  for (const char* text : {"[theta]x^{2}", "[θ]x^{2}"}) {
    const auto t = tokenize(text);
    EXPECT_EQ(*t[1].angle, Angle(Symbol{"theta"})) << text;
  }
}

TEST(Tokenize, AngleLiteralForms) {
  EXPECT_EQ(*tokenize("[3pi/2]x^1")[1].angle, Angle(PiMultiple{3, 2}));
  EXPECT_EQ(*tokenize("[2*pi]x^1")[1].angle, Angle(PiMultiple{2, 1}));
  EXPECT_EQ(*tokenize("[-pi]x^1")[1].angle, Angle(PiMultiple{-1, 1}));
  EXPECT_EQ(*tokenize("[50.3deg]x^1")[1].angle, Angle(Degrees{50.3}));
  EXPECT_EQ(*tokenize("[50.3°]x^1")[1].angle, Angle(Degrees{50.3}));
  EXPECT_EQ(*tokenize("[0.75]x^1")[1].angle, Angle(Radians{0.75}));
}

TEST(Tokenize, WhitespaceAndCommentsAreIgnored) {
  const auto a = kinds(tokenize("[pi]x^{1,2}-1/(4J12)"));
  const auto b = kinds(tokenize("  [ pi ]x^{ 1 , 2 }\n\t - # comment\n 1/(4J12)  "));
  EXPECT_EQ(a, b);
}

TEST(Tokenize, PositionsCountLinesAndCodePoints) {
  const auto t = tokenize("[θ]x^2 -\n  5ms");
  EXPECT_EQ(t[2].line, 1u);
  EXPECT_EQ(t[2].column, 3u);  // ']' after a two-byte theta
  const Token& five = t[7];
  EXPECT_EQ(five.kind, TokenKind::Duration);
  EXPECT_EQ(five.line, 2u);
  EXPECT_EQ(five.column, 3u);
}

TEST(Tokenize, IllegalCharacterIsPositioned) {
  try {
    tokenize("[pi]x^{1} - 5ms ; 3ms");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.column(), 17u);
  }
}

// ---------------------------------------------------------------------------
// parse

TEST(Parse, EntanglingSequence) {
  const PulseSequence s = parse(kEntangling);
  ASSERT_EQ(s.elements.size(), 6u);
  EXPECT_EQ(s.parameters, std::set<std::string>{"theta"});
  EXPECT_EQ(std::get<Pulse>(s.elements[0]), (Pulse{Symbol{"theta"}, Axis::x, {"2"}}));
  EXPECT_EQ(std::get<Pulse>(s.elements[1]), (Pulse{PiMultiple{1, 2}, Axis::x, {"1", "2"}}));
  EXPECT_EQ(std::get<Delay>(s.elements[2]), (Delay{CouplingQuarter{"1", "2"}}));
  EXPECT_EQ(std::get<Pulse>(s.elements[3]), (Pulse{PiMultiple{1, 1}, Axis::x, {"1", "2"}}));
  EXPECT_EQ(std::get<Pulse>(s.elements[5]), (Pulse{PiMultiple{1, 2}, Axis::y, {"2"}}));
}

TEST(Parse, RefocusedFixedDelay) {
  const PulseSequence s = parse("refocus(3.5ms)");
  ASSERT_EQ(s.elements.size(), 1u);
  const auto& r = std::get<Refocus>(s.elements[0]);
  EXPECT_EQ(r.inner, (Delay{FixedDelay{3.5, TimeUnit::ms}}));
  EXPECT_DOUBLE_EQ(std::get<FixedDelay>(r.inner.spec).seconds(), 0.0035);
}

TEST(Parse, BalancedDecoupling) {
  const PulseSequence s = parse("decouple(H on) - [pi/2]x^{1,2} - decouple(H off)");
  ASSERT_EQ(s.elements.size(), 3u);
  EXPECT_EQ(std::get<Decouple>(s.elements[0]), (Decouple{"H", true}));
  EXPECT_EQ(std::get<Decouple>(s.elements[2]), (Decouple{"H", false}));
}

TEST(Parse, SymbolicDelaysAreParameters) {
  const PulseSequence s = parse("t - refocus(tau) - [phi]y^1");
  EXPECT_EQ(s.parameters, (std::set<std::string>{"phi", "t", "tau"}));
}

TEST(Parse, EmptyInputIsEmptySequence) {
  EXPECT_TRUE(parse("").elements.empty());
  EXPECT_TRUE(parse("  # only a comment\n").elements.empty());
}

TEST(Parse, ErrorsCarryPositions) {
  struct Case {
    const char* text;
    std::size_t line, column;
    const char* fragment;
  };
  const std::vector<Case> cases{
      {"[pi]z^{1}", 1, 5, "unknown axis"},
      {"[pi]x^{}", 1, 7, "empty target"},
      {"[pi]x^{1,1}", 1, 10, "twice"},
      {"[pi]x^{1} -", 1, 12, "dangling"},
      {"[pi]x^{1} [pi]x^{2}", 1, 11, "'-'"},
      {"decouple(H off)", 1, 1, "without a matching"},
      {"decouple(H on) - decouple(H on) - decouple(H off)", 1, 18, "already decoupled"},
      {"decouple(H on) - 5ms", 1, 21, "never switched off"},
      {"[pi]x^{1} -\n 5", 2, 3, "time unit"},
  };
  for (const auto& c : cases) {
    const SyntaxError e = syntax_error_of(c.text);
    EXPECT_EQ(e.line(), c.line) << c.text;
    EXPECT_EQ(e.column(), c.column) << c.text << ": " << e.what();
    EXPECT_NE(e.message().find(c.fragment), std::string::npos) << c.text << ": " << e.what();
  }
}

// ---------------------------------------------------------------------------
// format

TEST(Format, CanonicalText) {
  EXPECT_EQ(format(Element{Pulse{PiMultiple{1, 1}, Axis::x, {"1", "2", "3"}}}), "[pi]x^{1,2,3}");
  EXPECT_EQ(format(Element{Refocus{Delay{CouplingQuarter{"1", "2"}}}}), "refocus(1/(4J12))");
  EXPECT_EQ(format(Element{Pulse{PiMultiple{3, 2}, Axis::y, {"C1"}}}), "[3pi/2]y^{C1}");
  EXPECT_EQ(format(Element{Pulse{PiMultiple{-1, 1}, Axis::y, {"H"}}}), "[-pi]y^{H}");
  EXPECT_EQ(format(Element{Delay{FixedDelay{3.5, TimeUnit::ms}}}), "3.5ms");
  EXPECT_EQ(format(Element{Delay{CouplingQuarter{"C1", "C2"}}}), "1/(4JC1C2)");
  EXPECT_EQ(format(Element{Delay{CouplingQuarter{"12", "3"}}}), "1/(4J{12,3})");
  EXPECT_EQ(format(Element{Decouple{"H", false}}), "decouple(H off)");
}

TEST(Format, EntanglingSequenceRoundTrips) {
  const PulseSequence s = parse(kEntangling);
  EXPECT_EQ(parse(format(s)), s);
  EXPECT_EQ(format(parse(format(s))), format(s));
}

TEST(Format, RandomSequencesRoundTrip) {
  std::mt19937_64 gen(101);
  for (int trial = 0; trial < 300; ++trial) {
    const PulseSequence s = random_sequence(gen);
    const std::string text = format(s);
    EXPECT_EQ(parse(text), s) << text;
    EXPECT_EQ(format(parse(text)), text);
  }
}

// ---------------------------------------------------------------------------
// compile

TEST(Compile, EmptySequenceIsIdentity) {
  EXPECT_TRUE(compile(parse(""), systems::chloroform()).empty());
}

TEST(Compile, EntanglingSequenceGivesPrintedStateAt503Degrees) {
  const double theta = 50.3 * kPi / 180;
  const auto program = compile(parse(kEntangling), systems::chloroform(), {{"theta", theta}});
  const DensityMatrix rho = apply_all(pseudo_pure_down(2), program);
  const double c = std::cos(theta / 2), s = std::sin(theta / 2);
  Mat printed(4, 4);
  printed << c * c, s * c, -s * c, -c * c,  //
      s * c, s * s, -s * s, -s * c,         //
      -s * c, -s * s, s * s, s * c,         //
      -c * c, -s * c, s * c, c * c;
  // Trace-2 normalization of the printed matrix.
  EXPECT_LT(oracle::max_diff(2.0 * rho.matrix().eigen(), printed), 1e-10);
}

TEST(Compile, PulseUsesCompiledSense) {
  const auto program = compile(parse("[pi/3]y^{2}"), systems::chloroform());
  ASSERT_EQ(program.size(), 1u);
  const Mat expected = oracle::embed(oracle::expm_hermitian(oracle::iy(), kPulseSense * kPi / 3), 2, 2);
  EXPECT_LT(oracle::max_diff(to_matrix(program[0]).eigen(), expected), 1e-14);
}

TEST(Compile, DelayExcludesDecoupledSpins) {
  const SpinSystem tce = systems::tce();
  const auto program = compile(parse("decouple(H on) - 2ms - decouple(H off)"), tce);
  ASSERT_EQ(program.size(), 1u);
  // H without any term naming the proton.
  Mat h = 2 * kPi * (-903.6) * oracle::embed(oracle::iz(), 1, 3) +
          2 * kPi * 103.1 * oracle::embed(oracle::iz(), 1, 3) * oracle::embed(oracle::iz(), 2, 3);
  const Mat expected = oracle::expm_hermitian(h, kPrecessionSense * 2e-3);
  EXPECT_LT(oracle::max_diff(to_matrix(program[0]).eigen(), expected), 1e-10);
}

TEST(Compile, CouplingDelayIsQuarterInverseJ) {
  const auto program = compile(parse("1/(4JC1C2)"), systems::tce());
  const auto direct = compile(parse("2.42483026188ms"), systems::tce());  // 1/(4*103.1) s
  EXPECT_TRUE(to_matrix(program[0]).is_approx(to_matrix(direct[0]), 1e-9));
}

TEST(Compile, RefocusCancelsOffsetsAndKeepsCouplings) {
  const SpinSystem tce = systems::tce();
  const double d = 3.5e-3;
  const ComplexMatrix u = product(compile(parse("refocus(3.5ms)"), tce), 3);
  // Pi about x on every spin, then zz evolution in the compiled sense.
  Mat hzz = 2 * kPi * 103.1 * oracle::embed(oracle::iz(), 1, 3) * oracle::embed(oracle::iz(), 2, 3) +
            2 * kPi * 201.3 * oracle::embed(oracle::iz(), 2, 3) * oracle::embed(oracle::iz(), 3, 3) +
            2 * kPi * 9.23 * oracle::embed(oracle::iz(), 1, 3) * oracle::embed(oracle::iz(), 3, 3);
  const Mat pi_all = oracle::expm_hermitian(
      oracle::embed(oracle::ix(), 1, 3) + oracle::embed(oracle::ix(), 2, 3) + oracle::embed(oracle::ix(), 3, 3),
      kPulseSense * kPi);
  const Mat expected = oracle::expm_hermitian(hzz, kPrecessionSense * d) * pi_all;
  EXPECT_LT(oracle::max_diff(u.eigen(), expected), 1e-10);
}

TEST(Compile, RefocusedEvolutionIndependentOfOffsets) {
  const auto s = parse("[pi/2]x^{1,2} - refocus(t) - [0.7]y^{3} - refocus(1/(4J23)) - [pi/3]x^{1}");
  std::mt19937_64 gen(61);
  const DensityMatrix rho0 = DensityMatrix::true_state(ComplexMatrix(oracle::random_state(8, gen)));
  const DensityMatrix ref = apply_all(rho0, compile(s, three_spin(0, 0, 0), {{"t", 4.1e-3}}));
  for (double o : {903.6, 1e4})
    for (const auto& sys : {three_spin(o, 0, 0), three_spin(o, 0, -o / 3), three_spin(0, 0, o)})
      EXPECT_LT(apply_all(rho0, compile(s, sys, {{"t", 4.1e-3}})).matrix().max_abs_diff(ref.matrix()), 1e-9);
}

TEST(Compile, ConcatenationIsMatrixProduct) {
  std::mt19937_64 gen(71);
  const SpinSystem sys = three_spin(450, 0, -1200);
  for (int trial = 0; trial < 30; ++trial) {
    const PulseSequence a = random_sequence(gen), b = random_sequence(gen);
    PulseSequence ab = a;
    ab.elements.insert(ab.elements.end(), b.elements.begin(), b.elements.end());
    ab.parameters.insert(b.parameters.begin(), b.parameters.end());
    const Binding bind{{"theta", 0.9}, {"t", 2.2e-3}};
    const ComplexMatrix lhs = product(compile(ab, sys, bind), 3);
    const ComplexMatrix rhs = product(compile(b, sys, bind), 3) * product(compile(a, sys, bind), 3);
    EXPECT_TRUE(lhs.is_approx(rhs)) << format(ab);
  }
}

TEST(Compile, BellPreparationFromDownDown) {
  const auto s = parse(kBellPrep);
  EXPECT_EQ(parse(format(s)), s);
  const SpinSystem sys = systems::chloroform();
  const DensityMatrix out = apply_all(pseudo_pure_down(2), compile(s, sys));
  const Mat d = oracle::kron(oracle::ix(), oracle::ix()) - oracle::kron(oracle::iz(), oracle::iz()) -
                oracle::kron(oracle::iy(), oracle::iy());
  EXPECT_LT(oracle::max_diff(out.deviation_part().eigen(), -d), 1e-10);
}

TEST(Compile, Deterministic) {
  const auto s = parse(kEntangling);
  const auto a = compile(s, systems::chloroform(), {{"theta", 1.234}});
  const auto b = compile(s, systems::chloroform(), {{"theta", 1.234}});
  EXPECT_EQ(a, b);
}

TEST(Compile, Errors) {
  const SpinSystem tce = systems::tce();
  EXPECT_THROW(compile(parse("[theta]x^{C1}"), tce), InputError);                       // unbound
  EXPECT_THROW(compile(parse("[pi]x^{C9}"), tce), InputError);                          // unknown label
  EXPECT_THROW(compile(parse("t"), tce, {{"t", -1e-3}}), InputError);                   // negative delay
  EXPECT_THROW(compile(parse("decouple(H on) - [pi]x^{H} - decouple(H off)"), tce), InputError);
  const SpinSystem uncoupled({{"A", 0}, {"B", 0}}, {}, "A");
  EXPECT_THROW(compile(parse("1/(4JAB)"), uncoupled), InputError);                      // undeclared coupling
  PulseSequence open;                                                                   // hand-built, unbalanced
  open.elements.push_back(Decouple{"H", true});
  EXPECT_THROW(compile(open, tce), InputError);
  PulseSequence stray;
  stray.elements.push_back(Decouple{"H", false});
  EXPECT_THROW(compile(stray, tce), InputError);
}

TEST(Compile, InitiallyDecoupledSpins) {
  EXPECT_EQ(initially_decoupled(parse("decouple(H on) - [pi]x^{1} - decouple(H off)")),
            std::vector<std::string>{"H"});
  EXPECT_TRUE(initially_decoupled(parse("[pi]x^{1} - decouple(H on) - 1ms - decouple(H off)")).empty());
}

TEST(LoadSequence, PrefixesPathOnSyntaxErrors) {
  try {
    load_sequence(std::string(NMRDECO_DATA_DIR) + "/../tests/data/bad_axis.seq");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_axis.seq"), std::string::npos);
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(load_sequence("/nonexistent/file.seq"), InputError);
}

TEST(LoadSequence, BundledFilesParse) {
  for (const char* name : {"entangle.seq", "product.seq", "bellprep.seq", "dq_evolution.seq", "dq_readout.seq"})
    EXPECT_NO_THROW(load_sequence(std::string(NMRDECO_DATA_DIR) + "/sequences/" + name)) << name;
}
