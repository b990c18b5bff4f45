#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include <dyadic/representation.hpp>

using namespace dyadic;

namespace {

DyadicCube cube1(int level, std::uint32_t p) { return DyadicCube{0, level, {p}}; }

OperatorHandle hilbert_op(const TorusSpace& s, double first_scale = 1.0)
{
    KernelSpec k{"hilbert", {}};
    for (int i = 0; i < s.n; ++i)
        k.factors.push_back(KernelDescriptor::hilbert(i == 0 ? first_scale : 1.0));
    return OperatorHandle::from_kernel(s, k);
}

OperatorHandle modulated_op(const TorusSpace& s)
{
    KernelSpec k{"modulated", {}};
    FourierSeries a, b;
    a.cos_terms = {1.0, 0.3};
    a.sin_terms = {0.2};
    b.cos_terms = {0.5, 0.0, 0.25};
    b.sin_terms = {0.4};
    for (int i = 0; i < s.n; ++i)
        k.factors.push_back(KernelDescriptor::modulated(a, b));
    return OperatorHandle::from_kernel(s, k);
}

OperatorHandle zero_op(const TorusSpace& s)
{
    KernelSpec k{"zero", {}};
    for (int i = 0; i < s.n; ++i)
        k.factors.push_back(KernelDescriptor::zero(s.depth, s.dim(i)));
    return OperatorHandle::from_kernel(s, k);
}

// all strictly nested (small, big) cube pairs with a cancellative big cube
std::vector<std::pair<DyadicCube, DyadicCube>> nested_pairs(const TorusSpace& s, const GridShift& g, int param, bool haar_small = false)
{
    const int top = haar_small ? s.depth - 1 : s.depth;
    const HaarAxis ax(s, param, g);
    std::vector<std::pair<DyadicCube, DyadicCube>> out;
    for (int kb = 0; kb < s.depth; ++kb)
        for (std::size_t pb = 0; pb < ax.cubes_at(kb); ++pb)
            for (int ks = kb + 1; ks <= top; ++ks)
                for (std::size_t ps : ax.descendants(kb, pb, ks - kb))
                    out.emplace_back(ax.cube(ks, ps), ax.cube(kb, pb));
    return out;
}

} // namespace

TEST(Classify, DocumentedExamples)
{
    const TorusSpace s(1, 5, 0.5, 1);
    const GridShift g = GridShift::zero(s);
    EXPECT_NEAR(s.gamma(0), 1.0 / 6.0, 1e-15);
    EXPECT_EQ(classify_pair(s, g, cube1(4, 4), cube1(2, 1)).tag, CaseTag::Inside);
    const CasePair near = classify_pair(s, g, cube1(3, 2), cube1(1, 1));
    EXPECT_EQ(near.tag, CaseTag::Near);
    EXPECT_TRUE(near.i_side);
    EXPECT_EQ(classify_pair(s, g, cube1(4, 4), cube1(4, 8)).tag, CaseTag::Separated);
    EXPECT_EQ(classify_pair(s, g, cube1(3, 5), cube1(3, 5)).tag, CaseTag::Equal);
    const CasePair big_i = classify_pair(s, g, cube1(1, 0), cube1(3, 1));
    EXPECT_EQ(big_i.tag, CaseTag::Inside);
    EXPECT_FALSE(big_i.i_side);
    EXPECT_EQ(big_i.bucket(), 3);
}

TEST(Classify, ExhaustiveConsistency)
{
    for (int dim : {1, 2}) {
        const TorusSpace s(std::vector<int>{dim}, dim == 1 ? 4 : 2);
        const GridShift g = sample_grid(s, 12);
        const HaarAxis ax(s, 0, g);
        std::vector<DyadicCube> cubes;
        for (int k = 0; k <= s.depth; ++k)
            for (std::size_t p = 0; p < ax.cubes_at(k); ++p)
                cubes.push_back(ax.cube(k, p));
        for (const auto& I : cubes)
            for (const auto& J : cubes) {
                const CasePair c = classify_pair(s, g, I, J);
                const CasePair r = classify_pair(s, g, J, I);
                EXPECT_EQ(c.tag, r.tag);
                EXPECT_EQ(c.i_side, I.level >= J.level);
                const auto ci = ax.cube_cells(I.level, ax.linear(I.pos, I.level));
                const auto cj = ax.cube_cells(J.level, ax.linear(J.pos, J.level));
                const std::set<std::size_t> si(ci.begin(), ci.end()), sj(cj.begin(), cj.end());
                std::size_t common = 0;
                for (std::size_t x : si)
                    common += sj.count(x);
                const bool nested = common == std::min(si.size(), sj.size());
                if (c.tag == CaseTag::Equal) {
                    EXPECT_EQ(si, sj);
                } else if (c.tag == CaseTag::Inside) {
                    EXPECT_TRUE(nested && si != sj);
                } else {
                    EXPECT_EQ(common, 0u);
                }
            }
    }
}

TEST(SFunction, WholeTorusExample)
{
    const TorusSpace s(1, 3);
    const GridShift g = GridShift::zero(s);
    const SFunction sf = make_s(s, g, cube1(2, 1), cube1(0, 0));
    EXPECT_EQ(sf.Q.level, 1);
    EXPECT_EQ(sf.Q.pos[0], 0u);
    EXPECT_DOUBLE_EQ(sf.q_average, 1.0);
    for (std::size_t c = 0; c < 8; ++c)
        EXPECT_DOUBLE_EQ(sf.values[c], c < 4 ? 0.0 : -2.0);
}

TEST(SFunction, SplitIdentitySupportAndBound)
{
    for (int dim : {1, 2}) {
        const TorusSpace s(std::vector<int>{dim}, dim == 1 ? 5 : 3);
        const GridShift g = sample_grid(s, 21);
        const HaarAxis ax(s, 0, g);
        for (const auto& [small, big] : nested_pairs(s, g, 0))
            for (std::size_t e = 1; e < ax.patterns(); ++e) {
                const SFunction sf = make_s(s, g, small, big, e);
                const double bound = 2.0 / std::sqrt(std::ldexp(1.0, -big.level * dim));
                std::set<std::size_t> q;
                for (std::size_t c : ax.cube_cells(sf.Q.level, ax.linear(sf.Q.pos, sf.Q.level)))
                    q.insert(c);
                for (std::size_t c = 0; c < sf.values.size(); ++c) {
                    EXPECT_EQ(sf.values[c] + sf.q_average, sf.h_big[c]);
                    EXPECT_LE(std::abs(sf.values[c]), bound + 1e-12);
                    if (q.count(c)) {
                        EXPECT_EQ(sf.values[c], 0.0);
                    }
                }
            }
    }
}

TEST(SFunction, RejectsNonNested)
{
    const TorusSpace s(1, 4);
    const GridShift g = GridShift::zero(s);
    EXPECT_THROW(make_s(s, g, cube1(2, 1), cube1(2, 1)), ConfigError);
    EXPECT_THROW(make_s(s, g, cube1(3, 0), cube1(1, 1)), ConfigError);
    EXPECT_THROW(make_s(s, g, cube1(1, 0), cube1(3, 0)), ConfigError);
}

TEST(EightTerm, ResidualVanishesOnNestedTriples)
{
    const TorusSpace s(3, 3);
    const GridShift g = sample_grid(s, 5);
    const OperatorHandle op = modulated_op(s);
    const auto p0 = nested_pairs(s, g, 0, true), p1 = nested_pairs(s, g, 1, true), p2 = nested_pairs(s, g, 2, true);
    std::size_t count = 0;
    for (std::size_t a = 0; a < p0.size(); a += 3)
        for (std::size_t b = 0; b < p1.size(); b += 4)
            for (std::size_t c = 0; c < p2.size(); c += 5) {
                const EightTerms t = eight_term_split(op, g, {p0[a].first, p1[b].first, p2[c].second}, {p0[a].second, p1[b].second, p2[c].first});
                EXPECT_LE(std::abs(t.residual), 1e-10);
                ++count;
            }
    EXPECT_GT(count, 20u);
}

TEST(EightTerm, ZeroKernelAndHilbertTermEight)
{
    const TorusSpace s(3, 3);
    const GridShift g = sample_grid(s, 6);
    const std::array<DyadicCube, 3> I{DyadicCube{0, 2, {1}}, DyadicCube{1, 2, {3}}, DyadicCube{2, 0, {0}}};
    std::array<DyadicCube, 3> J{};
    const HaarAxis a0(s, 0, g), a1(s, 1, g), a2(s, 2, g);
    J[0] = a0.cube(1, a0.ancestor(2, 1, 1));
    J[1] = a1.cube(0, 0);
    J[2] = a2.cube(2, 2);
    const EightTerms z = eight_term_split(zero_op(s), g, I, J);
    for (double t : z.terms)
        EXPECT_EQ(t, 0.0);
    const EightTerms h = eight_term_split(hilbert_op(s), g, I, J);
    EXPECT_NEAR(h.terms[7], 0.0, 1e-12);
    EXPECT_LE(std::abs(h.residual), 1e-10);
    EXPECT_GT(std::abs(h.direct), 1e-6);
}

TEST(EightTerm, RejectsWrongOrientation)
{
    const TorusSpace s(3, 3);
    const GridShift g = GridShift::zero(s);
    const std::array<DyadicCube, 3> I{DyadicCube{0, 2, {0}}, DyadicCube{1, 2, {0}}, DyadicCube{2, 2, {0}}};
    const std::array<DyadicCube, 3> J{DyadicCube{0, 0, {0}}, DyadicCube{1, 0, {0}}, DyadicCube{2, 0, {0}}};
    EXPECT_THROW(eight_term_split(hilbert_op(s), g, I, J), ConfigError);
}

TEST(FixedGrid, ExactForRandomPairs)
{
    const TorusSpace s(3, 3);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const GridShift g = sample_grid(s, seed);
        const OperatorHandle op = seed == 2 ? modulated_op(s) : hilbert_op(s);
        const ReconstructionReport r = fixed_grid_reconstruct(op, MultiFunction::random(s, 10 + seed), MultiFunction::random(s, 20 + seed), g);
        EXPECT_LE(r.relative_error(), 1e-10);
        EXPECT_EQ(r.buckets.size(), 343u);
        EXPECT_DOUBLE_EQ(tree_sum(r.buckets), r.reconstructed);
    }
}

TEST(FixedGrid, ConstantInputsUseAverageSlot)
{
    const TorusSpace s(2, 4);
    const GridShift g = sample_grid(s, 3);
    const OperatorHandle op = modulated_op(s);
    const ReconstructionReport r = fixed_grid_reconstruct(op, MultiFunction::constant(s, 1.0), MultiFunction::random(s, 4), g);
    EXPECT_LE(std::abs(r.reconstructed - r.direct), 1e-10 * std::max(1.0, std::abs(r.direct)));
    EXPECT_GT(std::abs(r.direct), 1e-6);
}

TEST(FixedGrid, BucketsMatchPairwiseClassification)
{
    const TorusSpace s(1, 4);
    const GridShift g = sample_grid(s, 8);
    const OperatorHandle op = modulated_op(s);
    const MultiFunction f = MultiFunction::random(s, 1), h = MultiFunction::random(s, 2);
    const ReconstructionReport r = fixed_grid_reconstruct(op, f, h, g);
    const GridAxes axes(s, g);
    const HaarAxis& ax = axes[0];
    const auto fc = haar_forward(f, axes), gc = haar_forward(h, axes);
    std::vector<double> oracle(kBuckets, 0.0);
    for (std::size_t I = 0; I < ax.cells(); ++I)
        for (std::size_t J = 0; J < ax.cells(); ++J) {
            const DyadicCube ci = ax.cube(ax.slot_level(I), ax.slot_pos(I)), cj = ax.cube(ax.slot_level(J), ax.slot_pos(J));
            const int b = classify_pair(s, g, ci, cj).bucket();
            oracle[static_cast<std::size_t>(b)] += fc.values[I] * gc.values[J] * pair_haar_direct(op, axes, {I}, {J});
        }
    for (int b = 0; b < kBuckets; ++b)
        EXPECT_NEAR(r.buckets[static_cast<std::size_t>(b)], oracle[static_cast<std::size_t>(b)], 1e-11) << bucket_name(b);
}

TEST(FixedGrid, SeparatedBucketFlipsWithFirstFactor)
{
    const TorusSpace s(3, 3);
    const GridShift g = sample_grid(s, 9);
    const MultiFunction f = MultiFunction::random(s, 1), h = MultiFunction::random(s, 2);
    const ReconstructionReport a = fixed_grid_reconstruct(hilbert_op(s), f, h, g);
    const ReconstructionReport b = fixed_grid_reconstruct(hilbert_op(s, -1.0), f, h, g);
    const std::size_t sep3 = 0; // separated<= in every parameter
    EXPECT_EQ(a.bucket_names[sep3], "separated<=|separated<=|separated<=");
    EXPECT_NEAR(a.buckets[sep3], -b.buckets[sep3], 1e-14);
    const auto j = a.to_json();
    EXPECT_TRUE(j.contains("buckets"));
}

TEST(MonteCarlo, VacuousGoodnessIsExactPerSample)
{
    const TorusSpace s(std::vector<int>{1, 1}, 4, 0.5, 4);
    const OperatorHandle op = hilbert_op(s);
    const MultiFunction f = MultiFunction::random(s, 3), h = MultiFunction::random(s, 4);
    for (SmConvention sm : {SmConvention::Smaller, SmConvention::FSide}) {
        const ReconstructionReport r = mc_reconstruct(op, f, h, 8, 1, sm);
        EXPECT_NEAR(r.reconstructed, r.direct, 1e-10 * std::max(1.0, std::abs(r.direct)));
        EXPECT_LE(r.stderr_, 1e-10);
    }
}

TEST(MonteCarlo, DegenerateGoodnessRejected)
{
    const TorusSpace s(std::vector<int>{1, 1}, 5, 0.5, 2);
    EXPECT_THROW(mc_reconstruct(hilbert_op(s), MultiFunction::random(s, 1), MultiFunction::random(s, 2), 4, 1), ConfigError);
}

TEST(MonteCarlo, ConsistentWithDirectPairing)
{
    const TorusSpace s(1, 11, 0.99, 9);
    const double p = exact_pi_good(s, 0, 10);
    ASSERT_GT(p, 0.0);
    ASSERT_LT(p, 1.0);
    const OperatorHandle op = hilbert_op(s);
    const MultiFunction f = MultiFunction::random(s, 5), h = MultiFunction::random(s, 6);
    for (SmConvention sm : {SmConvention::Smaller, SmConvention::FSide}) {
        const ReconstructionReport r = mc_reconstruct(op, f, h, 60, 17, sm);
        EXPECT_GT(r.stderr_, 0.0);
        EXPECT_LE(std::abs(r.reconstructed - r.direct), 3.0 * r.stderr_) << sm_name(sm);
    }
}

TEST(MonteCarlo, StandardErrorFollowsSquareRootLaw)
{
    const TorusSpace s(1, 11, 0.99, 9);
    const OperatorHandle op = hilbert_op(s);
    const MultiFunction f = MultiFunction::random(s, 7), h = MultiFunction::random(s, 8);
    const double e1 = mc_reconstruct(op, f, h, 24, 3).stderr_;
    const double e4 = mc_reconstruct(op, f, h, 96, 3).stderr_;
    EXPECT_NEAR(e1 / e4, 2.0, 0.6);
}

TEST(MonteCarlo, WorkerCountDoesNotChangeResult)
{
    const TorusSpace s(1, 11, 0.99, 9);
    const OperatorHandle op = hilbert_op(s);
    const MultiFunction f = MultiFunction::random(s, 1), h = MultiFunction::random(s, 2);
    const auto a = mc_reconstruct(op, f, h, 6, 4, SmConvention::Smaller, 1);
    const auto b = mc_reconstruct(op, f, h, 6, 4, SmConvention::Smaller, 3);
    EXPECT_EQ(a.reconstructed, b.reconstructed);
    EXPECT_EQ(a.stderr_, b.stderr_);
}

TEST(Truncation, FullCapEqualsFixedGrid)
{
    const TorusSpace s(2, 4);
    const GridShift g = sample_grid(s, 2);
    const OperatorHandle op = hilbert_op(s);
    const MultiFunction f = MultiFunction::random(s, 1), h = MultiFunction::random(s, 2);
    const double full = fixed_grid_reconstruct(op, f, h, g).reconstructed;
    const ReconstructionReport t = truncated_representation(op, f, h, g, s.depth);
    EXPECT_NEAR(t.reconstructed, full, 1e-12 * std::max(1.0, std::abs(full)));
    EXPECT_EQ(t.tail_bound, 0.0);
    const ReconstructionReport z = truncated_representation(zero_op(s), f, h, g, 1);
    EXPECT_EQ(z.reconstructed, 0.0);
}

TEST(Truncation, ErrorShrinksWithCap)
{
    const TorusSpace s(1, 8);
    const GridShift g = sample_grid(s, 4);
    const OperatorHandle op = hilbert_op(s);
    const MultiFunction f = MultiFunction::random(s, 1), h = MultiFunction::random(s, 2);
    const double e0 = std::abs(truncated_representation(op, f, h, g, 0).reconstructed - truncated_representation(op, f, h, g, 8).reconstructed);
    const double e4 = std::abs(truncated_representation(op, f, h, g, 4).reconstructed - truncated_representation(op, f, h, g, 8).reconstructed);
    EXPECT_LT(e4, e0);
}

TEST(ShiftCoefficients, BoundedAndStableInDepth)
{
    auto at = [](int L) {
        const TorusSpace s(1, L);
        return extract_shift_coefficients(hilbert_op(s), sample_grid(s, 1)).max_ratio;
    };
    const double a = at(5), b = at(6);
    EXPECT_GT(a, 0.0);
    EXPECT_LT(std::max(a, b) / std::min(a, b), 2.0);
    const TorusSpace s(2, 3);
    EXPECT_EQ(extract_shift_coefficients(zero_op(s), GridShift::zero(s)).max_ratio, 0.0);
}

TEST(BmoLemma, SymbolMatchesDirectPairing)
{
    const TorusSpace s(3, 3);
    const GridShift g = sample_grid(s, 4);
    const OperatorHandle op = modulated_op(s);
    const HaarAxis a0(s, 0, g), a1(s, 1, g), a2(s, 2, g);
    const DyadicCube I1 = a0.cube(2, 3), J1 = a0.cube(0, 0);
    const MultiFunction b = lemma_symbol(op, g, I1, J1);
    const SFunction sf = make_s(s, g, I1, J1);
    const auto h = a0.haar_function(a0.slot(2, 3, 1));
    const std::vector<double> one(8, 1.0);
    const OperatorHandle T2 = op.partial_adjoint({false, true, false});
    for (std::size_t v = 0; v < 8; v += 3)
        for (std::size_t w = 1; w < 8; w += 2) {
            const auto hv = a1.haar_function(v), hw = a2.haar_function(w);
            const double direct = pair_tensor(T2, {h, one, one}, {sf.values, hv, hw});
            const MultiFunction t = MultiFunction::tensor(b.space, {hv, hw});
            EXPECT_NEAR(inner(b, t), direct, 1e-12);
        }
}

TEST(BmoLemma, ZeroAndHilbertSymbolsVanish)
{
    const TorusSpace s(3, 3, 0.5, 3);
    const GridShift g = sample_grid(s, 2);
    EXPECT_EQ(bmo_lemma_check(zero_op(s), g, 5, 1).max_ratio, 0.0);
    EXPECT_LE(bmo_lemma_check(hilbert_op(s), g, 5, 1).max_ratio, 1e-12);
    const BmoLemmaReport m = bmo_lemma_check(modulated_op(s), g, 5, 1);
    EXPECT_EQ(m.rows.size(), 5u);
    EXPECT_GT(m.max_ratio, 0.0);
    EXPECT_TRUE(std::isfinite(m.max_ratio));
}
