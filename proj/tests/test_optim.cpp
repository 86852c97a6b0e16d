#include "bsysid/optim.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bsysid;

namespace {

VectorXd vec(std::initializer_list<double> v)
{
    VectorXd out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

double unit_dense_logdet(const MatrixXd& m)
{
    Eigen::LLT<MatrixXd> llt(m);
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

} // namespace

TEST(SecantPair, Subtraction)
{
    const SecantPair same = secant_pair(vec({1, 2}), vec({1, 2}), vec({3, 4}), vec({3, 4}));
    EXPECT_TRUE(same.r.isZero(0.0));
    EXPECT_TRUE(same.w.isZero(0.0));
    const SecantPair sp = secant_pair(vec({2, 0.5}), vec({1, 0.5}), vec({3, 0}), vec({1, 0}));
    EXPECT_EQ(sp.r, vec({1, 0}));
    EXPECT_EQ(sp.w, vec({2, 0}));
    EXPECT_THROW(secant_pair(vec({1}), vec({1, 2}), vec({1}), vec({1})), std::invalid_argument);
}

TEST(BbStepsize, EqualSecantVectors)
{
    const OptimizerConfig cfg;
    for (double tau : {0.1, 0.5, 2.0}) {
        const BbStep s = bb_stepsize(cfg, tau, vec({1, 0}), vec({1, 0}));
        EXPECT_DOUBLE_EQ(s.alpha, 1.0);
        EXPECT_FALSE(s.safeguarded);
    }
}

TEST(BbStepsize, ScalarArithmetic)
{
    OptimizerConfig cfg;
    cfg.alpha_min = 1e-5;
    cfg.alpha_max = 1e5;
    EXPECT_DOUBLE_EQ(bb_stepsize(cfg, 0.5, vec({2}), vec({1})).alpha, 2.0);
}

TEST(BbStepsize, ClampsToBounds)
{
    OptimizerConfig cfg;
    cfg.alpha_min = 1e-5;
    cfg.alpha_max = 1e5;
    EXPECT_DOUBLE_EQ(bb_stepsize(cfg, 0.5, vec({1}), vec({1e-7})).alpha, 1e5);
    EXPECT_DOUBLE_EQ(bb_stepsize(cfg, 0.5, vec({1e-7}), vec({1})).alpha, 1e-5);
}

TEST(BbStepsize, NegativeCurvatureFallsBack)
{
    const OptimizerConfig cfg;
    const BbStep s = bb_stepsize(cfg, 0.5, vec({1, 0}), vec({-1, 0}));
    EXPECT_EQ(s.alpha, cfg.alpha_min);
    EXPECT_EQ(s.tau_next, 0.5);
    EXPECT_TRUE(s.safeguarded);
    EXPECT_TRUE(bb_stepsize(cfg, 0.5, vec({0, 0}), vec({0, 0})).safeguarded);
}

TEST(BbStepsize, AlternationFollowsTau)
{
    const OptimizerConfig cfg;
    // alpha1 = 1, alpha2 = 0.5
    const BbStep low = bb_stepsize(cfg, 0.6, vec({1, 0}), vec({1, 1}));
    EXPECT_DOUBLE_EQ(low.alpha, 0.5);
    EXPECT_DOUBLE_EQ(low.tau_next, 0.54);
    const BbStep high = bb_stepsize(cfg, 0.4, vec({1, 0}), vec({1, 1}));
    EXPECT_DOUBLE_EQ(high.alpha, 1.0);
    EXPECT_DOUBLE_EQ(high.tau_next, 0.44);
}

TEST(BbStepsize, ScaledRulesWithOneBadDenominator)
{
    const OptimizerConfig cfg;
    const VectorXd d = vec({1, 100});
    const VectorXd r = vec({1, 1});
    const VectorXd w = vec({2, -0.5});
    // r^T D^-1 w = 1.995 > 0, r^T D w = -48 < 0
    const BbStep s = bb_stepsize(cfg, 0.5, r, w, d);
    EXPECT_FALSE(s.safeguarded);
    EXPECT_NEAR(s.alpha, (1.0 + 1e-4) / 1.995, 1e-14);
}

TEST(SgpScaling, Clamps)
{
    const OptimizerConfig cfg;
    GradientSplit g;
    g.V = Eigen::Vector2d(1.0, 1.0);
    EXPECT_DOUBLE_EQ(sgp_scaling({1.0, 0.5}, g, cfg)(0), 1.0);
    EXPECT_DOUBLE_EQ(sgp_scaling({1e-12, 0.5}, g, cfg)(0), 1e-10);
    g.V(0) = 0.0;
    EXPECT_DOUBLE_EQ(sgp_scaling({1.0, 0.5}, g, cfg)(0), cfg.d_max);
}

TEST(SgpScaling, PositiveSplitOnRandomInstances)
{
    std::mt19937_64 rng(1);
    const OptimizerConfig cfg;
    for (int i = 0; i < 50; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        const GradientSplit g = ctx.gradient(inst.eta);
        EXPECT_GT(g.V(0), 0.0);
        const Eigen::Vector2d d = sgp_scaling(inst.eta, g, cfg);
        EXPECT_TRUE((d.array() >= cfg.d_min).all() && (d.array() <= cfg.d_max).all());
    }
}

TEST(BfgsUpdate, AlreadyConsistent)
{
    const MatrixXd b = bfgs_update(MatrixXd::Ones(1, 1), vec({1}), vec({1}));
    EXPECT_DOUBLE_EQ(b(0, 0), 1.0);
}

TEST(BfgsUpdate, SecantEquationAndSpd)
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    int checked = 0;
    while (checked < 1000) {
        const MatrixXd a = MatrixXd::Random(2, 2);
        const MatrixXd b0 = a * a.transpose() + 0.1 * MatrixXd::Identity(2, 2);
        const VectorXd r = vec({g(rng), g(rng)});
        const VectorXd w = vec({g(rng), g(rng)});
        if (r.dot(w) <= 1e-3 * r.norm() * w.norm()) continue;
        const MatrixXd b = bfgs_update(b0, r, w);
        EXPECT_LE((b * w - r).norm() / r.norm(), 1e-10);
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(b).eigenvalues().minCoeff(), 0.0);
        ++checked;
    }
}

TEST(BfgsUpdate, SkipsNegativeCurvature)
{
    const MatrixXd b0 = (MatrixXd(2, 2) << 2, 0.5, 0.5, 1).finished();
    EXPECT_EQ(bfgs_update(b0, vec({1, 0}), vec({-1, 0.2})), b0);
}

TEST(Project, Clamp)
{
    EXPECT_EQ(project({-1.0, 1.5}, {3.0, 0.2}), (Hyperparameters{0.0, 1.0}));
    EXPECT_EQ(project({0.5, 0.5}), (Hyperparameters{0.5, 0.5}));
    EXPECT_THROW(project({0.5, 0.5}, {0.0, 1.0}), std::invalid_argument);
}

TEST(Project, DiagonalWeightsDoNotMatter)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> z(-2.0, 3.0), w(1e-3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector2d p(z(rng), z(rng));
        // weighted box projection by brute force along each axis
        const Eigen::Vector2d wd(w(rng), w(rng));
        const Hyperparameters out = project(p, wd);
        EXPECT_EQ(out, project(p));
        EXPECT_TRUE(in_omega(out));
    }
}

TEST(GradientStep, ProjectedStationaryPointIsFixed)
{
    // zero output: at lambda = 0, dL/dlambda > 0 and the projected step is zero
    SufficientStats s(4);
    s.ingest({VectorXd::LinSpaced(30, -1.0, 2.0), VectorXd::Zero(30)});
    const MarginalLikelihood ctx(s, 0.7);
    const OptimizerConfig cfg;
    const Hyperparameters eta{0.0, 0.6};
    ASSERT_GT(ctx.gradient(eta).grad(0), 0.0);
    for (Method m : {Method::BB, Method::SGP, Method::BFGS}) {
        OptimizerState st = bootstrap_state({1e-3, 0.6}, cfg);
        const StepReport rep = gradient_step(ctx, st, cfg, eta, m, true);
        EXPECT_EQ(rep.eta_new, eta) << method_name(m);
        EXPECT_EQ(rep.ml_after, rep.ml_before);
    }
}

TEST(GradientStep, BbStepDecreasesObjective)
{
    std::mt19937_64 rng(5);
    const oracle::Instance inst = oracle::random_instance(rng);
    const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
    const OptimizerConfig cfg;
    OptimizerState st = bootstrap_state(inst.eta, cfg);
    const StepReport rep = gradient_step(ctx, st, cfg, inst.eta, Method::BB);
    EXPECT_GT(rep.gamma, 0.0);
    EXPECT_LT(rep.ml_after, rep.ml_before);
    EXPECT_EQ(rep.ml_after, ctx.neg_log_ml(rep.eta_new));
    EXPECT_EQ(st.eta_prev, inst.eta);
}

TEST(GradientStep, ExhaustedBacktracking)
{
    std::mt19937_64 rng(6);
    const oracle::Instance inst = oracle::random_instance(rng);
    const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
    OptimizerConfig cfg;
    cfg.max_backtracks = 2;
    // a tiny secant step with a tinier gradient change gives alpha = alpha_max
    const Hyperparameters eta{1e-4, inst.eta.beta};
    const GradientSplit g = ctx.gradient(eta);
    ASSERT_LT(g.grad(0), 0.0);
    OptimizerState st;
    st.eta_prev = {0.5 * eta.lambda, eta.beta};
    st.grad_prev = Eigen::Vector2d(g.grad(0) - 1e-14 * std::abs(g.grad(0)), g.grad(1));
    const StepReport rep = gradient_step(ctx, st, cfg, eta, Method::BB, true);
    EXPECT_EQ(rep.eta_new, eta);
    EXPECT_EQ(rep.backtracks, 2);
    EXPECT_EQ(rep.gamma, 0.0);
}

TEST(GradientStep, FeasibleAndArmijoOnFuzzCases)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const OptimizerConfig cfg;
    int cases = 0;
    for (int i = 0; i < 200; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        const Hyperparameters eta{3.0 * unif(rng), kBetaEps + (1.0 - 2.0 * kBetaEps) * unif(rng)};
        const GradientSplit g = ctx.gradient(eta);
        for (Method m : {Method::BB, Method::SGP, Method::BFGS}) {
            for (bool lam : {false, true}) {
                OptimizerState st = bootstrap_state({3.0 * unif(rng), 0.1 + 0.8 * unif(rng)}, cfg);
                const StepReport rep = gradient_step(ctx, st, cfg, eta, m, lam);
                EXPECT_TRUE(in_omega(rep.eta_new));
                if (lam) {
                    EXPECT_EQ(rep.eta_new.beta, eta.beta);
                }
                if (rep.gamma > 0.0) {
                    const double dec = g.grad.dot(rep.eta_new.as_vector() - eta.as_vector());
                    EXPECT_LE(rep.ml_after,
                              rep.ml_before + cfg.ls_c * dec + 1e-12 * std::abs(rep.ml_before));
                }
                ++cases;
            }
        }
    }
    EXPECT_GE(cases, 1000);
}

TEST(EmUpdates, ScalarLambdaSteps)
{
    const MatrixXd k = MatrixXd::Ones(1, 1);
    EXPECT_DOUBLE_EQ(em_lambda_update(vec({2}), 0.5 * MatrixXd::Ones(1, 1), k, true), 4.5);
    EXPECT_DOUBLE_EQ(em_lambda_update(vec({2}), 0.5 * MatrixXd::Ones(1, 1), k, false), 4.0);
    EXPECT_DOUBLE_EQ(em_lambda_update(vec({0}), MatrixXd::Zero(1, 1), k, true), 0.0);
}

TEST(EmUpdates, ZeroPosteriorMeanGivesZeroEm1)
{
    SufficientStats s(3);
    s.ingest({VectorXd::LinSpaced(20, -1.0, 1.0), VectorXd::Zero(20)});
    const MarginalLikelihood ctx(s, 0.5);
    EXPECT_EQ(em1_lambda(ctx, {1.0, 0.6}).lambda, 0.0);
    const Hyperparameters em2 = em2_lambda(ctx, {1.0, 0.6});
    EXPECT_GT(em2.lambda, 0.0);
    const StepReport rep = em_step(ctx, {1.0, 0.6}, OptimizerConfig{});
    EXPECT_TRUE(in_omega(rep.eta_new));
}

TEST(EmUpdates, MatchDenseReference)
{
    std::mt19937_64 rng(8);
    for (int i = 0; i < 30; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const SufficientStats s = inst.stats();
        const MarginalLikelihood ctx(s, inst.sigma2);
        const MatrixXd kb = oracle::tc_kernel(inst.n, 1.0, inst.eta.beta);
        const auto [mean, cov] = oracle::posterior(s.R(), s.Ytilde(), inst.eta.lambda * kb, inst.sigma2);
        EXPECT_LT(oracle::rel_err(em1_lambda(ctx, inst.eta).lambda, em_lambda_update(mean, cov, kb, false)),
                  1e-8);
        EXPECT_LT(oracle::rel_err(em2_lambda(ctx, inst.eta).lambda, em_lambda_update(mean, cov, kb, true)),
                  1e-8);
        EXPECT_EQ(em_lambda_update(mean, MatrixXd::Zero(inst.n, inst.n), kb, true),
                  em_lambda_update(mean, cov, kb, false));
    }
}

TEST(EmUpdates, Em1NeverExceedsEm2)
{
    std::mt19937_64 rng(9);
    for (int i = 0; i < 100; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        EXPECT_LE(em1_lambda(ctx, inst.eta).lambda, em2_lambda(ctx, inst.eta).lambda);
    }
}

TEST(EmUpdates, GradientStepWithLemmaStepsizeEqualsEm2)
{
    std::mt19937_64 rng(10);
    for (int i = 0; i < 100; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        const double lam = inst.eta.lambda;
        const double nn = static_cast<double>(inst.n);
        const double em2 = em2_lambda(ctx, inst.eta).lambda;
        const double gr = lam - lam * lam / nn * ctx.gradient(inst.eta).grad(0);
        const double gr_lambda_only = lam - lam * lam / nn * ctx.lambda_gradient(inst.eta).grad(0);
        EXPECT_LT(oracle::rel_err(gr, em2), 1e-10) << "instance " << i;
        EXPECT_LT(oracle::rel_err(gr_lambda_only, em2), 1e-10) << "instance " << i;
    }
}

TEST(EmUpdates, ReweightedIdentity)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const SufficientStats s = inst.stats();
        const MarginalLikelihood ctx(s, inst.sigma2);
        const MatrixXd kb = oracle::tc_kernel(inst.n, 1.0, inst.eta.beta);
        const MatrixXd kbinv = kb.inverse();
        const auto [mean, cov] = oracle::posterior(s.R(), s.Ytilde(), inst.eta.lambda * kb, inst.sigma2);

        const double zstar = (cov * kbinv).trace();
        const auto f = [&](const VectorXd& a) {
            return unit_dense_logdet(s.R() / inst.sigma2 + a(0) * kbinv);
        };
        const double a0 = 1.0 / inst.eta.lambda;
        const double fd = oracle::central_diff(f, vec({a0}), 0, 1e-4 * a0);
        EXPECT_LT(oracle::rel_err(zstar, fd), 1e-5) << "instance " << i;

        const double nn = static_cast<double>(inst.n);
        EXPECT_LT(oracle::rel_err(em2_lambda(ctx, inst.eta).lambda, (mean.dot(kbinv * mean) + zstar) / nn),
                  1e-8);
    }
}

TEST(EmStep, NeverIncreasesObjective)
{
    std::mt19937_64 rng(12);
    const OptimizerConfig cfg;
    for (int i = 0; i < 50; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        const StepReport rep = em_step(ctx, inst.eta, cfg);
        EXPECT_LE(rep.ml_after, rep.ml_before + 1e-10) << "instance " << i;
        EXPECT_TRUE(in_omega(rep.eta_new));
        EXPECT_TRUE(std::isnan(em_step(ctx, inst.eta, cfg, false).ml_after));
    }
}

TEST(UpdateStep, EveryMethodStaysFeasible)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const OptimizerConfig cfg;
    int cases = 0;
    for (int i = 0; i < 100; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        // include boundary points of Omega
        const double lam = i % 5 == 0 ? 0.0 : 5.0 * unif(rng);
        const double beta = i % 7 == 0 ? 1.0 : (i % 11 == 0 ? 0.0 : unif(rng));
        for (Method m : {Method::BB, Method::SGP, Method::BFGS, Method::EM, Method::EM1, Method::EM2}) {
            for (bool lam_only : {false, true}) {
                OptimizerState st = bootstrap_state({lam, beta}, cfg);
                const StepReport rep = update_step(ctx, st, cfg, {lam, beta}, m, lam_only);
                EXPECT_TRUE(in_omega(rep.eta_new)) << method_name(m);
                ++cases;
            }
        }
    }
    EXPECT_GE(cases, 1000);
}

TEST(Opt, StationaryStartStopsAfterOneIteration)
{
    std::mt19937_64 rng(14);
    const oracle::Instance inst = oracle::random_instance(rng, 8, 80);
    const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
    OptimizerConfig tight;
    tight.opt_tol = 1e-15;
    tight.opt_max_iter = 5000;
    const OptResult first = opt_until_convergence(ctx, inst.eta, Method::SGP, tight);
    const OptimizerConfig cfg;
    const OptResult again = opt_until_convergence(ctx, first.eta, Method::SGP, cfg, false, &first.state);
    EXPECT_EQ(again.iterations, 1);
    EXPECT_LE(std::abs(again.ml - first.ml), cfg.opt_tol * (1.0 + std::abs(first.ml)));
}

TEST(Opt, DominatesSingleSteps)
{
    std::mt19937_64 rng(15);
    const OptimizerConfig cfg;
    for (int i = 0; i < 10; ++i) {
        const oracle::Instance inst = oracle::random_instance(rng, 8, 80);
        const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
        const OptResult opt = opt_until_convergence(ctx, inst.eta, Method::SGP, cfg);
        for (Method m : {Method::BB, Method::SGP, Method::BFGS, Method::EM}) {
            OptimizerState st = bootstrap_state(inst.eta, cfg);
            const StepReport rep = update_step(ctx, st, cfg, inst.eta, m, false);
            EXPECT_LE(opt.ml, rep.ml_after + 1e-9 * std::abs(rep.ml_after)) << method_name(m);
        }
    }
}

TEST(Opt, DifferentStartsAgree)
{
    std::mt19937_64 rng(16);
    const oracle::Instance inst = oracle::random_instance(rng, 6, 200);
    const MarginalLikelihood ctx(inst.stats(), inst.sigma2);
    OptimizerConfig cfg;
    cfg.opt_tol = 1e-13;
    cfg.opt_max_iter = 5000;
    const OptResult a = opt_until_convergence(ctx, {0.1, 0.3}, Method::SGP, cfg);
    const OptResult b = opt_until_convergence(ctx, {3.0, 0.9}, Method::SGP, cfg);
    RecordProperty("ml_difference", std::to_string(std::abs(a.ml - b.ml)));
    EXPECT_LT(std::abs(a.ml - b.ml), 1e-4);
}
