"""Numerical spot checks of the inequalities behind the bound evaluators.

Each section prints both sides of one inequality (or the terms of one
identity) so the actual margins are visible, not just a pass flag:

  1. error accumulation: sqrt(MSE) at the end of a training partition vs
     the anchored sum sqrt(MSE(t_1)) + sum_i sqrt(loss_i);
  2. KL contraction of the noising channel against the exact-coupling W2
     of two-atom laws, including the single-atom equality case;
  3. sampler stage laws against the accumulated-KL bound for the three
     designed schedules;
  4. the two-step/one-step leading-term ratio as the accuracy target
     tightens (2/3 at eps = delta, toward 1/2 as eps -> 0);
  5. the TV bound as a function of the smoothing level, with the minimum
     at the closed-form optimum where its two smoothing terms balance.

Exits nonzero if any printed inequality fails.
"""

import math
import sys

import numpy as np

from cmlab import (
    BoundInputs,
    DiscreteTarget,
    MarginalView,
    SamplingTimeSchedule,
    TrainingPartition,
    consistency_loss,
    design_halving_ve,
    design_two_step_ou,
    design_uniform,
    evaluation_error,
    exact_two_point,
    geometry,
    kl_bound,
    kl_grid,
    make_ou,
    make_ve,
    marginal_pdf,
    quantile_perturbed,
    sde_contraction_bound,
    sigma_eps_optimal,
    threshold_stage_laws,
    tv_bound,
    two_step_ou_leading_terms,
)

OU = make_ou()
TWO_ATOM = DiscreteTarget([[0.0], [100.0]], [0.5, 0.5])


def check_loss_accumulation() -> bool:
    """sqrt(MSE(t_m)) <= sqrt(MSE(t_1)) + sum of per-step sqrt losses.

    Anchored at t_1 because for an atomic target every estimator is exact
    at t = 0 (the identity), so the step-0 loss is degenerate.  A large
    boundary perturbation (kappa = 1e-2) keeps the margins well above the
    Monte Carlo noise.
    """
    print("-- error accumulation along a training partition --")
    fhat = quantile_perturbed(TWO_ATOM, OU, kappa=1e-2)
    f = exact_two_point(TWO_ATOM, OU)
    part = TrainingPartition(1.0, 3)
    seeds = np.random.SeedSequence(0xACC0).spawn(part.m + 1)
    n = 5_000

    rhs = math.sqrt(
        evaluation_error(fhat, f, MarginalView(TWO_ATOM, OU, part.time_of(1)),
                         n, seeds[0]).value
    )
    for i in range(1, part.m):
        loss = consistency_loss(fhat, TWO_ATOM, OU, part, i, n, seeds[i]).value
        rhs += math.sqrt(max(loss, 0.0))
        print(f"  step {i}: sqrt(loss) = {math.sqrt(max(loss, 0.0)):.4f}")
    lhs = math.sqrt(
        evaluation_error(fhat, f, MarginalView(TWO_ATOM, OU, part.horizon),
                         n, seeds[part.m]).value
    )
    ok = lhs <= rhs
    print(f"  sqrt(MSE(t_{part.m})) = {lhs:.4f} <= anchored sum = {rhs:.4f}"
          f"  [{'ok' if ok else 'VIOLATED'}]")
    return ok


def check_kl_contraction() -> bool:
    print("-- KL contraction of the noising channel --")
    rng = np.random.default_rng(np.random.SeedSequence(0xC0))
    ve = make_ve()
    worst = -math.inf
    for _ in range(20):
        while True:
            a, b, c, d = rng.uniform(-3.0, 3.0, size=4)
            if abs(a - b) >= 1e-3 and abs(c - d) >= 1e-3:
                break
        t = float(rng.uniform(0.5, 3.0))
        sched = OU if rng.random() < 0.5 else ve
        w2_sq = min(
            0.5 * ((a - c) ** 2 + (b - d) ** 2),
            0.5 * ((a - d) ** 2 + (b - c) ** 2),
        )
        vp = MarginalView(DiscreteTarget([[a], [b]], [0.5, 0.5]), sched, t)
        vq = MarginalView(DiscreteTarget([[c], [d]], [0.5, 0.5]), sched, t)
        sd = math.sqrt(float(vp.mixture_params()[1].max()))
        alpha = float(sched.alpha(t))
        lo = alpha * min(a, b, c, d) - 12.0 * sd
        hi = alpha * max(a, b, c, d) + 12.0 * sd
        kl = kl_grid(lambda x: marginal_pdf(vp, x),
                     lambda x: marginal_pdf(vq, x), lo, hi, 20001).value
        worst = max(worst, kl - sde_contraction_bound(sched, t, w2_sq))
    print(f"  worst (KL - bound) over 20 random two-atom pairs: {worst:.2e}")

    sp = MarginalView(DiscreteTarget([[1.3]], [1.0]), OU, 1.7)
    sq = MarginalView(DiscreteTarget([[-0.7]], [1.0]), OU, 1.7)
    kl = kl_grid(lambda x: marginal_pdf(sp, x),
                 lambda x: marginal_pdf(sq, x), -13.0, 14.0, 20001).value
    eq = sde_contraction_bound(OU, 1.7, 2.0**2)
    print(f"  single-atom equality: KL = {kl:.6e}, bound = {eq:.6e}")
    ok = worst <= 1e-9 and abs(kl - eq) / eq <= 1e-6
    print(f"  [{'ok' if ok else 'VIOLATED'}]")
    return ok


def check_stage_kl() -> bool:
    print("-- sampler stage laws vs the accumulated-KL bound --")
    fhat = quantile_perturbed(TWO_ATOM, OU, kappa=1e-4)
    geo = geometry(TWO_ATOM)
    ok = True
    for label, taus in (
        ("two_step", design_two_step_ou(100.0, 1.0, 1.0)),
        ("uniform", design_uniform(14.0, 5, 1.0)),
        ("halving", design_halving_ve(14.0, 1.0)),
    ):
        views = threshold_stage_laws(TWO_ATOM, OU, taus, fhat.boundary)
        inputs = BoundInputs(OU, taus, 1.0, second_moment=geo.second_moment)
        for i, q_view in enumerate(views, start=1):
            p_view = MarginalView(TWO_ATOM, OU, taus.taus[i - 1])
            mq, vq, _ = q_view.mixture_params()
            mp, vp, _ = p_view.mixture_params()
            sd = math.sqrt(max(float(vq.max()), float(vp.max())))
            lo = min(float(mq.min()), float(mp.min())) - 12.0 * sd
            hi = max(float(mq.max()), float(mp.max())) + 12.0 * sd
            kl = kl_grid(lambda x: marginal_pdf(q_view, x),
                         lambda x: marginal_pdf(p_view, x), lo, hi, 20001).value
            bound = kl_bound(inputs, i)
            ok &= kl <= bound
            print(f"  {label:>8} stage {i}: KL = {kl:.3e} <= bound = {bound:.3e}"
                  f"  (ratio {kl / bound:.3f})")
    print(f"  [{'ok' if ok else 'VIOLATED'}]")
    return ok


def check_leading_ratio() -> bool:
    print("-- two-step vs one-step leading terms (R = 100, delta = 1) --")
    ok = True
    prev = math.inf
    for k in range(0, 9):
        eps = 10.0 ** (-k)
        lead = two_step_ou_leading_terms(100.0, eps, 1.0)
        ok &= 0.5 < lead.ratio <= 2.0 / 3.0 and lead.ratio < prev
        prev = lead.ratio
        print(f"  eps = 1e-{k}: ratio = {lead.ratio:.6f}")
    print(f"  decreasing from 2/3 toward 1/2: [{'ok' if ok else 'VIOLATED'}]")
    return ok


def check_tv_balance() -> bool:
    print("-- TV bound vs smoothing level (taus = (10,), r = 0.01) --")
    taus = SamplingTimeSchedule((10.0,))
    r, d, smooth = 0.01, 1, 1.0
    opt = sigma_eps_optimal(taus.taus[-1], r, 1.0, d, smooth)
    totals = []
    for scale in (0.25, 0.5, 1.0, 2.0, 4.0):
        inputs = BoundInputs(OU, taus, r, second_moment=1.0, d=d,
                             smoothness=smooth, sigma_eps=scale * opt)
        b = tv_bound(inputs)
        totals.append(b.total)
        mark = "  <- optimal" if scale == 1.0 else ""
        print(f"  sigma_eps = {scale:>4}x opt: total = {b.total:.6f} "
              f"(cm term {b.cm_term:.6f}, smoothing {b.smoothing_term:.6f}){mark}")
    ok = min(totals) == totals[2]
    print(f"  minimum at the closed-form optimum: [{'ok' if ok else 'VIOLATED'}]")
    return ok


def main() -> int:
    checks = (
        check_loss_accumulation,
        check_kl_contraction,
        check_stage_kl,
        check_leading_ratio,
        check_tv_balance,
    )
    results = []
    for check in checks:
        results.append(check())
        print()
    print(f"{sum(results)}/{len(results)} checks hold")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
