"""Acceptance suite for the toolkit: one test per release criterion.

Each test evaluates its criterion at the stated tolerance, prints a
single ``ACCEPTANCE nn: PASS/FAIL`` verdict line with the measured
margin, and then asserts it, so ``pytest -v`` shows one line per
criterion and the verdict lines appear in captured output.
"""

import time
from types import SimpleNamespace

import numpy as np
import pytest

from ddlqi import data, flow, param, protocol, sdp
from ddlqi.errors import ConvergenceError
from ddlqi.linalg import (
    is_hurwitz,
    solve_care,
    solve_lyapunov,
    spectral_abscissa,
)
from ddlqi.models import augment, check_aug_detectable, check_aug_stabilizable
from ddlqi.models import LtiModel, WeightSpec

from helpers import (
    K_CARE_DGU,
    admissible_plant,
    excite_and_pack,
    random_hurwitz,
    random_stabilizing_aug_gain,
    unit_weights,
)


def _verdict(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:02d}: {status} - {detail}")
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    """The full demonstration pipeline, run twice at the default seed."""
    out1 = tmp_path_factory.mktemp("demo-run1")
    out2 = tmp_path_factory.mktemp("demo-run2")
    t0 = time.perf_counter()
    result = protocol.run_dgu_demo(out1, seed=7)
    elapsed = time.perf_counter() - t0
    protocol.run_dgu_demo(out2, seed=7)
    return SimpleNamespace(result=result, out1=out1, out2=out2,
                           elapsed=elapsed)


@pytest.fixture(scope="module")
def dual_routes():
    """Ten random plants synthesized independently through both routes.

    The SDP solutions are kept for the stability census of criterion 6.
    """
    rng = np.random.default_rng(2024)
    cases = []
    while len(cases) < 10:
        model = admissible_plant(rng)
        pack = excite_and_pack(model, rng)
        if pack is None:
            continue
        weights = unit_weights(model)
        solution = sdp.solve_sdp(pack, weights, sdp.SdpOptions(tol=1e-8))
        k_sdp = sdp.extract_gain(pack, solution)
        g0 = param.gain_to_parameterizer(
            pack, param.stabilizing_gain_from_data(pack))
        traj = flow.integrate_flow(pack, weights, g0, flow.FlowOptions(
            grad_tol=1e-9, max_steps=150_000))
        cases.append(SimpleNamespace(model=model, pack=pack,
                                     weights=weights, solution=solution,
                                     k_sdp=k_sdp, traj=traj))
    return cases


def test_criterion_01_demo_gain_matches_riccati(demo):
    result = demo.result
    dist_ok = result.care_distance <= 1e-3
    expected = np.array([[0.409, 1.164, -9.997]])
    entry_dev = np.abs(result.gain_care - expected).max()
    entries_ok = entry_dev <= 5e-3
    time_ok = demo.elapsed <= 10.0
    _verdict(1, dist_ok and entries_ok and time_ok,
             f"|K_sdp - K_care| = {result.care_distance:.3e} (<= 1e-3), "
             f"max entry dev from (0.409, 1.164, -9.997) = {entry_dev:.3e} "
             f"(<= 5e-3), demo wall time {demo.elapsed:.2f}s (<= 10s)")


def test_criterion_02_closed_loop_identity_on_random_suite():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    pairs = 0
    worst = 0.0
    while pairs < 100:
        model = admissible_plant(rng)
        packs = []
        for variant in ("derivative", "integral"):
            pk = excite_and_pack(model, rng, variant=variant)
            if pk is None:
                break
            packs.append(pk)
        if len(packs) != 2:
            continue
        aug = augment(model)
        bound = 1e-9 * (1.0 + np.linalg.norm(aug.a))
        for pk in packs:
            gain = random_stabilizing_aug_gain(rng, model)
            g = param.gain_to_parameterizer(pk, gain)
            dev = np.linalg.norm(
                param.closed_loop_from_data(pk, g) - (aug.a - aug.b @ gain))
            worst = max(worst, dev / bound)
            pairs += 1
    elapsed = time.perf_counter() - t0
    _verdict(2, worst <= 1.0 and elapsed <= 30.0,
             f"{pairs} (plant, gain) pairs over both sampling variants, "
             f"worst closed-loop deviation {worst:.3e} of the "
             f"1e-9 (1 + |A_a|) bound, {elapsed:.1f}s (<= 30s)")


def test_criterion_03_gradient_matches_finite_differences():
    rng = np.random.default_rng(31)
    plants = 0
    checks = 0
    worst = 0.0
    while plants < 5:
        model = admissible_plant(rng)
        pack = excite_and_pack(model, rng)
        if pack is None:
            continue
        plants += 1
        weights = unit_weights(model)
        proj = flow.tangent_projection(pack)
        for _ in range(4):
            gain = random_stabilizing_aug_gain(rng, model)
            g = param.gain_to_parameterizer(pack, gain)
            cost, grad = flow.lqr_cost_gradient(pack, weights, g)
            v = proj @ rng.standard_normal(g.shape)
            v /= np.linalg.norm(v)
            h = 1e-6 * (1.0 + np.linalg.norm(g))
            fd = (flow.lqr_cost(pack, weights, g + h * v)
                  - flow.lqr_cost(pack, weights, g - h * v)) / (2.0 * h)
            analytic = float(np.sum(grad * v))
            rel = abs(analytic - fd) / max(abs(fd), 1e-9 * abs(cost))
            worst = max(worst, rel)
            checks += 1
    _verdict(3, worst <= 1e-5,
             f"{checks} tangential central differences across {plants} "
             f"plants, worst relative deviation {worst:.3e} (<= 1e-5)")


def test_criterion_04_flow_converges_from_detuned_gains(dgu_case):
    aug = dgu_case.aug
    t0 = time.perf_counter()
    details = []
    ok = True
    for name, k0 in protocol.detuned_gains().items():
        g0 = param.gain_to_parameterizer(dgu_case.pack, k0)
        traj = flow.integrate_flow(
            dgu_case.pack, dgu_case.weights, g0,
            flow.FlowOptions(grad_tol=0.0, max_steps=45_000))
        ratios = np.array([np.linalg.norm(s.gain - dgu_case.k_care)
                           for s in traj.samples])
        ratios /= ratios[0]
        monotone = bool(np.all(np.diff(np.log(ratios)) < 0))
        stabilizing = all(
            spectral_abscissa(aug.a - aug.b @ s.gain) < 0
            for s in traj.samples)
        ok = ok and ratios[-1] <= 1e-6 and monotone and stabilizing
        details.append(f"{name}: ratio {ratios[-1]:.2e}, "
                       f"monotone={monotone}, all iterates "
                       f"stabilizing={stabilizing}")
    elapsed = time.perf_counter() - t0
    ok = ok and elapsed <= 60.0
    _verdict(4, ok, "; ".join(details) + f"; {elapsed:.1f}s (<= 60s)")


def test_criterion_05_sdp_and_flow_routes_agree(demo, dual_routes):
    gaps = [np.linalg.norm(c.k_sdp - c.traj.final_gain)
            for c in dual_routes]
    worst = max(gaps)
    dgu_gap = demo.result.route_gap
    _verdict(5, worst <= 1e-3 and dgu_gap <= 1e-3,
             f"route gap on the converter benchmark {dgu_gap:.3e} and "
             f"worst over {len(dual_routes)} random plants {worst:.3e} "
             f"(both <= 1e-3 Frobenius)")


def test_criterion_06_every_sdp_iterate_certifies_stability(dual_routes,
                                                            dgu_case):
    census = [(c.pack, c.solution, "converged") for c in dual_routes]
    census.append((dgu_case.pack,
                   sdp.solve_sdp(dgu_case.pack, dgu_case.weights),
                   "converged"))
    # Deliberately starved outer budgets: the returned best iterates are
    # still feasible and must already certify stability.
    for outer in (1, 2):
        try:
            sol = sdp.solve_sdp(dgu_case.pack, dgu_case.weights,
                                sdp.SdpOptions(max_outer=outer))
        except ConvergenceError as exc:
            sol = exc.best
        census.append((dgu_case.pack, sol, f"outer-budget {outer}"))
    for case in dual_routes[:2]:
        for outer in (1, 2):
            try:
                sol = sdp.solve_sdp(case.pack, case.weights,
                                    sdp.SdpOptions(max_outer=outer))
            except ConvergenceError as exc:
                sol = exc.best
            census.append((case.pack, sol, f"outer-budget {outer}"))
    loose = sdp.solve_sdp(dgu_case.pack, dgu_case.weights,
                          sdp.SdpOptions(tol=1.0))
    census.append((dgu_case.pack, loose, "loose tolerance"))

    violations = 0
    worst_absc = -np.inf
    for pack, sol, _tag in census:
        g = np.linalg.solve(sol.w.T, sol.z.T).T
        absc = spectral_abscissa(param.data_shift_matrix(pack) @ g)
        gain = sdp.extract_gain(pack, sol)  # must always be extractable
        assert np.all(np.isfinite(gain))
        worst_absc = max(worst_absc, absc)
        if absc >= 0:
            violations += 1
    _verdict(6, violations == 0,
             f"{len(census)} solutions (converged, budget-starved and "
             f"loose-tolerance): {violations} stability violations, "
             f"worst closed-loop abscissa {worst_absc:.3e}")


def test_criterion_07_voltage_tracking_steady_state(demo):
    sse = demo.result.steady_state_errors
    pre_ok = (sse["before_step_2s"] <= 1e-3
              and sse["before_step_3s"] <= 1e-3)
    final_ok = sse["final"] <= 5e-3
    _verdict(7, pre_ok and final_ok,
             f"relative voltage error {sse['before_step_2s']:.3e} before "
             f"the 2s step and {sse['before_step_3s']:.3e} before the 3s "
             f"step (both <= 1e-3); {sse['final']:.3e} relative to 200 V "
             f"at the horizon (<= 5e-3)")


def test_criterion_08_preflight_and_counterexamples(dgu_case):
    problems = []

    stab = check_aug_stabilizable(dgu_case.model)
    det = check_aug_detectable(dgu_case.model, dgu_case.weights)
    rank = data.check_pe_rank(dgu_case.pack)
    if not (stab.ok and det.ok and rank.ok):
        problems.append("converter benchmark failed preflight")

    weights2 = WeightSpec(qx=np.eye(2), qz=np.eye(1), r=np.eye(1))

    # No input authority: only stabilizability may fail.
    no_input = LtiModel(np.array([[0.5, 0.0], [0.0, -1.0]]),
                        np.zeros((2, 1)), np.array([[1.0, 0.0]]))
    if check_aug_stabilizable(no_input).ok:
        problems.append("zero-input plant passed stabilizability")
    if not check_aug_detectable(no_input, weights2).ok:
        problems.append("zero-input plant failed detectability")

    # More outputs than inputs: the integrator stack cannot be driven,
    # again a stabilizability failure and nothing else.
    wide = LtiModel(np.array([[-1.0, 0.2], [0.0, -2.0]]),
                    np.array([[1.0], [1.0]]), np.eye(2))
    weights_wide = WeightSpec(qx=np.eye(2), qz=np.eye(2), r=np.eye(1))
    if check_aug_stabilizable(wide).ok:
        problems.append("wide-output plant passed stabilizability")
    if not check_aug_detectable(wide, weights_wide).ok:
        problems.append("wide-output plant failed detectability")

    # Unstable mode invisible to both the state cost and the output:
    # only detectability may fail.
    hidden = LtiModel(np.diag([0.5, -1.0]), np.array([[1.0], [1.0]]),
                      np.array([[0.0, 1.0]]))
    weights_hidden = WeightSpec(qx=np.diag([0.0, 1.0]), qz=np.eye(1),
                                r=np.eye(1))
    if not check_aug_stabilizable(hidden).ok:
        problems.append("hidden-mode plant failed stabilizability")
    if check_aug_detectable(hidden, weights_hidden).ok:
        problems.append("hidden-mode plant passed detectability")

    _verdict(8, not problems,
             "benchmark passes preflight; three counterexamples each "
             "fail exactly the intended check"
             + ("" if not problems else f" -- {problems}"))


def test_criterion_09_lyapunov_and_riccati_oracles():
    rng = np.random.default_rng(909)
    worst_lyap = 0.0
    for _ in range(1000):
        a = random_hurwitz(rng, max_dim=8)
        d = a.shape[0]
        w = rng.standard_normal((d, d))
        q = w @ w.T + 0.1 * np.eye(d)
        p = solve_lyapunov(a, q)
        resid = np.linalg.norm(a.T @ p + p @ a + q)
        scale = (np.linalg.norm(a.T @ p) + np.linalg.norm(p @ a)
                 + np.linalg.norm(q))
        worst_lyap = max(worst_lyap, resid / scale)

    def pbh_stabilizable(a, b):
        n = a.shape[0]
        for lam in np.linalg.eigvals(a):
            if lam.real >= -1e-9:
                stacked = np.hstack([lam * np.eye(n) - a, b])
                if np.linalg.matrix_rank(stacked, tol=1e-9) < n:
                    return False
        return True

    def pbh_detectable(a, q):
        n = a.shape[0]
        for lam in np.linalg.eigvals(a):
            if lam.real >= -1e-9:
                stacked = np.vstack([lam * np.eye(n) - a, q])
                if np.linalg.matrix_rank(stacked, tol=1e-9) < n:
                    return False
        return True

    worst_care = 0.0
    hurwitz_failures = 0
    count = 0
    while count < 200:
        n = int(rng.integers(2, 7))
        m = int(rng.integers(1, 3))
        a = rng.standard_normal((n, n))
        # Keep the unstable part bounded so the draws stay inside the
        # numerically well-posed class the solver is specified for.
        a -= (spectral_abscissa(a) - rng.uniform(-0.5, 1.0)) * np.eye(n)
        b = rng.standard_normal((n, m))
        if not pbh_stabilizable(a, b):
            continue
        if rng.random() < 0.5:
            w = rng.standard_normal((n, n))
            q = w @ w.T + np.eye(n)
        else:
            c = rng.standard_normal((max(1, n // 2), n))
            q = c.T @ c
            if not pbh_detectable(a, q):
                continue
        wr = rng.standard_normal((m, m))
        r = wr @ wr.T + np.eye(m)
        # Request one decade beyond the acceptance bound; the solver's
        # tighter default is unattainable for the worst-conditioned
        # draws (cond(P) beyond 1e6), which is a property of the
        # instances, not of the solver.
        p, k = solve_care(a, b, q, r, tol=1e-9)
        resid = np.linalg.norm(a.T @ p + p @ a - p @ b @ k + q)
        scale = (np.linalg.norm(a.T @ p) + np.linalg.norm(p @ a)
                 + np.linalg.norm(p @ b @ k) + np.linalg.norm(q))
        worst_care = max(worst_care, resid / scale)
        if not is_hurwitz(a - b @ k):
            hurwitz_failures += 1
        count += 1

    _verdict(9, (worst_lyap <= 1e-10 and worst_care <= 1e-8
                 and hurwitz_failures == 0),
             f"1000 Lyapunov solves worst residual {worst_lyap:.3e} "
             f"(<= 1e-10 of scale); 200 Riccati solves worst residual "
             f"{worst_care:.3e} (<= 1e-8 of scale), "
             f"{hurwitz_failures} non-Hurwitz closed loops")


def test_criterion_10_demo_outputs_are_byte_deterministic(demo):
    names1 = sorted(p.name for p in demo.out1.iterdir())
    names2 = sorted(p.name for p in demo.out2.iterdir())
    same_names = names1 == names2
    differing = [name for name in names1
                 if (demo.out1 / name).read_bytes()
                 != (demo.out2 / name).read_bytes()] if same_names else names1
    _verdict(10, same_names and not differing,
             f"two seed-7 runs wrote {len(names1)} identical files"
             + ("" if not differing else f"; differing: {differing}"))


# Recorded tracking metrics of the disturbance/reference-step comparison.
# The values are regression anchors measured from this implementation
# (the run is deterministic at the default seed), not externally given.
FIG3_OVERSHOOTS = {
    "kstar": {"load_step_0.5s": 8.616728366, "ref_step_1.5s": 9.994352553,
              "load_step_2.5s": 42.10244071},
    "k1": {"load_step_0.5s": 6.390247727, "ref_step_1.5s": 10.0,
           "load_step_2.5s": 31.7553496},
    "k2": {"load_step_0.5s": 3.186319893, "ref_step_1.5s": 9.875776295,
           "load_step_2.5s": 17.03883385},
    "k3": {"load_step_0.5s": 7.832304003, "ref_step_1.5s": 9.446350092,
           "load_step_2.5s": 42.03526093},
    "adaptive": {"load_step_0.5s": 23.33110638, "ref_step_1.5s": 11.09853088,
                 "load_step_2.5s": 28.13251122},
}


def test_fig3_overshoot_metrics_are_recorded(demo):
    recorded = demo.result.overshoots
    assert set(recorded) == set(FIG3_OVERSHOOTS)
    for name, events in FIG3_OVERSHOOTS.items():
        for event, value in events.items():
            assert recorded[name][event] == pytest.approx(value, rel=5e-2), \
                (name, event)
    # Under the milder load disturbance the mistuned designs are not
    # uniformly worse than the optimum; the heavy-load step separates
    # them (smaller overshoot for the conservative detuned loops, at the
    # price of the much slower recovery recorded in the trajectories).
    table = demo.result.overshoots
    assert table["k2"]["load_step_2.5s"] < table["kstar"]["load_step_2.5s"]
    assert table["adaptive"]["load_step_0.5s"] > \
        table["kstar"]["load_step_0.5s"]
