"""Acceptance criteria, each run at its stated tolerance.

Every check records one PASS/FAIL line, echoed live and repeated in the
terminal summary.  Criteria that cannot be met are left failing as strict
xfails (see the decisions ledger).
"""

import math
import time

import numpy as np
import pytest
import yaml
from scipy.optimize import rosen, rosen_der

import reference as ref
from acceptance_report import record
from qnn_transient.bfgs import bfgs_minimize
from qnn_transient.cli import main, run_sweep
from qnn_transient.config import parse_config
from qnn_transient.models import Embedding, PfqModel, SfqModel, evaluate
from qnn_transient.oracle import Trajectory, mse_table, rk4_solve, solve_oracle, uniform_grid
from qnn_transient.quantum import ArcsinDomainError, GateKind
from qnn_transient.systems import SmibSystem, WsccSystem, load_wscc
from qnn_transient.training import ModelSpec, TrainingConfig, assemble_loss, make_window, solve_trajectory

SMIB = SmibSystem()
WSCC = WsccSystem(load_wscc())
KINDS = ("sfq-ry", "sfq-arcsin", "pfq")


def check(label, ok, detail):
    assert record(label, bool(ok), detail), detail


def rel(a, b):
    # unit floor: several checked quantities cross zero
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)))


def _fmt(table):
    return ", ".join(f"{k} {v:.2e}" for k, v in table.items())


# -- 1 ----------------------------------------------------------------------


def test_c1_pfq_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for x, th in zip(rng.uniform(-5, 5, 200), rng.uniform(-np.pi, np.pi, 200)):
        out = evaluate(PfqModel(rotations=(GateKind.RY,), theta=[th]), x)
        lhs = (1 + x * x) * (1 - out.expectation[0]) / 2
        rhs = np.sin(th / 2) ** 2 + np.sin(th) * x + np.cos(th / 2) ** 2 * x * x
        worst = max(worst, abs(lhs - rhs))
    elapsed = time.perf_counter() - t0
    check("1 PFQ (1+x^2)P(|1>) identity", worst < 1e-12 and elapsed < 1.0,
          f"max error {worst:.2e} over 200 points (< 1e-12), {elapsed:.3f} s (< 1 s)")


# -- 2 ----------------------------------------------------------------------


def _random_model(kind, rng):
    if kind == "pfq":
        return PfqModel(1, theta=rng.uniform(-np.pi, np.pi, 3), tau=rng.normal(size=2)), 2.0
    emb = Embedding.ARCSIN if kind == "sfq-arcsin" else Embedding.RY
    return SfqModel(emb, 2, rng.uniform(-np.pi, np.pi, (2, 2)), rng.normal(size=3)), 0.9 if kind == "sfq-arcsin" else 2.0


def test_c2_model_derivatives_fd():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    first = second = 0.0
    for kind in KINDS:
        for _ in range(50):
            model, span = _random_model(kind, rng)
            x = float(rng.uniform(-span, span))
            out = evaluate(model, x)
            f = lambda v: evaluate(model, v).f[0]
            first = max(first, rel(out.df_dx[0], ref.central(f, x, 1e-5)))
            second = max(second, rel(out.d2f_dx2[0], ref.central2(f, x, 1e-4)))
            p = model.parameters()
            for k in range(p.size):
                def comp(t, k=k):
                    q = p.copy()
                    q[k] = t
                    o = evaluate(model.with_parameters(q), x)
                    return np.array([o.f[0], o.df_dx[0], o.d2f_dx2[0]])

                fd = ref.central(comp, p[k], 1e-5)
                first = max(first, rel(out.grad[0, k, 0], fd[0]))
                # d/dp of f' and f'' are mixed derivatives, held to the second-order bound
                second = max(second, rel(out.grad[1:, k, 0], fd[1:]))
    elapsed = time.perf_counter() - t0
    check("2 model derivatives vs central FD", first < 1e-5 and second < 1e-4,
          f"max rel err first order {first:.2e} (< 1e-5), second order {second:.2e} (< 1e-4), "
          f"3 configs x 50 points, {elapsed:.1f} s")


def test_c2_loss_gradient_fd():
    t0 = time.perf_counter()
    rng = np.random.default_rng(22)
    worst = 0.0
    for system in (SMIB, WSCC):
        for kind in KINDS:
            for i in range(50):
                fault = system is WSCC and i % 2 == 1
                t_start, length = (10.0, 0.05) if fault else (0.0, 0.3)
                cfg = TrainingConfig(time_span=length, num_points=6)
                state = system.initial_state() + rng.normal(size=len(system.variables)) * 0.05
                w = make_window(system, ModelSpec(kind), cfg, t_start, t_start + length, state)
                w = w.with_parameters(rng.normal(size=w.parameters().size) * 0.8)
                p = w.parameters()
                g = assemble_loss(w, system, cfg).gradient
                v = rng.normal(size=p.size)
                v /= np.linalg.norm(v)
                h = 1e-6
                fd = (assemble_loss(w.with_parameters(p + h * v), system, cfg).total
                      - assemble_loss(w.with_parameters(p - h * v), system, cfg).total) / (2 * h)
                # directional check scaled by |g| |v|, the bound on g.v
                worst = max(worst, abs(g @ v - fd) / np.linalg.norm(g))
    elapsed = time.perf_counter() - t0
    check("2 loss gradient vs central FD", worst < 1e-5,
          f"max rel err {worst:.2e} (< 1e-5), 2 systems x 3 models x 50 points, {elapsed:.1f} s")


# -- 3 and 8 (determinism) ----------------------------------------------------------


@pytest.fixture(scope="module")
def smib_cli_runs(tmp_path_factory):
    """SMIB SFQ-Ry over 8 s through the CLI, twice, plus the oracle and compare."""
    base = tmp_path_factory.mktemp("smib")
    dirs, times = [], []
    for name in ("run_a", "run_b"):
        path = base / f"{name}.yaml"
        path.write_text(yaml.safe_dump({
            "system": "smib", "model": "sfq-ry", "span": 8.0, "output_dir": name,
            "training": {"time_span": 0.5, "num_points": 20},
        }))
        t0 = time.perf_counter()
        assert main(["solve", str(path)]) == 0
        times.append(time.perf_counter() - t0)
        assert main(["oracle", str(path)]) == 0
        out = base / name
        assert main(["compare", str(out / "trajectory.csv"), str(out / "oracle.csv"), "-o", str(out / "mse.csv")]) == 0
        dirs.append(out)
    return dirs, times


def test_c3_smib_full_span(smib_cli_runs):
    dirs, times = smib_cli_runs
    qnn = Trajectory.from_csv(dirs[0] / "trajectory.csv")
    oracle = Trajectory.from_csv(dirs[0] / "oracle.csv")
    table = mse_table(qnn, oracle)
    with open(dirs[0] / "summary.csv") as fh:
        assert len(fh.read().splitlines()) == 1 + 16
    check("3 SMIB SFQ-Ry full 8 s span", table["delta"] < 1e-2 and table["domega"] < 5e-2 and times[0] < 600,
          f"MSE delta {table['delta']:.2e} (< 1e-2), domega {table['domega']:.2e} (< 5e-2), "
          f"16 windows, {times[0]:.1f} s")


@pytest.mark.xfail(strict=True, reason="SFQ-Ry output lies in span{1, cos u, cos 2u}; best least-squares "
                   "fit of the first-window speed deviation is 6.7e-3 > 1e-3 (see the decisions ledger)")
def test_c3_smib_first_window(smib_cli_runs):
    dirs, _ = smib_cli_runs
    qnn = Trajectory.from_csv(dirs[0] / "trajectory.csv")
    oracle = Trajectory.from_csv(dirs[0] / "oracle.csv")
    sel = qnn.times < 0.5 - 1e-9
    err = float(np.mean((qnn["domega"][sel] - oracle["domega"][sel]) ** 2))
    check("3 SMIB SFQ-Ry first window domega", err < 1e-3,
          f"MSE {err:.2e} (< 1e-3); known infeasible for this model family, see ledger")


def test_c8_byte_identical_outputs(smib_cli_runs):
    dirs, _ = smib_cli_runs
    names = ("trajectory.csv", "summary.csv", "oracle.csv", "mse.csv")
    same = [(dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names]
    check("8 determinism", all(same),
          "byte-identical across two seeded runs: " + ", ".join(f"{n} {'yes' if s else 'NO'}" for n, s in zip(names, same)))


# -- 4 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def wscc_short_reference():
    grid = uniform_grid(0.0, 0.2, 0.01)
    return grid, solve_oracle(WSCC, 0.2, output_times=grid)


@pytest.mark.parametrize("kind", KINDS)
def test_c4_wscc_short_window(kind, wscc_short_reference):
    grid, oracle = wscc_short_reference
    t0 = time.perf_counter()
    res = solve_trajectory(WSCC, 0.2, TrainingConfig(time_span=0.2, num_points=10), ModelSpec(kind), output_times=grid)
    elapsed = time.perf_counter() - t0
    table = mse_table(res.trajectory, oracle)
    check(f"4 WSCC [0, 0.2] 10 points {kind}", max(table.values()) <= 1e-5,
          f"max {max(table.values()):.2e} (<= 1e-5); {_fmt(table)}; {elapsed:.1f} s")


# -- 5 ----------------------------------------------------------------------


@pytest.fixture(scope="module")
def wscc_long():
    grid = uniform_grid(0.0, 2.0, 0.01)
    oracle = solve_oracle(WSCC, 2.0, output_times=grid)
    cfg = TrainingConfig(time_span=2.0, num_points=50)
    out = {}
    for kind in ("pfq", "sfq-ry"):
        t0 = time.perf_counter()
        res = solve_trajectory(WSCC, 2.0, cfg, ModelSpec(kind), output_times=grid)
        out[kind] = (mse_table(res.trajectory, oracle), time.perf_counter() - t0)
    return out


def test_c5_pfq_long_window(wscc_long):
    table, elapsed = wscc_long["pfq"]
    check("5 WSCC [0, 2] 50 points PFQ", table["Average"] <= 1e-3,
          f"average {table['Average']:.2e} (<= 1e-3); {_fmt(table)}; {elapsed:.1f} s")


def test_c5_arcsin_fails_with_domain_error():
    with pytest.raises(ArcsinDomainError) as info:
        solve_trajectory(WSCC, 2.0, TrainingConfig(time_span=2.0, num_points=50), ModelSpec("sfq-arcsin"))
    check("5 WSCC [0, 2] SFQ-arcsin", True, f"raises ArcsinDomainError ({info.value})")


def test_c5_pfq_beats_sfq_ry(wscc_long):
    pfq, sfq = wscc_long["pfq"][0]["Average"], wscc_long["sfq-ry"][0]["Average"]
    check("5 WSCC [0, 2] ranking", pfq < sfq, f"PFQ average {pfq:.2e} < SFQ-Ry average {sfq:.2e}")


# -- 6 ----------------------------------------------------------------------


def _sweep(tmp_path, axis, values, **raw):
    cfg = parse_config({"system": "smib", "model": "sfq-ry", "output_dir": str(tmp_path), **raw}, environ={})
    t0 = time.perf_counter()
    rows = run_sweep(cfg, tmp_path, axis, values)
    assert all(r["status"] == "ok" for r in rows)
    return [r["Average"] for r in rows], time.perf_counter() - t0


def _non_increasing(errs, factor=1.5):
    return all(b <= factor * a for a, b in zip(errs, errs[1:]))


def test_c6_time_span_sweep(tmp_path):
    values = (1.0, 0.5, 0.2)
    errs, elapsed = _sweep(tmp_path, "time_span", values, span=8.0, training={"num_points": 20})
    ok = _non_increasing(errs) and errs[-1] <= errs[0]
    check("6 SMIB time-span sweep", ok,
          "average MSE " + ", ".join(f"t_s={v:g}: {e:.2e}" for v, e in zip(values, errs))
          + f" (non-increasing within 1.5x); {elapsed:.1f} s")


def test_c6_points_sweep(tmp_path):
    values = (3, 5, 10, 20)
    errs, elapsed = _sweep(tmp_path, "num_points", values, span=0.5, training={"time_span": 0.5})
    ok = _non_increasing(errs) and errs[-1] <= errs[0]
    check("6 SMIB training-points sweep", ok,
          "average MSE " + ", ".join(f"n={v}: {e:.2e}" for v, e in zip(values, errs))
          + f" (non-increasing within 1.5x); {elapsed:.1f} s")


# -- 7 ----------------------------------------------------------------------


def test_c7_rk4_order():
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        y = rk4_solve(lambda t, y: np.array([y[1], -y[0]]), 0.0, math.pi, h, [1.0, 0.0]).final_state()
        errs.append(math.hypot(y[0] + 1.0, y[1]))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    check("7 RK4 fourth order", all(8 <= r <= 32 for r in ratios),
          "error ratios per halving " + ", ".join(f"{r:.2f}" for r in ratios) + " (16 within 2x)")


def test_c7_oracle_residuals():
    smib = ref.stencil_residuals(SMIB, [0.1, 0.9, 2.5, 6.0])
    wscc = ref.stencil_residuals(WSCC, [0.5, 10.04, 11.0])
    worst = max(np.max(smib), np.max(wscc))
    check("7 oracle residuals", worst < 1e-5,
          f"max residual SMIB {np.max(smib):.2e}, WSCC {np.max(wscc):.2e} (< 1e-5)")


def test_c7_wscc_pre_fault_balance():
    gap = float(np.max(np.abs(WSCC.data.equilibrium_mismatch())))
    check("7 WSCC pre-fault |Pm - Pe|", gap < 2e-2, f"max {gap:.2e} pu (< 2e-2)")


# -- 8 ----------------------------------------------------------------------


def test_c8_bfgs_rosenbrock():
    res = bfgs_minimize(lambda x: (rosen(x), rosen_der(x)), [-1.2, 1.0], max_iterations=500, gradient_tolerance=1e-12)
    err = float(np.max(np.abs(res.x - 1.0)))
    check("8 BFGS Rosenbrock", err < 1e-8, f"|x - (1, 1)| = {err:.2e} (< 1e-8) after {res.iterations} iterations")
