"""Seeded Monte Carlo harness: piecewise-constant signals plus Gaussian
noise, both estimators, and empirical frequencies of the probability events
and error inequalities.

Reproducibility contract: every trial draws its noise from a counter-based
generator keyed by (master seed, trial index), trials are processed in fixed
blocks, and aggregation folds blocks in index order, so output is bit
identical for any thread count.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import graphs, projections, solvers, tuning
from .graphs import ActiveSet, DirectedGraph
from .solvers import SolverOptions
from .tuning import TheoremInputs

BLOCK_SIZE = 64  # trials per solver batch; fixed so results never depend on threading


@dataclass(frozen=True)
class SignalSpec:
    """Piecewise-constant truth: one level per component of the graph with
    the true active edges removed.  Either explicit levels or a total
    variation budget (levels then alternate 0, h with h scaled so the total
    variation equals the budget)."""

    levels: tuple[float, ...] | None = None
    tv_budget: float | None = None

    def build(self, D: sp.spmatrix, active: ActiveSet) -> np.ndarray:
        lab = active.comp_label
        if self.levels is not None:
            if len(self.levels) != active.r_S:
                raise ValueError(f"need {active.r_S} levels, got {len(self.levels)}")
            f0 = np.asarray(self.levels, dtype=np.float64)[lab]
        elif self.tv_budget is not None:
            pattern = np.where(np.arange(active.r_S) % 2 == 0, 0.0, 1.0)[lab]
            tv = float(np.abs(D @ pattern).sum())
            f0 = pattern * (self.tv_budget / tv) if tv > 0 else pattern * 0.0
        else:
            raise ValueError("signal spec needs levels or tv_budget")
        Df0 = np.abs(D @ f0)
        support = set((np.flatnonzero(Df0 > 1e-12) + 1).tolist())
        if not support.issubset(set(active.S)):
            raise ValueError("generated signal jumps outside the true active set")
        return f0


def trial_noise(sigma: float, n: int, master_seed: int, trial_index: int) -> np.ndarray:
    """Noise vector of trial `trial_index`, bit-reproducible and independent
    of evaluation order (counter-based keying)."""
    gen = np.random.Generator(np.random.Philox(key=[master_seed, trial_index]))
    return sigma * gen.standard_normal(n)


def generate_trial(spec: SignalSpec, D: sp.spmatrix, active: ActiveSet,
                   sigma: float, master_seed: int, trial_index: int):
    """(f0, Y, eps) for one trial."""
    f0 = spec.build(D, active)
    eps = trial_noise(sigma, active.n, master_seed, trial_index)
    return f0, f0 + eps, eps


@dataclass(frozen=True)
class EventFlags:
    T_holds: bool
    X_holds: bool
    A_holds: bool
    Aprime_holds: bool
    R_holds: bool


class EventEvaluator:
    """Precomputed machinery for the per-trial noise event indicators.

    T: every pseudoinverse direction's correlation with the noise stays below
       lam * ||column||_n / gamma.
    X: the nullspace-projected noise norm stays below sigma/sqrt(n) *
       (sqrt(r_S) + sqrt(2x)).
    A, A': two-sided chi-square windows of width driven by `a` on the
       projected and antiprojected squared norms (A' adds the upper
       antiprojection bound, so A' implies A).
    R: gamma * max_i |eps'd_i^+| / (||eps||_n ||d_i^+||_n n) <= R.
    """

    def __init__(self, D: sp.spmatrix, active: ActiveSet, sigma: float,
                 lam: float, R: float, x: float, a: float):
        self.active = active
        self.sigma = sigma
        self.lam, self.R, self.x, self.a = lam, R, x, a
        self.pinv = projections.pseudoinverse(D, active)
        self.col_norms = self.pinv.column_norms()          # l2 norms
        self.col_norms_n = self.col_norms / math.sqrt(active.n)
        self.gamma = float(self.col_norms_n.max())
        n, r = active.n, active.r_S
        self.thr_T = lam * self.col_norms_n / self.gamma
        self.thr_X = math.sqrt(sigma ** 2 / n) * (math.sqrt(r) + math.sqrt(2 * x))
        self.pi_lo = r - 2.0 * math.sqrt(a * r)
        self.pi_hi = r + 2.0 * math.sqrt(a * r) + 2.0 * a
        self.anti_lo = (n - r) - 2.0 * math.sqrt(a * (n - r))
        self.anti_hi = (n - r) + 2.0 * math.sqrt(a * (n - r)) + 2.0 * a

    def flags_batch(self, eps: np.ndarray) -> list[EventFlags]:
        """Flags for a block of noise columns, shape (n, B)."""
        n = self.active.n
        corr = np.abs(self.pinv.apply_transpose(eps)) / n   # (m-s, B)
        T = np.all(corr <= self.thr_T[:, None], axis=0)
        proj = projections.project_nullspace(self.active, eps)
        proj_sq = np.sum(proj ** 2, axis=0)
        eps_sq = np.sum(eps ** 2, axis=0)
        anti_sq = eps_sq - proj_sq
        X = np.sqrt(proj_sq / n) <= self.thr_X
        pi_scaled = proj_sq / self.sigma ** 2
        anti_scaled = anti_sq / self.sigma ** 2
        A = (pi_scaled >= self.pi_lo) & (pi_scaled <= self.pi_hi) & (anti_scaled >= self.anti_lo)
        Ap = A & (anti_scaled <= self.anti_hi)
        eps_n = np.sqrt(eps_sq / n)
        with np.errstate(divide="ignore", invalid="ignore"):
            Rhat = np.max(corr / (self.col_norms_n[:, None] * eps_n[None, :]), axis=0)
        Rhat = np.where(eps_n == 0.0, 0.0, Rhat)  # zero noise correlates with nothing
        Rflag = self.gamma * Rhat <= self.R
        return [EventFlags(bool(T[j]), bool(X[j]), bool(A[j]), bool(Ap[j]), bool(Rflag[j]))
                for j in range(eps.shape[1])]


EVENT_FLOORS = {
    "T": lambda p: 1.0 - math.exp(-p["t"]),
    "X": lambda p: 1.0 - math.exp(-p["x"]),
    "A": lambda p: 1.0 - 3.0 * math.exp(-p["a"]),
    "Aprime": lambda p: 1.0 - 4.0 * math.exp(-p["a"]),
    "R": lambda p: 1.0 - math.exp(-p["t"]),
}


@dataclass
class ExperimentConfig:
    """One Monte Carlo experiment.  Mirrors the JSON config schema."""

    graph: DirectedGraph
    family: str
    S: tuple[int, ...]
    signal: SignalSpec
    sigma: float = 1.0
    x: float = 2.0
    t: float = 2.0
    a: float = 2.0
    eta: float = 0.5
    theorems: tuple[str, ...] = ()
    trials: int = 1000
    seed: int = 0
    lam: float | None = None        # user override; None = theorem-minimal
    lambda0: float | None = None
    grid_constant: float | None = None
    solver_tol: float = 1e-7
    threads: int = 1
    events: bool = True
    kappa_source: str = "paper_bound"
    kappa_value: float | None = None

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        gspec = cfg["graph"]
        family = gspec["family"]
        graph = graphs.build_graph(family, **gspec.get("params", {}))
        sig = cfg.get("signal", {})
        spec = SignalSpec(levels=tuple(sig["levels"]) if "levels" in sig else None,
                          tv_budget=sig.get("tv_budget"))
        params = cfg.get("params", {})
        return cls(
            graph=graph, family=family, S=tuple(cfg.get("S", ())), signal=spec,
            sigma=float(cfg.get("sigma", 1.0)),
            x=float(params.get("x", 2.0)), t=float(params.get("t", 2.0)),
            a=float(params.get("a", 2.0)), eta=float(params.get("eta", 0.5)),
            theorems=tuple(cfg.get("theorems", ())),
            trials=int(cfg.get("trials", 1000)), seed=int(cfg.get("seed", 0)),
            lam=cfg.get("lambda"), lambda0=cfg.get("lambda0"),
            grid_constant=cfg.get("grid_constant"),
            solver_tol=float(cfg.get("solver_tol", 1e-7)),
            threads=int(cfg.get("threads", 1)),
            events=bool(cfg.get("events", True)),
            kappa_source=cfg.get("kappa_source", "paper_bound"),
            kappa_value=cfg.get("kappa_value"),
        )


@dataclass
class TrialRecord:
    trial: int
    mse_plain: float | None
    mse_sqrt: float | None
    sigma_hat: float | None
    ratio_eps: float | None
    overfit: bool | None
    nonoverfit_holds: bool | None
    flags: EventFlags | None
    lhs: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    holds: dict = field(default_factory=dict)


CSV_BASE_COLUMNS = ["trial", "mse_plain", "mse_sqrt", "sigma_hat", "ratio_eps",
                    "overfit", "nonoverfit_holds", "T_holds", "X_holds",
                    "A_holds", "Aprime_holds", "R_holds"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def trial_columns(theorem_ids) -> list[str]:
    cols = list(CSV_BASE_COLUMNS)
    for tid in theorem_ids:
        cols += [f"{tid}_lhs", f"{tid}_rhs", f"{tid}_holds"]
    return cols


def write_trials_csv(records: list[TrialRecord], theorem_ids, fh) -> None:
    """Stable-order CSV, one row per trial, full-precision floats."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(trial_columns(theorem_ids))
    for r in records:
        fl = r.flags
        row = [_fmt(r.trial), _fmt(r.mse_plain), _fmt(r.mse_sqrt),
               _fmt(r.sigma_hat), _fmt(r.ratio_eps), _fmt(r.overfit),
               _fmt(r.nonoverfit_holds)]
        row += [_fmt(None if fl is None else getattr(fl, f"{nm}_holds"))
                for nm in ("T", "X", "A", "Aprime", "R")]
        for tid in theorem_ids:
            row += [_fmt(r.lhs.get(tid)), _fmt(r.rhs.get(tid)), _fmt(r.holds.get(tid))]
        writer.writerow(row)


class Experiment:
    """Prepared experiment: graph, operator, tuning, and per-theorem RHS."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.D = graphs.incidence(cfg.graph)
        self.active = graphs.active_set(cfg.graph, cfg.S)
        if not graphs.is_admissible(self.D, self.active):
            raise ValueError(f"active set {list(cfg.S)} is not admissible on this graph")
        self.report = projections.theory_report(self.D, self.active)
        self.f0 = cfg.signal.build(self.D, self.active)
        self.norm_Df0 = float(np.abs(self.D @ self.f0).sum())

        self.plain_ids = [tid for tid in cfg.theorems if tuning.theorem_kind(tid) == "plain"]
        self.sqrt_ids = [tid for tid in cfg.theorems if tuning.theorem_kind(tid) == "sqrt"]

        base = TheoremInputs(active=self.active, report=self.report,
                             family=cfg.family, sigma=cfg.sigma, t=cfg.t,
                             x=cfg.x, a=cfg.a, eta=cfg.eta, f=self.f0,
                             f0=self.f0, D=self.D,
                             kappa_source=cfg.kappa_source,
                             kappa_value=cfg.kappa_value,
                             grid_constant=cfg.grid_constant)
        self.lam = cfg.lam if cfg.lam is not None else self._shared_minimal(self.plain_ids, base)
        self.lambda0 = cfg.lambda0 if cfg.lambda0 is not None else \
            self._shared_minimal(self.sqrt_ids, base)
        base.lam = self.lam
        base.lambda0 = self.lambda0
        self.inputs = base

        # theorem RHS values do not vary across trials when the candidate is f0
        self.rhs = {tid: tuning.oracle_rhs(tid, base) for tid in cfg.theorems}
        self.lhs_coeff = {tid: tuning.lhs_penalty_coefficient(tid, base)
                          for tid in cfg.theorems}

        lam_T = self.lam if self.lam is not None else tuning.lambda_plain(
            self.report.gamma, cfg.sigma, self.active.n, self.active.r_S, cfg.t)
        R = tuning.sqrt_R_min(self.report.gamma, self.active.n, self.active.r_S, cfg.t)
        self.events = EventEvaluator(self.D, self.active, cfg.sigma, lam_T, R,
                                     cfg.x, cfg.a) if cfg.events else None
        self.solver_opts = SolverOptions(tol=cfg.solver_tol, certify=False)
        self.S_rows = np.asarray(self.active.S, dtype=np.int64) - 1

    @staticmethod
    def _shared_minimal(ids, base) -> float | None:
        vals = [tuning.minimal_tuning(tid, base) for tid in ids]
        if not vals:
            return None
        if max(vals) - min(vals) > 1e-12 * max(vals):
            raise ValueError(
                "requested theorems disagree on the minimal tuning value; "
                "run them in separate experiments or fix the tuning explicitly")
        return vals[0]

    def run_block(self, block_index: int, lo: int, hi: int) -> list[TrialRecord]:
        cfg = self.cfg
        n = self.active.n
        idx = np.arange(lo, hi)
        eps = np.empty((n, len(idx)))
        for j, ti in enumerate(idx):
            eps[:, j] = trial_noise(cfg.sigma, n, cfg.seed, int(ti))
        Y = self.f0[:, None] + eps
        flags = self.events.flags_batch(eps) if self.events else [None] * len(idx)

        mse_plain = pen_plain = None
        if self.lam is not None:
            F = solvers.solve_analysis_batch(Y, self.D, self.lam, self.solver_opts)
            diff = F - self.f0[:, None]
            mse_plain = np.sum(diff ** 2, axis=0) / n
            pen_plain = np.abs((self.D @ F))[self.S_rows].sum(axis=0) if len(self.S_rows) else \
                np.zeros(len(idx))

        mse_sqrt = sig_hat = overfit = pen_sqrt = ratio = nonover = None
        if self.lambda0 is not None:
            # the solver's penalty is 2*lambda0*||Df||_1, so the inequality's
            # lambda0 (penalty coefficient as stated) maps to lambda0/2 here
            F2, sig_hat, overfit = solvers.solve_sqrt_analysis_batch(
                Y, self.D, self.lambda0 / 2.0, self.solver_opts)
            diff = F2 - self.f0[:, None]
            mse_sqrt = np.sum(diff ** 2, axis=0) / n
            pen_sqrt = np.abs((self.D @ F2))[self.S_rows].sum(axis=0) if len(self.S_rows) else \
                np.zeros(len(idx))
            eps_n = np.sqrt(np.sum(eps ** 2, axis=0) / n)
            ratio = sig_hat / eps_n
            nonover = np.abs(ratio - 1.0) <= cfg.eta

        out = []
        for j, ti in enumerate(idx):
            rec = TrialRecord(
                trial=int(ti),
                mse_plain=None if mse_plain is None else float(mse_plain[j]),
                mse_sqrt=None if mse_sqrt is None else float(mse_sqrt[j]),
                sigma_hat=None if sig_hat is None else float(sig_hat[j]),
                ratio_eps=None if ratio is None else float(ratio[j]),
                overfit=None if overfit is None else bool(overfit[j]),
                nonoverfit_holds=None if nonover is None else bool(nonover[j]),
                flags=flags[j])
            for tid in cfg.theorems:
                kind = tuning.theorem_kind(tid)
                if kind == "plain":
                    lhs = float(mse_plain[j] + self.lhs_coeff[tid] * pen_plain[j])
                else:
                    lhs = float(mse_sqrt[j] + self.lhs_coeff[tid] * pen_sqrt[j])
                rec.lhs[tid] = lhs
                rec.rhs[tid] = self.rhs[tid].value
                rec.holds[tid] = lhs <= self.rhs[tid].value
            out.append(rec)
        return out


def run_experiment(cfg: ExperimentConfig | dict):
    """Run the Monte Carlo experiment; returns (summary dict, records)."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    exp = Experiment(cfg)
    blocks = [(b, lo, min(lo + BLOCK_SIZE, cfg.trials))
              for b, lo in enumerate(range(0, cfg.trials, BLOCK_SIZE))]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(exp.run_block, b, lo, hi) for b, lo, hi in blocks]
            results = [f.result() for f in futures]
    else:
        results = [exp.run_block(b, lo, hi) for b, lo, hi in blocks]
    records = [rec for block in results for rec in block]
    return _summarize(exp, records), records


def _frac(values) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else math.nan


def _summarize(exp: Experiment, records: list[TrialRecord]) -> dict:
    cfg = exp.cfg
    params = {"x": cfg.x, "t": cfg.t, "a": cfg.a, "eta": cfg.eta}
    thm_summary = {}
    for tid in cfg.theorems:
        frac = _frac([r.holds[tid] for r in records])
        floor = exp.rhs[tid].probability
        thm_summary[tid] = {
            "holds_fraction": frac,
            "probability_floor": floor,
            "rhs_value": exp.rhs[tid].value,
            "rhs_breakdown": exp.rhs[tid].breakdown,
            "passes_floor": bool(frac >= floor - 3.0 * _binom_se(floor, cfg.trials)),
        }
    events = {}
    if exp.events is not None:
        for nm in ("T", "X", "A", "Aprime", "R"):
            frac = _frac([getattr(r.flags, f"{nm}_holds") for r in records])
            floor = EVENT_FLOORS[nm](params)
            events[nm] = {"fraction": frac, "floor": floor,
                          "passes_floor": bool(frac >= floor - 3.0 * _binom_se(floor, cfg.trials))}

    def stats(vals):
        arr = np.array([v for v in vals if v is not None], dtype=np.float64)
        if arr.size == 0:
            return None
        return {"mean": float(arr.mean()), "median": float(np.median(arr)),
                "q10": float(np.quantile(arr, 0.10)), "q90": float(np.quantile(arr, 0.90))}

    overfits = [r.overfit for r in records if r.overfit is not None]
    summary = {
        "config": {
            "family": cfg.family, "n": exp.active.n, "S": list(cfg.S),
            "r_S": exp.active.r_S, "gamma": exp.report.gamma,
            "sigma": cfg.sigma, "params": params,
            "lambda": exp.lam, "lambda0": exp.lambda0,
            "trials": cfg.trials, "seed": cfg.seed,
            "norm_Df0_1": exp.norm_Df0,
        },
        "theorems": thm_summary,
        "events": events,
        "mse_plain": stats([r.mse_plain for r in records]),
        "mse_sqrt": stats([r.mse_sqrt for r in records]),
        "sigma_hat_mean": _frac([r.sigma_hat for r in records]),
        "overfit_rate": float(np.mean(overfits)) if overfits else None,
        "nonoverfit_fraction": _frac([r.nonoverfit_holds for r in records]),
    }
    return summary


def _binom_se(p: float, n: int) -> float:
    p = min(max(p, 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / n)


def experiment_csv(cfg: ExperimentConfig | dict) -> tuple[str, dict]:
    """Run and render the trials CSV; returns (csv text, summary)."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    summary, records = run_experiment(cfg)
    buf = io.StringIO()
    write_trials_csv(records, cfg.theorems, buf)
    return buf.getvalue(), summary


# ---------------------------------------------------------------------------
# probability lemma verification

DEFAULT_PROB_GRID = {
    "max_gaussian": {"p": [1, 8, 64], "t": [0.5, 1.0, 2.0]},
    "chi_square": {"d": [2, 5, 10], "x": [0.5, 1.0, 2.0]},
    "ratio": {"n": [8, 16, 32], "t": [0.5, 1.0, 2.0]},
}


def verify_probability_lemmas(trials: int = 100_000, seed: int = 0,
                              grid: dict | None = None) -> dict:
    """Empirical check of the three tail bounds behind the event floors.

    For each cell, the empirical tail frequency must not exceed the stated
    bound by more than three binomial standard errors computed at the bound.
    """
    grid = grid or DEFAULT_PROB_GRID
    cells = []

    def check(name, params, threshold_desc, emp, bound):
        se = _binom_se(bound, trials)
        cells.append({
            "lemma": name, "params": params, "threshold": threshold_desc,
            "empirical": emp, "bound": bound, "se": se,
            "ok": bool(emp <= bound + 3.0 * se),
        })

    key = 0
    for p in grid["max_gaussian"]["p"]:
        for t in grid["max_gaussian"]["t"]:
            gen = np.random.Generator(np.random.Philox(key=[seed, key])); key += 1
            V = gen.standard_normal((trials, p))
            thr = math.sqrt(2.0 * math.log(2.0 * p) + 2.0 * t)
            emp = float(np.mean(np.abs(V).max(axis=1) >= thr))
            check("max_gaussian", {"p": p, "t": t}, thr, emp, math.exp(-t))
    for d in grid["chi_square"]["d"]:
        for x in grid["chi_square"]["x"]:
            gen = np.random.Generator(np.random.Philox(key=[seed, key])); key += 1
            X = gen.chisquare(d, size=trials)
            hi = d + 2.0 * math.sqrt(d * x) + 2.0 * x
            lo = d - 2.0 * math.sqrt(d * x)
            check("chi_square_upper", {"d": d, "x": x}, hi,
                  float(np.mean(X >= hi)), math.exp(-x))
            check("chi_square_lower", {"d": d, "x": x}, lo,
                  float(np.mean(X <= lo)), math.exp(-x))
    for n in grid["ratio"]["n"]:
        for t in grid["ratio"]["t"]:
            if not (0 < t < (n - 1) / 2):
                continue
            gen = np.random.Generator(np.random.Philox(key=[seed, key])); key += 1
            eps = gen.standard_normal((trials, n))
            # u = sqrt(n) e_1 has ||u||_n = 1; u'eps/(n ||eps||_n) = eps_1/||eps||_2
            ratio = eps[:, 0] / np.linalg.norm(eps, axis=1)
            thr = math.sqrt(2.0 * t / (n - 1))
            check("ratio", {"n": n, "t": t}, thr,
                  float(np.mean(ratio > thr)), 2.0 * math.exp(-t))
    return {"trials": trials, "seed": seed, "cells": cells,
            "all_ok": all(c["ok"] for c in cells)}
