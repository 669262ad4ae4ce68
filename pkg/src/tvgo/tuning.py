"""Tuning-parameter formulas, assumption checks, and the error-bound
right-hand sides of every implemented inequality.

All fifteen-plus inequality variants share one engine: a registry maps each
theorem id to its probability pattern, its minimal tuning value, its penalty
term, and its stochastic terms.  The generic fast-rate bounds plug in a
compatibility bound (closed-form for paths/cycles, or the numeric search
estimate); the family-specific corollaries carry their plugged-in closed
forms verbatim.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compatibility import kappa_bound_cycle, kappa_bound_path
from .graphs import ActiveSet
from .projections import TheoryReport


class TheoremHypothesisError(ValueError):
    """A hypothesis of the requested inequality fails for these inputs."""


def lambda_plain(gamma: float, sigma: float, n: int, r_S: int, t: float) -> float:
    """Minimal admissible penalty level for the plain estimator:
    gamma * sigma * sqrt(2 log(2(n - r_S))/n + 2t/n)."""
    if r_S >= n:
        raise ValueError("r_S must be < n")
    if t <= 0:
        raise ValueError("t must be > 0")
    return gamma * sigma * math.sqrt(2.0 * math.log(2.0 * (n - r_S)) / n + 2.0 * t / n)


def t_max_sqrt(n: int, r_S: int) -> float:
    """Upper end of the admissible t interval for the square-root formulas."""
    return (n - 1) / 2.0 - math.log(2.0 * (n - r_S))


def lambda0_sqrt(gamma: float, n: int, r_S: int, t: float, eta: float) -> float:
    """Minimal noise-free penalty level for the square-root estimator:
    (1/(1-eta)) * gamma * sqrt((2 log(2(n - r_S)) + 2t)/(n - 1)).

    Does not depend on the noise level."""
    if not (0.0 < eta < 1.0):
        raise ValueError("eta must lie in (0, 1)")
    if not (0.0 < t < t_max_sqrt(n, r_S)):
        raise ValueError(f"t must lie in (0, {t_max_sqrt(n, r_S):.6g}) for n={n}, r_S={r_S}")
    return gamma / (1.0 - eta) * math.sqrt((2.0 * math.log(2.0 * (n - r_S)) + 2.0 * t) / (n - 1))


def sqrt_R_min(gamma: float, n: int, r_S: int, t: float) -> float:
    """Minimal noise-ratio threshold R = gamma sqrt((2log(2(n-r_S)) + 2t)/(n-1))."""
    return gamma * math.sqrt((2.0 * math.log(2.0 * (n - r_S)) + 2.0 * t) / (n - 1))


@dataclass(frozen=True)
class Assumption1Report:
    """Outcome of the square-root regime check.

    ok is the conjunction of the three checkable conditions; c is the signal
    budget constant entering the total-variation cap."""

    ok: bool
    c: float
    n_large_enough: bool
    eta_large_enough: bool
    lambda0_large_enough: bool
    signal_small_enough: bool
    tv_cap: float
    details: dict

    def to_dict(self) -> dict:
        return {
            "ok": self.ok, "c": self.c,
            "n_large_enough": self.n_large_enough,
            "eta_large_enough": self.eta_large_enough,
            "lambda0_large_enough": self.lambda0_large_enough,
            "signal_small_enough": self.signal_small_enough,
            "tv_cap": self.tv_cap, "details": self.details,
        }


def check_assumption1(n: int, r_S: int, gamma: float, sigma: float, a: float,
                      eta: float, t: float, lambda0: float,
                      norm_Df0_1: float) -> Assumption1Report:
    """Check the square-root regime conditions for the given parameters.

    Conditions: n > 8a; eta > 2(sqrt(r_S) + sqrt(2a))/sqrt(n - sqrt(8an));
    lambda0 >= R/(1 - eta) for the minimal R; and the signal's total
    variation below c*sigma*sqrt(1 - sqrt(8a/n))/lambda0, with
    c = sqrt((eta/2 - (sqrt(r_S)+sqrt(2a))/sqrt(n - sqrt(8an)))^2 + 4) - 2.
    """
    if n <= 8 * a:
        raise ValueError(f"need n > 8a; got n={n}, a={a}")
    p = (math.sqrt(r_S) + math.sqrt(2 * a)) / math.sqrt(n - math.sqrt(8 * a * n))
    c = math.sqrt((eta / 2.0 - p) ** 2 + 4.0) - 2.0
    eta_ok = eta > 2.0 * p
    R = sqrt_R_min(gamma, n, r_S, t)
    lam0_ok = lambda0 >= R / (1.0 - eta) * (1.0 - 1e-12)
    tv_cap = c * sigma * math.sqrt(1.0 - math.sqrt(8.0 * a / n)) / lambda0
    signal_ok = norm_Df0_1 <= tv_cap
    details = {"p": p, "R_min": R, "lambda0_min": R / (1.0 - eta),
               "eta_threshold": 2.0 * p}
    if not eta_ok:
        details["reason"] = "eta too small for r_S"
    return Assumption1Report(ok=bool(eta_ok and lam0_ok and signal_ok), c=c,
                             n_large_enough=True, eta_large_enough=bool(eta_ok),
                             lambda0_large_enough=bool(lam0_ok),
                             signal_small_enough=bool(signal_ok),
                             tv_cap=tv_cap, details=details)


@dataclass(frozen=True)
class AdmissibleCaps:
    """Caps on r_S and gamma for active sets compatible with fixed square-root
    tuning; non-positive caps mean no active set qualifies."""

    max_r_S: float
    max_gamma: float
    feasible: bool

    def to_dict(self) -> dict:
        return {"max_r_S": self.max_r_S, "max_gamma": self.max_gamma,
                "feasible": self.feasible}


def admissible_set_requirements(lambda0: float, a: float, t: float, eta: float,
                                n: int) -> AdmissibleCaps:
    """Requirements an active set must meet for fixed (lambda0, a, t, eta):
    r_S < (eta sqrt(n - sqrt(8an))/2 - sqrt(2a))^2 and
    gamma <= lambda0 (1-eta) sqrt((n-1)/(2 log(2n) + 2t))."""
    if n <= 8 * a:
        raise ValueError(f"need n > 8a; got n={n}, a={a}")
    root = eta * math.sqrt(n - math.sqrt(8 * a * n)) / 2.0 - math.sqrt(2 * a)
    max_r = root ** 2 if root > 0 else -(root ** 2)
    max_g = lambda0 * (1.0 - eta) * math.sqrt((n - 1) / (2.0 * math.log(2.0 * n) + 2.0 * t))
    return AdmissibleCaps(max_r_S=max_r, max_gamma=max_g,
                          feasible=bool(root > 0 and max_g > 0))


@dataclass(frozen=True)
class OracleRHS:
    """A right-hand side value, its additive decomposition, and the
    probability with which the inequality is guaranteed."""

    theorem_id: str
    value: float
    breakdown: dict
    probability: float

    def to_dict(self) -> dict:
        return {"theorem_id": self.theorem_id, "value": self.value,
                "breakdown": dict(self.breakdown), "probability": self.probability}


@dataclass
class TheoremInputs:
    """Everything an inequality evaluation may need.

    f is the oracle candidate (defaults to f0); norms of Df, D_S f and
    D_{-S} f are derived from it.  kappa_source selects between the
    closed-form compatibility bound and a numeric search value passed in
    kappa_value.
    """

    active: ActiveSet
    report: TheoryReport
    family: str
    sigma: float
    t: float
    x: float | None = None
    a: float | None = None
    eta: float | None = None
    lam: float | None = None
    lambda0: float | None = None
    f: np.ndarray | None = None
    f0: np.ndarray | None = None
    D: object = None
    kappa_source: str = "paper_bound"
    kappa_value: float | None = None
    grid_constant: float | None = None

    def approx_err(self) -> float:
        if self.f is None or self.f0 is None:
            return 0.0
        d = np.asarray(self.f) - np.asarray(self.f0)
        return float(np.sum(d ** 2) / len(d))

    def df_norms(self) -> tuple[float, float, float]:
        """(||Df||_1, ||D_S f||_1, ||D_{-S} f||_1) of the candidate f."""
        if self.f is None or self.D is None:
            return 0.0, 0.0, 0.0
        Df = np.abs(self.D @ np.asarray(self.f, dtype=np.float64))
        total = float(Df.sum())
        s_part = float(Df[np.asarray(self.active.S, dtype=np.int64) - 1].sum()) if self.active.S else 0.0
        return total, s_part, total - s_part

    def sqrt_rs_over_kappa(self) -> float:
        """sqrt(r_S)/kappa(S, W) from the selected source."""
        if self.kappa_source == "numeric":
            if self.kappa_value is None:
                raise ValueError("kappa_source='numeric' needs kappa_value")
            return math.sqrt(self.active.r_S) / self.kappa_value
        if self.family == "path":
            kb = kappa_bound_path(self.active, self.report.weights,
                                  self.report.gamma)
        elif self.family == "cycle":
            kb = kappa_bound_cycle(self.active, self.report.weights,
                                   self.report.gamma)
        else:
            raise TheoremHypothesisError(
                f"no closed-form compatibility bound for family {self.family!r}; "
                "pass kappa_source='numeric'")
        return kb.sqrt_rs_over_kappa_weighted


def _need(inputs: TheoremInputs, *names):
    for nm in names:
        if getattr(inputs, nm) is None:
            raise ValueError(f"theorem needs input {nm!r}")


def _K_path(active: ActiveSet) -> float:
    return kappa_bound_path(active).K


def _K_cycle(active: ActiveSet) -> float:
    return kappa_bound_cycle(active).K_prime


def _check_equal_sizes(active: ActiveSet, even: bool):
    if active.n_min != active.n_max:
        raise TheoremHypothesisError(
            f"needs n_min = n_max; got {active.n_min} != {active.n_max}")
    if even and active.n_max % 2 != 0:
        raise TheoremHypothesisError(f"needs even component size; got {active.n_max}")


def _check_nmin(active: ActiveSet, k: int):
    if active.n_min < k:
        raise TheoremHypothesisError(
            f"needs every component size >= {k}; smallest is {active.n_min}")


def _prob_plain(inp: TheoremInputs) -> float:
    _need(inp, "x")
    return 1.0 - math.exp(-inp.x) - math.exp(-inp.t)


def _prob_sqrt(inp: TheoremInputs) -> float:
    _need(inp, "a")
    return 1.0 - 4.0 * math.exp(-inp.a) - math.exp(-inp.t)


def _log2n_t(inp: TheoremInputs) -> float:
    return math.log(2.0 * inp.active.n) + inp.t


@dataclass(frozen=True)
class _Thm:
    kind: str                 # "plain" | "sqrt"
    prob: object
    min_tuning: object        # inputs -> minimal lambda or lambda0
    rhs: object               # inputs -> (value, breakdown)
    lhs_penalty: object       # inputs -> coefficient of ||D_S fhat||_1 in the LHS
    check: object = None      # hypothesis check


def _stochastic(parts: dict, sigma: float) -> tuple[float, dict]:
    """sigma^2 (sum of sqrt-terms)^2 with the named terms recorded."""
    tot = sigma * sum(parts.values())
    bd = {f"stochastic.{k}": sigma * v for k, v in parts.items()}
    bd["stochastic_total"] = tot ** 2
    return tot ** 2, bd


def _rhs_plain_fast(inp: TheoremInputs):
    _need(inp, "lam", "x")
    n, r = inp.active.n, inp.active.r_S
    _, _, pen_ms = inp.df_norms()
    sr_over_k = inp.sqrt_rs_over_kappa()
    st, bd = _stochastic({
        "noise_x": math.sqrt(2.0 * inp.x / n),
        "noise_rs": math.sqrt(r / n),
        "kappa": inp.lam * sr_over_k / inp.sigma,
    }, inp.sigma)
    approx = inp.approx_err()
    pen = 4.0 * inp.lam * pen_ms
    bd.update(approximation=approx, penalty=pen)
    return approx + pen + st, bd


def _rhs_plain_slow(inp: TheoremInputs):
    _need(inp, "lam", "x")
    n, r = inp.active.n, inp.active.r_S
    tot, _, _ = inp.df_norms()
    approx = inp.approx_err()
    noise = inp.sigma ** 2 / n * (math.sqrt(2.0 * inp.x) + math.sqrt(r)) ** 2
    pen = 4.0 * inp.lam * tot
    return approx + noise + pen, {"approximation": approx, "noise": noise, "penalty": pen}


def _rhs_sqrt_fast(inp: TheoremInputs):
    _need(inp, "lambda0", "a", "eta")
    n, r = inp.active.n, inp.active.r_S
    _, _, pen_ms = inp.df_norms()
    sr_over_k = inp.sqrt_rs_over_kappa()
    st, bd = _stochastic({
        "noise_a": math.sqrt(2.0 * inp.a / n),
        "noise_rs": math.sqrt(r / n),
        "kappa": 4.0 * inp.lambda0 * sr_over_k,
    }, inp.sigma)
    approx = inp.approx_err()
    pen = 16.0 * inp.sigma * inp.lambda0 * pen_ms
    # sharper intermediate penalty constant before rounding (1+eta)(1+sqrt(4a/n)) up to 4
    inter = 4.0 * (1.0 + inp.eta) * (1.0 + math.sqrt(4.0 * inp.a / n)) \
        * inp.sigma * inp.lambda0 * pen_ms
    bd.update(approximation=approx, penalty=pen, penalty_intermediate=inter)
    return approx + pen + st, bd


def _rhs_sqrt_slow(inp: TheoremInputs):
    _need(inp, "lambda0", "a")
    n, r = inp.active.n, inp.active.r_S
    tot, _, _ = inp.df_norms()
    approx = inp.approx_err()
    noise = inp.sigma ** 2 / n * (math.sqrt(2.0 * inp.a) + math.sqrt(r)) ** 2
    pen = 16.0 * inp.sigma * inp.lambda0 * tot
    return approx + noise + pen, {"approximation": approx, "noise": noise, "penalty": pen}


def _rate_K(inp: TheoremInputs, K: float, denom: int) -> float:
    return math.sqrt(inp.active.n_max * K * _log2n_t(inp) / denom)


def _rate_weights(inp: TheoremInputs, denom: int) -> float:
    n, r = inp.active.n, inp.active.r_S
    return math.sqrt(10.0 * (r / denom) * _log2n_t(inp) * math.log(n / r))


def _rhs_path_fast(inp: TheoremInputs, K_fn, equal: bool):
    _need(inp, "lam", "x")
    if equal:
        _check_equal_sizes(inp.active, even=True)
    _check_nmin(inp.active, 4)
    n, r = inp.active.n, inp.active.r_S
    if equal:
        rate_K = math.sqrt(4.0 * r * _log2n_t(inp) / n)
    else:
        rate_K = _rate_K(inp, K_fn(inp.active), n)
    st, bd = _stochastic({
        "noise_x": math.sqrt(2.0 * inp.x / n),
        "noise_rs": math.sqrt(r / n),
        "rate_K": rate_K,
        "rate_weights": _rate_weights(inp, n),
    }, inp.sigma)
    approx = inp.approx_err()
    _, _, pen_ms = inp.df_norms()
    pen = 4.0 * inp.lam * pen_ms
    bd.update(approximation=approx, penalty=pen)
    return approx + pen + st, bd


def _rhs_sqrt_path_fast(inp: TheoremInputs, K_fn, equal: bool):
    _need(inp, "lambda0", "a", "eta")
    if equal:
        _check_equal_sizes(inp.active, even=True)
    _check_nmin(inp.active, 4)
    n, r = inp.active.n, inp.active.r_S
    one = 1.0 / (1.0 - inp.eta)
    if equal:
        rate_K = 4.0 * one * math.sqrt(4.0 * r * _log2n_t(inp) / (n - 1))
    else:
        rate_K = 4.0 * one * _rate_K(inp, K_fn(inp.active), n - 1)
    st, bd = _stochastic({
        "noise_a": math.sqrt(2.0 * inp.a / n),
        "noise_rs": math.sqrt(r / n),
        "rate_K": rate_K,
        "rate_weights": 4.0 * one * _rate_weights(inp, n - 1),
    }, inp.sigma)
    approx = inp.approx_err()
    _, _, pen_ms = inp.df_norms()
    pen = 16.0 * inp.lambda0 * inp.sigma * pen_ms
    bd.update(approximation=approx, penalty=pen)
    return approx + pen + st, bd


def _rhs_slow_family(inp: TheoremInputs, lam_coeff_fn, sqrt_kind: bool):
    if sqrt_kind:
        _need(inp, "a")
        head = math.sqrt(2.0 * inp.a)
    else:
        _need(inp, "x")
        head = math.sqrt(2.0 * inp.x)
    n, r = inp.active.n, inp.active.r_S
    tot, _, _ = inp.df_norms()
    approx = inp.approx_err()
    noise = inp.sigma ** 2 / n * (head + math.sqrt(r)) ** 2
    pen = lam_coeff_fn(inp) * tot
    return approx + noise + pen, {"approximation": approx, "noise": noise, "penalty": pen}


def _min_lam_theorem(inp: TheoremInputs) -> float:
    return lambda_plain(inp.report.gamma, inp.sigma, inp.active.n, inp.active.r_S, inp.t)


def _min_lam_family(inp: TheoremInputs) -> float:
    return inp.sigma * math.sqrt(inp.active.n_max * _log2n_t(inp)) / inp.active.n


def _min_lam_equal(inp: TheoremInputs) -> float:
    return inp.sigma * math.sqrt(_log2n_t(inp) / (inp.active.r_S * inp.active.n))


def _min_lam_grid(inp: TheoremInputs) -> float:
    _need(inp, "grid_constant")
    n = inp.active.n
    return inp.grid_constant * inp.sigma * math.sqrt(math.log(n) * _log2n_t(inp)) / n


def _min_lam0_theorem(inp: TheoremInputs) -> float:
    _need(inp, "eta")
    return lambda0_sqrt(inp.report.gamma, inp.active.n, inp.active.r_S, inp.t, inp.eta)


def _min_lam0_family(inp: TheoremInputs) -> float:
    _need(inp, "eta")
    n = inp.active.n
    return math.sqrt(inp.active.n_max * _log2n_t(inp) / (n * (n - 1))) / (1.0 - inp.eta)


def _min_lam0_equal(inp: TheoremInputs) -> float:
    _need(inp, "eta")
    n = inp.active.n
    return math.sqrt(_log2n_t(inp) / (inp.active.r_S * (n - 1))) / (1.0 - inp.eta)


def _min_lam0_grid(inp: TheoremInputs) -> float:
    _need(inp, "eta", "grid_constant")
    n = inp.active.n
    return inp.grid_constant / (1.0 - inp.eta) * math.sqrt(math.log(n) * _log2n_t(inp) / (n * (n - 1)))


def _lhs_plain_slow(inp: TheoremInputs) -> float:
    return 2.0 * inp.lam


def _lhs_sqrt_slow(inp: TheoremInputs) -> float:
    _need(inp, "a", "eta")
    n = inp.active.n
    return 2.0 * (1.0 - inp.eta) * math.sqrt(1.0 - math.sqrt(8.0 * inp.a / n)) \
        * inp.sigma * inp.lambda0


def _zero_lhs(inp: TheoremInputs) -> float:
    return 0.0


def _check_cycle_nonempty(inp: TheoremInputs):
    if not inp.active.S:
        raise TheoremHypothesisError("cycle inequalities need a nonempty active set")


THEOREMS: dict[str, _Thm] = {
    "plain_fast": _Thm("plain", _prob_plain, _min_lam_theorem, _rhs_plain_fast, _zero_lhs),
    "plain_slow": _Thm("plain", _prob_plain, _min_lam_theorem, _rhs_plain_slow, _lhs_plain_slow),
    "sqrt_fast": _Thm("sqrt", _prob_sqrt, _min_lam0_theorem, _rhs_sqrt_fast, _zero_lhs),
    "sqrt_slow": _Thm("sqrt", _prob_sqrt, _min_lam0_theorem, _rhs_sqrt_slow, _lhs_sqrt_slow),
    "path_fast": _Thm("plain", _prob_plain, _min_lam_family,
                      lambda i: _rhs_path_fast(i, _K_path, equal=False), _zero_lhs),
    "path_fast_equal": _Thm("plain", _prob_plain, _min_lam_equal,
                            lambda i: _rhs_path_fast(i, _K_path, equal=True), _zero_lhs),
    "sqrt_path_fast": _Thm("sqrt", _prob_sqrt, _min_lam0_family,
                           lambda i: _rhs_sqrt_path_fast(i, _K_path, equal=False), _zero_lhs),
    "sqrt_path_fast_equal": _Thm("sqrt", _prob_sqrt, _min_lam0_family,
                                 lambda i: _rhs_sqrt_path_fast(i, _K_path, equal=True), _zero_lhs),
    "cycle_fast": _Thm("plain", _prob_plain, _min_lam_family,
                       lambda i: _rhs_path_fast(i, _K_cycle, equal=False), _zero_lhs,
                       _check_cycle_nonempty),
    "sqrt_cycle_fast": _Thm("sqrt", _prob_sqrt, _min_lam0_family,
                            lambda i: _rhs_sqrt_path_fast(i, _K_cycle, equal=False), _zero_lhs,
                            _check_cycle_nonempty),
    "tree_cycle_slow": _Thm("plain", _prob_plain, _min_lam_family,
                            lambda i: _rhs_slow_family(i, lambda j: 4.0 * j.lam, False),
                            _zero_lhs),
    "tree_cycle_slow_equal": _Thm("plain", _prob_plain, _min_lam_equal,
                                  lambda i: _rhs_slow_family(i, lambda j: 4.0 * j.lam, False),
                                  _zero_lhs,
                                  lambda i: _check_equal_sizes(i.active, even=False)),
    "sqrt_tree_cycle_slow": _Thm("sqrt", _prob_sqrt, _min_lam0_family,
                                 lambda i: _rhs_slow_family(
                                     i, lambda j: 16.0 * j.sigma * j.lambda0, True),
                                 _zero_lhs),
    "sqrt_tree_cycle_slow_equal": _Thm("sqrt", _prob_sqrt, _min_lam0_equal,
                                       lambda i: _rhs_slow_family(
                                           i, lambda j: 16.0 * j.sigma * j.lambda0, True),
                                       _zero_lhs,
                                       lambda i: _check_equal_sizes(i.active, even=False)),
    "grid_slow": _Thm("plain", _prob_plain, _min_lam_grid,
                      lambda i: _rhs_slow_family(
                          i, lambda j: j.grid_constant * j.sigma * math.sqrt(
                              math.log(j.active.n) * _log2n_t(j)) / j.active.n, False),
                      _zero_lhs),
    "sqrt_grid_slow": _Thm("sqrt", _prob_sqrt, _min_lam0_grid,
                           lambda i: _rhs_slow_family(
                               i, lambda j: j.grid_constant * j.sigma / (1.0 - j.eta)
                               * math.sqrt(math.log(j.active.n) * _log2n_t(j)
                                           / (j.active.n * (j.active.n - 1))), True),
                           _zero_lhs),
}


def theorem_kind(theorem_id: str) -> str:
    return THEOREMS[theorem_id].kind


def minimal_tuning(theorem_id: str, inputs: TheoremInputs) -> float:
    """Theorem-minimal lambda (plain ids) or lambda0 (sqrt ids)."""
    thm = THEOREMS.get(theorem_id)
    if thm is None:
        raise ValueError(f"unknown theorem id {theorem_id!r}")
    return thm.min_tuning(inputs)


def lhs_penalty_coefficient(theorem_id: str, inputs: TheoremInputs) -> float:
    """Coefficient of ||D_S f_hat||_1 on the inequality's left-hand side."""
    return THEOREMS[theorem_id].lhs_penalty(inputs)


def oracle_rhs(theorem_id: str, inputs: TheoremInputs) -> OracleRHS:
    """Evaluate one inequality's right-hand side with a term breakdown.

    Raises TheoremHypothesisError naming the violated hypothesis if the
    inputs fall outside the inequality's assumptions.
    """
    thm = THEOREMS.get(theorem_id)
    if thm is None:
        raise ValueError(f"unknown theorem id {theorem_id!r}")
    if thm.check is not None:
        thm.check(inputs)
    value, breakdown = thm.rhs(inputs)
    return OracleRHS(theorem_id=theorem_id, value=float(value),
                     breakdown=breakdown, probability=float(thm.prob(inputs)))
