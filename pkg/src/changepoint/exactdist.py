"""Asymptotic distribution of the centered change-point estimator.

For a mean shift of standardized magnitude ``eta`` in a Gaussian
sequence, the centered maximum-likelihood estimator ``xi = tau_hat - tau``
converges to a proper symmetric integer-valued limit.  Its distribution
is computed here from ladder quantities of the associated negative-drift
random walk:

    b_n  = sf(eta sqrt(n) / 2)                   positivity probability
    b~_n = exp(n eta^2) sf(3 eta sqrt(n) / 2)    tilted positivity weight
    n q_n  = sum_{j<n} b_{n-j}  q_j              survival of first descent
    n q~_n = sum_{j<n} b~_{n-j} q~_j             tilted survival
    1 - ||G+|| = exp(-sum_j b_j / j)             no-ascending-ladder mass

and the point masses

    P(xi = 0)    = (1 - ||G+||)^2
    P(xi = +-k)  = (1 - ||G+||) (q_k - ||G+|| q~_k),   k >= 1.

A caution that the code must live with: the closed form treats the
ultimate maximum of the opposing walk as exactly exponential beyond its
atom at zero, which holds for the continuous-path limit but only
approximately for the discrete walk.  The k >= 1 masses are therefore
slightly inflated and the total mass exceeds one by a small,
eta-dependent excess (about 2.1% at eta = 1, 0.6% at eta = 2, 0.3% at
eta = 2.5).  The excess satisfies the exact identity

    total - 1 = g^2 - 2 g (1 - g) sum_{k>=1} q~_k,     g = ||G+||,

which the test suite pins.  Interval and variance queries use the raw
(unnormalized) masses; the Monte Carlo oracle in ``montecarlo``
quantifies the gap to the true law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, PrecisionError, UnreachableLevelError
from .numerics import log_b_tilde, std_normal_survival

__all__ = [
    "LadderTables",
    "Pmf",
    "build_ladder_tables",
    "build_pmf",
    "cdf",
    "symmetric_interval",
    "variance_closed_form",
    "variance_for",
    "suggested_kmax",
    "tv_bound",
    "write_pmf_csv",
    "read_pmf_csv",
    "pmf_to_json",
]

# Below this eta the series length grows like 8 ln(1/tol) / eta^2 and the
# tables stop being worth building; reject instead of burning cycles.
ETA_GUARD = 0.05

_KMAX_CAP = 100_000


def _check_eta_tol(eta: float, tol: float) -> None:
    if not np.isfinite(eta) or eta < ETA_GUARD:
        raise ConfigurationError(
            f"eta must be >= {ETA_GUARD} (got {eta!r}); smaller changes make the "
            "ladder series impractically long"
        )
    if not (0.0 < tol <= 1e-6):
        raise ConfigurationError(f"tol must be in (0, 1e-6], got {tol!r}")


@dataclass(frozen=True)
class LadderTables:
    """Ladder sequences of the drift -eta^2/2, variance eta^2 walk.

    Index 0 of ``q``/``q_tilde`` holds the convention value 1; index n of
    ``b``/``b_tilde``/``log_b_tilde`` holds the n-th term (index 0 unused,
    set to nan).  ``no_ladder`` is 1 - ||G+|| = P(the walk never enters
    (0, inf)), computed from a series truncated with certified error
    ``truncation_error`` < tol.
    """

    eta: float
    kmax: int
    tol: float
    b: np.ndarray
    b_tilde: np.ndarray
    log_b_tilde: np.ndarray
    q: np.ndarray
    q_tilde: np.ndarray
    no_ladder: float
    truncation_error: float


def build_ladder_tables(eta: float, kmax: int, tol: float = 1e-12) -> LadderTables:
    """Build b, b~, q, q~ up to index ``kmax`` plus the no-ladder mass.

    The convolution recursions are evaluated in the plain probability
    domain (every term is <= 1); only the b~ construction passes through
    logs.  The series for ``no_ladder`` is cut at the first J whose
    analytic tail bound, from sf(x) <= exp(-x^2/2)/2, drops below
    ``tol``.
    """
    _check_eta_tol(eta, tol)
    if kmax < 1:
        raise ConfigurationError(f"kmax must be >= 1, got {kmax}")
    if kmax > _KMAX_CAP:
        raise PrecisionError(f"kmax {kmax} exceeds the cap {_KMAX_CAP}")

    n = np.arange(0, kmax + 1, dtype=float)
    b = np.empty(kmax + 1)
    b[0] = np.nan
    b[1:] = std_normal_survival(eta * np.sqrt(n[1:]) / 2.0)
    lbt = np.empty(kmax + 1)
    lbt[0] = np.nan
    lbt[1:] = log_b_tilde(np.arange(1, kmax + 1), eta)
    bt = np.exp(lbt)
    bt[0] = np.nan

    q = np.empty(kmax + 1)
    qt = np.empty(kmax + 1)
    q[0] = qt[0] = 1.0
    for m in range(1, kmax + 1):
        q[m] = np.dot(b[m:0:-1], q[:m]) / m
        qt[m] = np.dot(bt[m:0:-1], qt[:m]) / m

    no_ladder, trunc = _no_ladder_mass(eta, tol)
    return LadderTables(
        eta=eta, kmax=kmax, tol=tol, b=b, b_tilde=bt, log_b_tilde=lbt,
        q=q, q_tilde=qt, no_ladder=no_ladder, truncation_error=trunc,
    )


def _no_ladder_mass(eta: float, tol: float) -> tuple[float, float]:
    # sum_{j>J} (1/j) sf(eta sqrt(j)/2) <= (1/(2(J+1))) r^(J+1) / (1-r), r = exp(-eta^2/8)
    r = np.exp(-eta * eta / 8.0)
    J = 1
    while (0.5 / (J + 1)) * r ** (J + 1) / (1.0 - r) >= tol:
        J += 1
    j = np.arange(1, J + 1, dtype=float)
    series = float(np.sum(std_normal_survival(eta * np.sqrt(j) / 2.0) / j))
    bound = float((0.5 / (J + 1)) * r ** (J + 1) / (1.0 - r))
    return float(np.exp(-series)), bound


@dataclass(frozen=True)
class Pmf:
    """Symmetric distribution of the centered estimator over k in [-K, K].

    ``probs_half[k]`` stores the mass at +k (= mass at -k); the total over
    both signs plus ``tail_mass_bound`` covers the whole series, up to
    the intrinsic super-unity excess described in the module docstring.
    """

    eta: float
    support_halfwidth: int
    probs_half: np.ndarray
    tail_mass_bound: float
    no_ladder: float
    tol: float

    def prob(self, k: int) -> float:
        """Mass at integer offset k (0 outside the stored support)."""
        k = abs(int(k))
        return float(self.probs_half[k]) if k <= self.support_halfwidth else 0.0

    def total_mass(self) -> float:
        return float(self.probs_half[0] + 2.0 * self.probs_half[1:].sum())

    def as_mapping(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for k in range(-self.support_halfwidth, self.support_halfwidth + 1):
            out[k] = float(self.probs_half[abs(k)])
        return out


def build_pmf(eta: float, tol: float = 1e-10) -> Pmf:
    """Point masses of the limiting centered estimator.

    The support halfwidth K is the first index past which the certified
    series tail, via q_k <= exp(-eta^2 k / 8) / 2, is below ``tol``; the
    accumulated mass is then >= 1 - tol.  ``tail_mass_bound`` records
    that certified bound on the discarded terms.
    """
    _check_eta_tol(eta, tol)
    r = np.exp(-eta * eta / 8.0)
    kmax = max(8, int(np.ceil(8.0 / (eta * eta) * np.log(2.0 / (tol * (1.0 - r))))))
    while True:
        if kmax > _KMAX_CAP:
            raise PrecisionError(
                f"support for eta={eta} at tol={tol} exceeds the {_KMAX_CAP} cap"
            )
        tables = build_ladder_tables(eta, kmax, tol=min(tol, 1e-12))
        g0 = tables.no_ladder
        g = 1.0 - g0
        half = np.empty(kmax + 1)
        half[0] = g0 * g0
        half[1:] = g0 * (tables.q[1:] - g * tables.q_tilde[1:])
        # certified bound on sum_{k>K} 2 g0 (q_k - g q~_k) <= g0 r^(K+1)/(1-r)
        tail = g0 * r ** (kmax + 1) / (1.0 - r)
        if tail < tol:
            break
        kmax *= 2
    K = kmax
    # trim trailing entries that no longer contribute at the requested tol
    while K > 1 and half[K] <= 0.0:
        K -= 1
    half = half[: K + 1].copy()
    half.setflags(write=False)
    return Pmf(
        eta=eta, support_halfwidth=K, probs_half=half,
        tail_mass_bound=float(g0 * r ** (K + 1) / (1.0 - r)),
        no_ladder=g0, tol=tol,
    )


def cdf(pmf: Pmf, k: int) -> float:
    """P(xi <= k), clamped to [0, 1].

    Below the stored support this returns 0.0 (the true mass out there is
    within ``tail_mass_bound``); at or above the upper edge it returns at
    least 1 - tail_mass_bound.
    """
    K = pmf.support_halfwidth
    k = int(k)
    if k < -K:
        return 0.0
    half = pmf.probs_half
    if k >= K:
        val = half[0] + 2.0 * half[1:].sum()
    elif k < 0:
        val = half[-k:].sum()
    else:
        val = half[1:].sum() + half[0] + half[1 : k + 1].sum()
    return float(min(1.0, max(0.0, val)))


def symmetric_interval(pmf: Pmf, level: float) -> int:
    """Smallest halfwidth m with sum_{|k| <= m} P(xi = k) >= level."""
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must be in (0, 1), got {level!r}")
    acc = float(pmf.probs_half[0])
    if acc >= level:
        return 0
    for m in range(1, pmf.support_halfwidth + 1):
        acc += 2.0 * float(pmf.probs_half[m])
        if acc >= level:
            return m
    raise UnreachableLevelError(
        f"level {level} unreachable: accumulated {acc:.12f} with tail bound "
        f"{pmf.tail_mass_bound:.3e}"
    )


def variance_closed_form(tables: LadderTables) -> float:
    """Variance of the limiting offset from the generating-function series.

    Uses B(1) = sum b_n / n, B'(1) = sum b_n, B''(1) = sum n b_n and the
    tilde analogues:

        Var = 2 {B'' + B'^2} - 2 exp(-B + B~) (1 - exp(-B)) {B~'' + B~'^2}

    which equals the second moment of the mass series in ``build_pmf``
    exactly (same approximation, same total).  Requires ``kmax`` large
    enough that the n b_n tail bound is below the tables' tol.
    """
    eta, kmax, tol = tables.eta, tables.kmax, tables.tol
    r = np.exp(-eta * eta / 8.0)
    # sum_{n>N} n b_n <= (1/2) r^(N+1) ((N+1)(1-r) + r) / (1-r)^2
    tail = 0.5 * r ** (kmax + 1) * ((kmax + 1) * (1.0 - r) + r) / (1.0 - r) ** 2
    if tail >= tol:
        raise PrecisionError(
            f"kmax={kmax} leaves an n*b_n tail bound {tail:.3e} >= tol {tol:.3e}; "
            "rebuild the tables with a larger kmax"
        )
    n = np.arange(1, kmax + 1, dtype=float)
    b = tables.b[1:]
    bt = tables.b_tilde[1:]
    B = float(np.sum(b / n))
    Bp = float(np.sum(b))
    Bpp = float(np.sum(n * b))
    Bt = float(np.sum(bt / n))
    Btp = float(np.sum(bt))
    Btpp = float(np.sum(n * bt))
    var = 2.0 * (Bpp + Bp * Bp) - 2.0 * np.exp(-B + Bt) * (1.0 - np.exp(-B)) * (Btpp + Btp * Btp)
    return float(var)


def suggested_kmax(eta: float, tol: float = 1e-12) -> int:
    """Table length at which the n b_n series tail is certifiably < tol.

    Sufficient for every consumer here: the variance series is the
    slowest-converging quantity built from the tables.
    """
    _check_eta_tol(eta, min(tol, 1e-6))
    r = np.exp(-eta * eta / 8.0)
    k = 8
    while 0.5 * r ** (k + 1) * ((k + 1) * (1.0 - r) + r) / (1.0 - r) ** 2 >= tol:
        k = k + max(8, k // 2)
        if k > _KMAX_CAP:
            raise PrecisionError(f"kmax for eta={eta}, tol={tol} exceeds the {_KMAX_CAP} cap")
    return k


def variance_for(eta: float, tol: float = 1e-12) -> float:
    """Closed-form variance with automatically sized tables."""
    return variance_closed_form(build_ladder_tables(eta, suggested_kmax(eta, tol), tol=tol))


def tv_bound(eta: float, n: int, tau: int) -> float:
    """Finite-sample total variation bound, capped at 1.

    4 max{exp(-eta^2 tau / 8), exp(-eta^2 (n - tau) / 8)}: the geometric
    convergence rate of the finite-sample offset law to its limit.
    """
    if not (1 <= tau <= n - 1):
        raise DomainError(f"tau must be in [1, n-1], got tau={tau}, n={n}")
    if not np.isfinite(eta) or eta <= 0:
        raise DomainError(f"eta must be positive, got {eta!r}")
    val = 4.0 * max(np.exp(-eta * eta * tau / 8.0), np.exp(-eta * eta * (n - tau) / 8.0))
    return float(min(1.0, val))


# --- serialization -------------------------------------------------------

def _fmt(x: float) -> str:
    # 17 significant digits: lossless float64 round trip
    return format(float(x), ".17g")


def write_pmf_csv(pmf: Pmf, path) -> None:
    """Write `k,prob` rows with k ascending, 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,prob\n")
        for k in range(-pmf.support_halfwidth, pmf.support_halfwidth + 1):
            fh.write(f"{k},{_fmt(pmf.probs_half[abs(k)])}\n")


def read_pmf_csv(path) -> dict[int, float]:
    """Read a `k,prob` file back into an offset -> mass mapping."""
    out: dict[int, float] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "k,prob":
            raise DomainError(f"expected header 'k,prob', got {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            kstr, pstr = line.split(",")
            out[int(kstr)] = float(pstr)
    return out


def pmf_to_json(pmf: Pmf) -> str:
    """JSON object {eta, K, tail_mass_bound, probs: [...]}, k ascending.

    Floats carry 17 significant digits, enough for a lossless round
    trip.
    """
    K = pmf.support_halfwidth
    probs = ", ".join(_fmt(pmf.probs_half[abs(k)]) for k in range(-K, K + 1))
    return (
        f'{{"eta": {_fmt(pmf.eta)}, "K": {K}, '
        f'"tail_mass_bound": {_fmt(pmf.tail_mass_bound)}, "probs": [{probs}]}}'
    )
