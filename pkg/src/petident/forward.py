"""Forward measurement operator, its analytic Jacobian, the admissible-domain
projection, and the codec between structured parameters and the flat vector
the solver works on.

The unknown vector is laid out as

    x = (lambda_1..lambda_p, mu_1..mu_p, m_1..m_qhat, K1^1,k2^1,k3^1, ...,
         K1^n,k2^n,k3^n)

and maps to the measurement vector ``y = (F1(x), F2(x))``:

* ``F1``: the tissue concentration of every region at every tissue time
  point (regions are the slow index), computed from the closed-form solution
  of the compartment system driven by ``C_art(t) = sum_j lambda_j e^(mu_j t)``.
* ``F2``: the blood-data coupling at the blood sample times ``s_l``.  In
  ``full`` mode ``F2_l = C_bl(s_l) * f_m(s_l) - C_art(s_l)`` with measured
  total blood values ``C_bl``; in ``known_cart`` mode the blood values are
  direct measurements of ``C_art`` and ``F2_l = C_art_meas(s_l) - C_art(s_l)``
  (the plasma parameters ``m`` stay in the vector but do not enter).

All entries and all partial derivatives are closed-form expressions in
exponentials, ``psi0(z,t) = (e^(zt)-1)/z`` and its derivative, so the
Jacobian is exact up to rounding and continuous across the resonant
configurations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .kinetics import DomainError, KineticParams, _psi0, _psi0_dz
from .plasma import get_family

MODES = ("full", "known_cart")

#: Lower bound kept on every kinetic rate by the domain projection.
DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class ParamLayout:
    """Block sizes of the flat parameter vector."""

    p: int
    q_hat: int
    n: int

    @property
    def dim(self) -> int:
        return 2 * self.p + self.q_hat + 3 * self.n

    def kinetic_slice(self) -> slice:
        return slice(2 * self.p + self.q_hat, self.dim)

    def m_slice(self) -> slice:
        return slice(2 * self.p, 2 * self.p + self.q_hat)


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector plus its layout descriptor."""

    flat: np.ndarray
    layout: ParamLayout

    def __init__(self, flat, layout: ParamLayout):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (layout.dim,):
            raise ValueError(
                f"flat vector has length {flat.shape}, layout requires {layout.dim}"
            )
        object.__setattr__(self, "flat", flat.copy())
        object.__setattr__(self, "layout", layout)

    @property
    def lam(self) -> np.ndarray:
        return self.flat[: self.layout.p]

    @property
    def mu(self) -> np.ndarray:
        return self.flat[self.layout.p : 2 * self.layout.p]

    @property
    def m(self) -> np.ndarray:
        return self.flat[self.layout.m_slice()]

    @property
    def kinetic_block(self) -> np.ndarray:
        """Per-region rates as an (n, 3) array of rows (K1, k2, k3)."""
        return self.flat[self.layout.kinetic_slice()].reshape(self.layout.n, 3)

    @property
    def kinetics(self) -> tuple[KineticParams, ...]:
        return tuple(KineticParams(*row) for row in self.kinetic_block)


def pack(lam, mu, m, kinetics: Sequence[KineticParams]) -> ParamVector:
    """Assemble the flat vector from structured blocks."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    m = np.asarray(m, dtype=float)
    if lam.shape != mu.shape or lam.ndim != 1:
        raise ValueError("lambda and mu must be 1-d arrays of equal length")
    layout = ParamLayout(p=lam.size, q_hat=m.size, n=len(kinetics))
    kin = np.array([[k.K1, k.k2, k.k3] for k in kinetics], dtype=float)
    flat = np.concatenate([lam, mu, m, kin.ravel()])
    return ParamVector(flat, layout)


def unpack(x: ParamVector):
    """Inverse of :func:`pack`: ``(lambda, mu, m, [KineticParams, ...])``."""
    return x.lam.copy(), x.mu.copy(), x.m.copy(), list(x.kinetics)


@dataclass(frozen=True)
class MeasurementSet:
    """Measurement grids, blood data and (optionally) measured blocks.

    With ``c_tis_block``/``f2_block`` unset this acts as the template that
    defines the forward operator (grids, blood values, mode, plasma family);
    filled instances additionally carry data.  ``flat()`` concatenates the
    row-major tissue block and the blood block into the solver's data vector.
    """

    t_grid: np.ndarray
    s_grid: np.ndarray
    c_bl_values: np.ndarray
    mode: str = "full"
    plasma_model: str = "biexp"
    c_tis_block: np.ndarray | None = None
    f2_block: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        object.__setattr__(self, "t_grid", np.asarray(self.t_grid, dtype=float))
        object.__setattr__(self, "s_grid", np.asarray(self.s_grid, dtype=float))
        object.__setattr__(
            self, "c_bl_values", np.asarray(self.c_bl_values, dtype=float)
        )
        if self.c_bl_values.shape != self.s_grid.shape:
            raise ValueError("c_bl_values and s_grid must have equal length")

    @property
    def n_times(self) -> int:
        return self.t_grid.size

    @property
    def q(self) -> int:
        return self.s_grid.size

    def flat(self) -> np.ndarray:
        if self.c_tis_block is None or self.f2_block is None:
            raise ValueError("measurement blocks are not filled")
        return np.concatenate([np.ravel(self.c_tis_block), self.f2_block])

    def with_blocks(self, c_tis_block, f2_block) -> "MeasurementSet":
        return replace(
            self,
            c_tis_block=np.asarray(c_tis_block, dtype=float),
            f2_block=np.asarray(f2_block, dtype=float),
        )


def _region_psis(mu, beta, t):
    """Shared per-region intermediates over exponents x times."""
    eb = np.exp(-beta * t)
    psi0 = _psi0(mu[:, None], t[None, :])
    psi1 = eb[None, :] * _psi0((beta + mu)[:, None], t[None, :])
    return eb, psi0, psi1


def _check_kinetics(kin_block):
    beta = kin_block[:, 1] + kin_block[:, 2]
    if np.any(beta <= 0.0):
        bad = int(np.argmax(beta <= 0.0))
        raise DomainError(
            f"k2 + k3 must be positive in every region (region {bad}: {beta[bad]})"
        )


@np.errstate(over="ignore", invalid="ignore")
def forward_vector(x: ParamVector, template: MeasurementSet) -> np.ndarray:
    """Flat forward value ``(F1(x), F2(x))`` of length ``n*T + q``."""
    lam, mu = x.lam, x.mu
    kin = x.kinetic_block
    _check_kinetics(kin)
    t = template.t_grid
    s = template.s_grid

    blocks = np.empty((x.layout.n, t.size))
    for i, (K1, k2, k3) in enumerate(kin):
        beta = k2 + k3
        g1 = K1 * k3 / beta
        g2 = K1 * k2 / beta
        _, psi0, psi1 = _region_psis(mu, beta, t)
        blocks[i] = lam @ (g1 * psi0 + g2 * psi1)

    c_art_s = lam @ np.exp(np.outer(mu, s)) if x.layout.p else np.zeros_like(s)
    if template.mode == "full":
        fam = get_family(template.plasma_model)
        f2 = template.c_bl_values * fam.value(x.m, s) - c_art_s
    else:
        f2 = template.c_bl_values - c_art_s
    return np.concatenate([blocks.ravel(), f2])


def apply_forward(x: ParamVector, template: MeasurementSet) -> MeasurementSet:
    """Evaluate the forward operator, returning a filled measurement set."""
    y = forward_vector(x, template)
    nT = x.layout.n * template.n_times
    return template.with_blocks(
        y[:nT].reshape(x.layout.n, template.n_times), y[nT:]
    )


@np.errstate(over="ignore", invalid="ignore")
def jacobian(
    x: ParamVector, template: MeasurementSet, with_value: bool = False
):
    """Analytic Jacobian of the flat forward map, shape ``(n*T + q, dim)``.

    With ``with_value=True`` also returns the forward vector computed from
    the same intermediates.  Blood rows have zero derivatives with respect
    to every kinetic rate; in ``known_cart`` mode the plasma columns vanish
    as well.
    """
    layout = x.layout
    p, q_hat, n = layout.p, layout.q_hat, layout.n
    lam, mu = x.lam, x.mu
    kin = x.kinetic_block
    _check_kinetics(kin)
    t = template.t_grid
    s = template.s_grid
    T = t.size
    q = s.size

    J = np.zeros((n * T + q, layout.dim))
    value = np.empty(n * T + q) if with_value else None

    dpsi0 = _psi0_dz(mu[:, None], t[None, :])
    for i, (K1, k2, k3) in enumerate(kin):
        beta = k2 + k3
        g1 = K1 * k3 / beta
        g2 = K1 * k2 / beta
        eb, psi0, psi1 = _region_psis(mu, beta, t)
        dpsid = _psi0_dz((beta + mu)[:, None], t[None, :])
        dpsi1_dbeta = -t[None, :] * psi1 + eb[None, :] * dpsid

        rows = slice(i * T, (i + 1) * T)
        w = g1 * psi0 + g2 * psi1
        J[rows, :p] = w.T
        J[rows, p : 2 * p] = (lam[:, None] * (g1 * dpsi0 + g2 * eb[None, :] * dpsid)).T
        col = 2 * p + q_hat + 3 * i
        J[rows, col] = lam @ ((k3 / beta) * psi0 + (k2 / beta) * psi1)
        shared = g2 * (lam @ dpsi1_dbeta)
        J[rows, col + 1] = (g1 / beta) * (lam @ (psi1 - psi0)) + shared
        J[rows, col + 2] = (g2 / beta) * (lam @ (psi0 - psi1)) + shared
        if with_value:
            value[rows] = lam @ w

    es = np.exp(np.outer(mu, s))
    rows = slice(n * T, n * T + q)
    J[rows, :p] = -es.T
    J[rows, p : 2 * p] = -(lam[:, None] * s[None, :] * es).T
    if template.mode == "full":
        fam = get_family(template.plasma_model)
        J[rows, layout.m_slice()] = template.c_bl_values[:, None] * fam.param_jacobian(
            x.m, s
        )
        if with_value:
            value[rows] = template.c_bl_values * fam.value(x.m, s) - lam @ es
    elif with_value:
        value[rows] = template.c_bl_values - lam @ es

    if with_value:
        return J, value
    return J


def project_to_domain(x: ParamVector, eps: float = DEFAULT_EPSILON,
                      plasma_model: str = "biexp") -> ParamVector:
    """Euclidean projection onto the admissible box: kinetic rates clamped to
    ``[eps, inf)``, plasma parameters onto their family's set, arterial
    weights and exponents left free.  Idempotent and nonexpansive."""
    flat = x.flat.copy()
    ks = x.layout.kinetic_slice()
    flat[ks] = np.maximum(flat[ks], eps)
    if x.layout.q_hat:
        flat[x.layout.m_slice()] = get_family(plasma_model).project(x.m)
    return ParamVector(flat, x.layout)


@np.errstate(over="ignore", invalid="ignore")
def _forward_scale(x: ParamVector, template: MeasurementSet) -> np.ndarray:
    """Magnitude of the intermediate sums behind every forward entry
    (the forward map with all additive pieces replaced by absolute values).
    Rounding in the forward value is proportional to this, not to the
    possibly cancellation-small value itself."""
    lam, mu = np.abs(x.lam), x.mu
    kin = x.kinetic_block
    t = template.t_grid
    s = template.s_grid
    scale = np.empty(x.layout.n * t.size + s.size)
    for i, (K1, k2, k3) in enumerate(kin):
        beta = k2 + k3
        g1 = abs(K1 * k3 / beta)
        g2 = abs(K1 * k2 / beta)
        _, psi0, psi1 = _region_psis(mu, beta, t)
        scale[i * t.size : (i + 1) * t.size] = lam @ np.abs(g1 * psi0 + g2 * psi1)
    art = lam @ np.exp(np.outer(mu, s)) if x.layout.p else np.zeros_like(s)
    blood = np.abs(template.c_bl_values)
    if template.mode == "full":
        blood = blood * get_family(template.plasma_model).magnitude(x.m, s)
    scale[x.layout.n * t.size :] = blood + art
    return scale


@dataclass(frozen=True)
class JacobianCheck:
    """Result of :func:`finite_difference_check`.

    ``max_rel_dev`` is the largest relative deviation over entries that the
    difference quotient can resolve; ``n_noise_limited`` counts entries whose
    magnitude sits below the roundoff floor of the quotient (those cannot be
    certified by finite differences at the given step and are compared
    against the floor instead).
    """

    max_rel_dev: float
    worst_entry: tuple[int, int]
    n_checked: int
    n_noise_limited: int
    passed: bool


def finite_difference_check(
    x: ParamVector,
    template: MeasurementSet,
    step_scale: float = 1e-6,
    rtol: float = 1e-5,
    magnitude_floor: float = 1e-8,
    corrupt_entry: tuple[int, int, float] | None = None,
) -> JacobianCheck:
    """Compare the analytic Jacobian against central finite differences.

    Entries with magnitude above ``magnitude_floor`` must agree to ``rtol``
    relative, up to the per-entry roundoff floor of the central quotient
    (``~32 eps (|F(x+h)| + |F(x-h)|) / 2h``); in double precision the
    quotient carries that much noise regardless of the Jacobian's quality,
    so smaller deviations on tiny entries are not evidence of error.

    ``corrupt_entry = (row, col, amount)`` perturbs the analytic Jacobian
    before comparison; used to verify that the check has teeth.
    """
    J = jacobian(x, template)
    if corrupt_entry is not None:
        row, col, amount = corrupt_entry
        J = J.copy()
        J[row, col] += amount
    dim = x.layout.dim
    scale = _forward_scale(x, template)
    eps_machine = np.finfo(float).eps
    max_rel = 0.0
    worst = (0, 0)
    n_checked = 0
    n_noise = 0
    passed = True
    for i in range(dim):
        h = step_scale * (1.0 + abs(x.flat[i]))
        xp = x.flat.copy()
        xm = x.flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = forward_vector(ParamVector(xp, x.layout), template)
        fm = forward_vector(ParamVector(xm, x.layout), template)
        quotient = (fp - fm) / (2.0 * h)
        noise = 32.0 * eps_machine * scale / (2.0 * h)
        deviation = np.abs(J[:, i] - quotient)
        consider = np.abs(quotient) > magnitude_floor
        resolvable = consider & (rtol * np.abs(quotient) > noise)
        n_checked += int(np.count_nonzero(resolvable))
        n_noise += int(np.count_nonzero(consider & ~resolvable))
        if np.any(consider & ~resolvable & (deviation > noise + rtol * np.abs(quotient))):
            passed = False
        if np.any(resolvable):
            denom = np.where(resolvable, np.abs(quotient), 1.0)
            rel = np.where(resolvable, deviation / denom, 0.0)
            row = int(np.argmax(rel))
            if rel[row] > max_rel:
                max_rel = float(rel[row])
                worst = (row, i)
    if max_rel > rtol:
        passed = False
    return JacobianCheck(
        max_rel_dev=max_rel,
        worst_entry=worst,
        n_checked=n_checked,
        n_noise_limited=n_noise,
        passed=passed,
    )


def tikhonov_objective(
    x: ParamVector, x_bar: ParamVector, y_delta: MeasurementSet, alpha: float
) -> float:
    """Penalized misfit ``|F(x) - y|^2 + alpha * |x - x_bar|^2``.

    The parameter-space norm is the Euclidean norm of the flat vector (all
    blocks weighted equally).
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    residual = forward_vector(x, y_delta) - y_delta.flat()
    penalty = x.flat - x_bar.flat
    return float(residual @ residual + alpha * (penalty @ penalty))
