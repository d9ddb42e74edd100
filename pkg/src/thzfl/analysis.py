"""Closed-form error terms, bounds, and design inequalities.

The functions here evaluate the multicarrier channel penalty, the local
update energy bound, the per-client communication error bound, the
asymptotic bias floor of weighted aggregation, and the stability
inequalities that tie the physical parameters to a target accuracy.

Convention for the penalty/design interfaces: gains are the normalized
array gains (peak 1), and the per-subcarrier additive noise variance is
the inverse of the squint-free reference SNR, so the noise-amplification
term diverges as 1/gain^2 at spectral holes.  :func:`penalty_inputs` builds
these inputs from raw link statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AnalysisConstants:
    """Coefficients for the bound evaluations.

    a1/a2/a3 are the local-energy bound coefficients; c0..c3 are the
    unspecified absolute constants of the convergence bound, exposed as
    knobs with default 1.  smoothness (L), heterogeneity (G), sgd_noise
    (sigma), and objective_gap (f(w0) - f*) describe the learning problem
    and can be estimated empirically via the ``estimate_*`` helpers.
    """

    a1: float = 8.0
    a2: float = 2.0
    a3: float = 8.0
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    smoothness: float = 1.0
    heterogeneity: float = 0.0
    sgd_noise: float = 0.0
    objective_gap: float = 1.0

    def as_dict(self) -> dict:
        return {
            "a1": self.a1, "a2": self.a2, "a3": self.a3,
            "c0": self.c0, "c1": self.c1, "c2": self.c2, "c3": self.c3,
            "smoothness": self.smoothness,
            "heterogeneity": self.heterogeneity,
            "sgd_noise": self.sgd_noise,
            "objective_gap": self.objective_gap,
        }


def local_energy_bound(grad_norm_sq: float, constants: AnalysisConstants,
                       lr_local: float, steps: int) -> float:
    """Upper bound on the expected squared norm of a local update.

    a1 eta^2 K^2 |grad|^2 + a2 eta^2 K sigma^2 + a3 eta^2 K^2 G^2.
    """
    if grad_norm_sq < 0 or lr_local < 0 or steps < 0:
        raise ValueError("inputs must be nonnegative")
    eta_sq = lr_local * lr_local
    k = float(steps)
    return (constants.a1 * eta_sq * k * k * grad_norm_sq
            + constants.a2 * eta_sq * k * constants.sgd_noise ** 2
            + constants.a3 * eta_sq * k * k * constants.heterogeneity ** 2)


@dataclass(frozen=True)
class PenaltyReport:
    """Breakdown of the multicarrier channel penalty."""

    additive: float
    multiplicative: float
    excluded_count: int
    divergent: bool

    @property
    def total(self) -> float:
        return self.additive + self.multiplicative


def thz_penalty(noise_vars: np.ndarray, mean_gains: np.ndarray,
                mult_vars: np.ndarray, omega_mean: float,
                constants: AnalysisConstants, lr_local: float, steps: int,
                m: int, excluded: np.ndarray | None = None) -> PenaltyReport:
    """Multicarrier channel penalty of the convergence bound.

    (1/m) [ sum_n sigma_eps_n^2 / mu_bar_n^2
            + mean_n(sigma_H_n^2 + omega) (a2 eta^2 K sigma^2 + a3 eta^2 K^2 G^2) ]

    ``mean_gains`` are the cross-client average gains; subcarriers flagged in
    ``excluded`` are omitted from the additive sum (the count is reported).
    The report is marked divergent if any included gain is zero.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    noise_vars = np.asarray(noise_vars, dtype=float)
    mean_gains = np.asarray(mean_gains, dtype=float)
    mult_vars = np.asarray(mult_vars, dtype=float)
    if excluded is None:
        excluded = np.zeros(noise_vars.shape, dtype=bool)
    include = ~np.asarray(excluded, dtype=bool)
    divergent = bool(np.any(mean_gains[include] == 0.0))
    with np.errstate(divide="ignore"):
        ratios = np.where(mean_gains > 0,
                          noise_vars / np.square(mean_gains), np.inf)
    additive = float(np.sum(ratios[include])) / m
    eta_sq = lr_local * lr_local
    k = float(steps)
    inflation = (constants.a2 * eta_sq * k * constants.sgd_noise ** 2
                 + constants.a3 * eta_sq * k * k * constants.heterogeneity ** 2)
    multiplicative = float(np.mean(mult_vars + omega_mean)) * inflation / m
    return PenaltyReport(additive=additive, multiplicative=multiplicative,
                         excluded_count=int(np.count_nonzero(excluded)),
                         divergent=divergent)


def penalty_inputs(stats_list) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized-frame penalty inputs from per-client link statistics.

    Returns (sigma_eps_sq, mu_bar, sigma_h_sq): the cross-client mean inverse
    squint-free SNR, the cross-client mean normalized array gain, and the
    cross-client mean multiplicative variance.
    """
    squint = np.stack([s.squint_gains for s in stats_list])
    snr = np.stack([s.snr for s in stats_list])
    jitter = np.stack([s.jitter_vars for s in stats_list])
    with np.errstate(divide="ignore", invalid="ignore"):
        snr_ref = np.where(squint > 0, snr / squint, 0.0)
        inv = np.where(snr_ref > 0, 1.0 / snr_ref, np.inf)
    return inv.mean(axis=0), squint.mean(axis=0), jitter.mean(axis=0)


def comm_variance_bound(update_energy: float, stats, omega: float,
                        d_bar: float) -> float:
    """Closed-form bound on one client's expected communication error energy.

    sum_n [ (1 - d)^2 E_n + d ((sigma_H_n^2 + omega) E_n + sigma_eps_n^2 / mu_n^2) ]

    with E_n = update_energy / N_c under interleaving.  In normalized update
    units the compensated additive noise energy per block is
    ``stats.noise_vars[n] * E_n`` (transmit power is normalized per block).
    """
    if not 0.0 <= d_bar <= 1.0:
        raise ValueError("d_bar must be in [0, 1]")
    n = stats.n_subcarriers
    e_block = update_energy / n
    bias = (1.0 - d_bar) ** 2 * e_block * n
    delivered = d_bar * float(np.sum(
        (stats.jitter_vars + omega) * e_block + stats.noise_vars * e_block))
    return bias + delivered


def harmonic_mean_snr(snr: np.ndarray) -> float:
    """Harmonic mean of per-subcarrier SNRs; 0 signals a collapse."""
    snr = np.asarray(snr, dtype=float)
    if snr.size == 0:
        raise ValueError("snr vector must be non-empty")
    if np.any(snr <= 0):
        return 0.0
    return snr.size / float(np.sum(1.0 / snr))


def bias_floor(normalized_weights: np.ndarray, heterogeneity: float) -> float:
    """Asymptotic objective bias of weighted aggregation.

    sum_i |alpha_bar_i - 1/N|^2 G^2 for normalized client weights alpha_bar.
    """
    w = np.asarray(normalized_weights, dtype=float)
    if not math.isclose(float(w.sum()), 1.0, rel_tol=1e-6, abs_tol=1e-9):
        raise ValueError("weights must sum to 1")
    return float(np.sum((w - 1.0 / w.size) ** 2)) * heterogeneity ** 2


def quantization_budget(mean_mult_var: float, constants: AnalysisConstants,
                        lr_local: float, steps: int, m: int,
                        d_sub: int) -> int | None:
    """Smallest uniform bit width satisfying the stability budget.

    Requires d_sub / 2^(2b) <= m / (4 L a1 eta^2 K^2) - mean sigma_H^2;
    returns None when the jitter alone exceeds the budget.
    """
    denom = 4.0 * constants.smoothness * constants.a1 * lr_local ** 2 * steps ** 2
    if denom <= 0:
        return 1
    budget = m / denom - mean_mult_var
    if budget <= 0:
        return None
    bits = 1
    while d_sub / 2.0 ** (2 * bits) > budget:
        bits += 1
        if bits > 64:
            return None
    return bits


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float
    informational: bool = False

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs

    @property
    def slack(self) -> float:
        if self.rhs == 0:
            return math.inf if self.lhs > 0 else 0.0
        return self.lhs / self.rhs


@dataclass
class DesignSchedule:
    """Round budget and stepsizes the design inequalities are checked for."""

    rounds: int
    local_steps: int
    clients: int
    server_lr: float
    lr_local: float
    eps_target: float = 0.1
    d_sub: int = 1
    kappa: float | None = None  # None -> d_sub (makes sigma_eps^2 = 1/SNR)


@dataclass
class DesignReport:
    checks: list[InequalityCheck]
    constants: dict
    schedule: dict

    @property
    def feasible(self) -> bool:
        return all(c.satisfied for c in self.checks if not c.informational)

    def to_json_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "constants": self.constants,
            "schedule": self.schedule,
            "checks": [
                {
                    "name": c.name,
                    "lhs": c.lhs,
                    "rhs": c.rhs,
                    "satisfied": c.satisfied,
                    "slack": c.slack,
                    "informational": c.informational,
                }
                for c in self.checks
            ],
        }

    def to_text(self) -> str:
        lines = ["design report (assumed constants: "
                 + json.dumps(self.constants, sort_keys=True) + ")"]
        for c in self.checks:
            tag = "OK " if c.satisfied else "VIOLATED"
            note = " [info]" if c.informational else ""
            lines.append(
                f"  {tag} {c.name}{note}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} "
                f"slack={c.slack:.6g}")
        lines.append("  feasible: %s" % ("yes" if self.feasible else "no"))
        return "\n".join(lines)


def check_design(sigma_eps_sq: np.ndarray, mu_bar: np.ndarray,
                 sigma_h_sq: np.ndarray, omega: np.ndarray | float,
                 constants: AnalysisConstants,
                 schedule: DesignSchedule) -> DesignReport:
    """Evaluate the multicarrier stability conditions for one configuration.

    Checks, in order: the integrated inverse-gain noise budget, the average
    multiplicative stability budget, the descent-absorption condition, and
    the three standard FL round-budget conditions.  The closed-form SNR
    budget (the first condition re-expressed through the reference SNR) is
    appended as an informational row.
    """
    sigma_eps_sq = np.asarray(sigma_eps_sq, dtype=float)
    mu_bar = np.asarray(mu_bar, dtype=float)
    sigma_h_sq = np.asarray(sigma_h_sq, dtype=float)
    omega_vec = np.broadcast_to(np.asarray(omega, dtype=float), sigma_eps_sq.shape)

    t = float(schedule.rounds)
    k = float(schedule.local_steps)
    m = float(schedule.clients)
    eps = schedule.eps_target
    alpha = schedule.server_lr * math.sqrt(t)
    beta = schedule.lr_local * math.sqrt(k)
    cst = constants
    c_opt = 2.0 * cst.objective_gap / (alpha * beta * cst.c0 * math.sqrt(k))
    c_sgd = cst.c1 * alpha * cst.smoothness / m
    c_thz = cst.c2 * alpha * cst.smoothness
    c_het = cst.c3 * alpha ** 2 * cst.smoothness ** 2 * k

    with np.errstate(divide="ignore"):
        inv_gain_sq = np.where(mu_bar > 0,
                               sigma_eps_sq / np.square(mu_bar), np.inf)
    lhs_snr = float(np.sum(inv_gain_sq)) / m
    rhs_snr = eps * math.sqrt(t) / (4.0 * c_thz)

    mean_mult = float(np.mean(sigma_h_sq + omega_vec))
    eta_sq = schedule.lr_local ** 2
    inflation = (cst.a2 * eta_sq * k * cst.sgd_noise ** 2
                 + cst.a3 * eta_sq * k * k * cst.heterogeneity ** 2)
    lhs_stab = mean_mult * inflation / m
    rhs_stab = eps * math.sqrt(t) / (8.0 * c_thz)

    lhs_absorb = mean_mult * cst.a1 * eta_sq * k * k / m
    rhs_absorb = 1.0 / (4.0 * cst.smoothness)

    checks = [
        InequalityCheck("total_snr_additive_noise", lhs_snr, rhs_snr),
        InequalityCheck("average_stability", lhs_stab, rhs_stab),
        InequalityCheck("descent_absorption", lhs_absorb, rhs_absorb),
        InequalityCheck("fl_optimization", c_opt / math.sqrt(t), eps / 4.0),
        InequalityCheck("fl_gradient_noise",
                        c_sgd * cst.sgd_noise ** 2 / math.sqrt(t), eps / 4.0),
        InequalityCheck("fl_heterogeneity",
                        c_het * cst.heterogeneity ** 2 / t, eps / 4.0),
    ]

    kappa = schedule.kappa if schedule.kappa is not None else float(schedule.d_sub)
    ratio = kappa / float(schedule.d_sub)
    checks.append(InequalityCheck(
        "snr_budget_closed_form",
        float(np.sum(inv_gain_sq)) * ratio,
        m * eps * math.sqrt(t) * ratio / (4.0 * c_thz),
        informational=True,
    ))

    return DesignReport(
        checks=checks,
        constants=cst.as_dict(),
        schedule={
            "rounds": schedule.rounds,
            "local_steps": schedule.local_steps,
            "clients": schedule.clients,
            "server_lr": schedule.server_lr,
            "lr_local": schedule.lr_local,
            "eps_target": schedule.eps_target,
            "d_sub": schedule.d_sub,
            "kappa": kappa,
        },
    )


def estimate_heterogeneity(model, w: np.ndarray, client_data) -> float:
    """Max pairwise client-gradient deviation at the given weights."""
    grads = [model.loss_and_grad(w, x, y)[1] for x, y in client_data]
    worst = 0.0
    for i in range(len(grads)):
        for j in range(i + 1, len(grads)):
            worst = max(worst, float(np.linalg.norm(grads[i] - grads[j])))
    return worst


def estimate_smoothness(model, w: np.ndarray, features: np.ndarray,
                        labels: np.ndarray, iters: int = 15,
                        fd_step: float = 1e-4,
                        rng: np.random.Generator | None = None) -> float:
    """Largest Hessian eigenvalue estimate via finite-difference power iteration."""
    rng = rng or np.random.default_rng(0)
    v = rng.standard_normal(w.shape[0])
    v /= np.linalg.norm(v)
    norm = 0.0
    for _ in range(iters):
        _, g_plus = model.loss_and_grad(w + fd_step * v, features, labels)
        _, g_minus = model.loss_and_grad(w - fd_step * v, features, labels)
        hv = (g_plus - g_minus) / (2.0 * fd_step)
        norm = float(np.linalg.norm(hv))
        if norm == 0.0:
            return 0.0
        v = hv / norm
    return norm


def estimate_gradient_noise(model, w: np.ndarray, features: np.ndarray,
                            labels: np.ndarray, batch_size: int,
                            rng: np.random.Generator,
                            n_probes: int = 16) -> float:
    """Std of minibatch gradients around the full-shard gradient."""
    _, full = model.loss_and_grad(w, features, labels)
    total = 0.0
    n = features.shape[0]
    for _ in range(n_probes):
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        _, g = model.loss_and_grad(w, features[idx], labels[idx])
        total += float(np.sum((g - full) ** 2))
    return math.sqrt(total / n_probes)
