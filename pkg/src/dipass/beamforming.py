"""Digital precoding on the effective M x N channel and rate metrics."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from dipass.channel import waveguide_selector

SERVED_THRESHOLD = 1e-3
COND_LIMIT = 1e10


@dataclass
class Precoder:
    """Unit-trace precoding matrix W (N x M)."""

    W: np.ndarray
    method: str
    iterations: int = 0
    converged: bool = True
    history: list[float] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)
        if not np.all(np.isfinite(self.W)):
            raise ValueError("precoder has non-finite entries")
        tr = float(np.real(np.trace(self.W.conj().T @ self.W)))
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"precoder trace {tr!r} is not 1")


@dataclass
class RateReport:
    sinr: np.ndarray
    rates: np.ndarray
    sum_rate: float
    served: int

    def to_row(self, seed: int, num_waveguides: int, num_pas_per_wg: int, num_users: int, method: str) -> dict:
        return {
            "seed": seed,
            "N": num_waveguides,
            "L": num_pas_per_wg,
            "M": num_users,
            "method": method,
            "sum_rate": self.sum_rate,
            "served": self.served,
        }

    def to_dict(self) -> dict:
        return {
            "sinr": self.sinr.tolist(),
            "rates": self.rates.tolist(),
            "sum_rate": self.sum_rate,
            "served": self.served,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


RATE_ROW_FIELDS = ("seed", "N", "L", "M", "method", "sum_rate", "served")


def write_rate_rows(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=RATE_ROW_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in row.items()})


def effective_channel(mask, slot_channel, num_waveguides: int, magnitude: bool = False) -> np.ndarray:
    """Per-waveguide channel G[m, n] = sum over user m's PAs on waveguide n.

    ``slot_channel[m, k]`` is the coefficient from PA slot ``k`` to user ``m``.
    With ``magnitude`` the coefficients' moduli are summed instead.
    """
    mask = np.asarray(mask, dtype=float)
    h = np.asarray(slot_channel)
    h = np.abs(h) if magnitude else h.astype(complex)
    L = mask.shape[1] // num_waveguides
    return (mask * h) @ waveguide_selector(num_waveguides, L)


def _noise(noise, m: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(noise, dtype=float), (m,)).copy()


def evaluate(G, W, tx_power: float, noise, threshold: float = SERVED_THRESHOLD) -> RateReport:
    """SINR, per-user rate and served count for precoder W on channel G."""
    G = np.asarray(G, dtype=complex)
    W = np.asarray(W, dtype=complex)
    if G.shape[1] != W.shape[0] or W.shape[1] != G.shape[0]:
        raise ValueError(f"G {G.shape} and W {W.shape} do not agree")
    power = tx_power * np.abs(G @ W) ** 2
    signal = np.diag(power).copy()
    np.fill_diagonal(power, 0.0)
    interference = power.sum(axis=1)
    sinr = signal / (interference + _noise(noise, G.shape[0]))
    rates = np.log2(1.0 + sinr)
    return RateReport(sinr, rates, float(rates.sum()), int(np.sum(rates > threshold)))


def _normalize(W: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(W)
    if norm == 0:
        raise ValueError("precoder is identically zero")
    return W / norm


def _select_users(G: np.ndarray, rtol: float = 1e-13) -> list[int]:
    """Strongest users whose rows stay linearly independent, at most N of them."""
    M, N = G.shape
    norms = np.linalg.norm(G, axis=1)
    order = sorted(range(M), key=lambda m: (-norms[m], m))
    scale = norms.max() if M else 0.0
    chosen: list[int] = []
    for m in order:
        if len(chosen) == N or norms[m] <= rtol * scale:
            break
        trial = G[chosen + [m]]
        sv = np.linalg.svd(trial, compute_uv=False)
        if sv[-1] > rtol * sv[0]:
            chosen.append(m)
    return sorted(chosen)


def zf_precoder(G, tx_power: float, noise) -> Precoder:
    """Zero-forcing precoder on the selected users, unit trace.

    Up to N users with linearly independent rows are served, strongest row
    first; the rest get zero columns. The pseudo-inverse gives every served
    user the same receive amplitude.
    """
    G = np.asarray(G, dtype=complex)
    M, N = G.shape
    if not np.any(G):
        raise ValueError("effective channel is identically zero")
    chosen = _select_users(G)
    Gs = G[chosen]
    diagnostics: dict = {"served_users": chosen}
    U, sv, Vh = np.linalg.svd(Gs, full_matrices=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    diagnostics["condition"] = cond
    if cond > COND_LIMIT:
        # Tikhonov-regularized inverse, built from the SVD to avoid squaring cond
        delta = (sv[0] / COND_LIMIT) ** 2
        Ws = Vh.conj().T @ ((sv / (sv**2 + delta))[:, None] * U.conj().T)
        diagnostics["regularization"] = delta
        warnings.warn(f"ill-conditioned channel (cond={cond:.3g}); regularized ZF used", RuntimeWarning)
    else:
        Ws = np.linalg.pinv(Gs)
    W = np.zeros((N, M), dtype=complex)
    W[:, chosen] = Ws
    return Precoder(_normalize(W), "zf", diagnostics=diagnostics)


def _sum_rate(G: np.ndarray, V: np.ndarray) -> float:
    """Sum rate with unit noise and transmit filters V already carrying power."""
    power = np.abs(G @ V) ** 2
    signal = np.diag(power).copy()
    np.fill_diagonal(power, 0.0)
    return float(np.sum(np.log2(1.0 + signal / (power.sum(axis=1) + 1.0))))


def _transmit_update(G, u, w, P):
    """Optimal filters for fixed receivers and weights under total power P."""
    c = w * np.abs(u) ** 2
    A = (G.conj().T * c) @ G
    A = 0.5 * (A + A.conj().T)
    B = G.conj().T * (w * u)  # column m: w_m u_m g_m^H
    lam, U = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    Phi = U.conj().T @ B
    weight = np.sum(np.abs(Phi) ** 2, axis=1)
    keep = lam > 1e-12 * max(lam.max(), 1e-300)

    def power(mu):
        return float(np.sum(weight[keep] / (lam[keep] + mu) ** 2))

    if power(0.0) <= P:
        mu = 0.0
    else:
        hi = math.sqrt(weight.sum() / P)
        while power(hi) > P:
            hi *= 2.0
        mu = brentq(lambda x: power(x) - P, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    inv = np.where(keep, 1.0 / (lam + mu), 0.0)
    V = U @ (inv[:, None] * Phi)
    excess = np.linalg.norm(V) ** 2 / P
    if excess > 1.0:
        V = V / math.sqrt(excess)
    return V


def _wmmse_run(G, P, V, max_iter, tol):
    history = [_sum_rate(G, V)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        GV = G @ V
        gvm = np.diag(GV).copy()
        cross = np.abs(GV) ** 2
        np.fill_diagonal(cross, 0.0)
        rest = cross.sum(axis=1) + 1.0
        total = rest + np.abs(gvm) ** 2
        u = gvm / total
        e = rest / total
        w = 1.0 / np.maximum(e, 1e-300)
        V = _transmit_update(G, u, w, P)
        history.append(_sum_rate(G, V))
        if history[-1] - history[-2] < tol:
            converged = True
            break
    return V, history, it, converged


def wmmse_precoder(G, tx_power: float, noise, max_iter: int = 200, tol: float = 1e-6) -> Precoder:
    """Sum-rate WMMSE precoder, unit trace.

    Starts from the normalized matched filter. If that run ends below the
    zero-forcing rate it is repeated from the ZF point and the better of
    the two is returned.
    """
    G = np.asarray(G, dtype=complex)
    M, N = G.shape
    if not np.any(G):
        raise ValueError("effective channel is identically zero")
    sigma = np.sqrt(_noise(noise, M))
    Gw = G / sigma[:, None]
    P = float(tx_power)
    V0 = math.sqrt(P) * _normalize(Gw.conj().T)
    V, history, iters, converged = _wmmse_run(Gw, P, V0, max_iter, tol)
    zf = zf_precoder(G, tx_power, noise)
    zf_rate = _sum_rate(Gw, math.sqrt(P) * zf.W)
    start = "matched-filter"
    if history[-1] < zf_rate:
        V2, h2, it2, c2 = _wmmse_run(Gw, P, math.sqrt(P) * zf.W, max_iter, tol)
        if h2[-1] >= history[-1]:
            V, history, iters, converged, start = V2, h2, it2, c2, "zf"
    return Precoder(
        _normalize(V),
        "wmmse",
        iterations=iters,
        converged=converged,
        history=history,
        diagnostics={"start": start, "zf_rate": zf_rate},
    )


def make_precoder(method: str, G, tx_power: float, noise, **kwargs) -> Precoder:
    method = method.lower()
    if method == "zf":
        return zf_precoder(G, tx_power, noise)
    if method == "wmmse":
        return wmmse_precoder(G, tx_power, noise, **kwargs)
    raise ValueError(f"unknown beamformer {method!r}; expected 'zf' or 'wmmse'")


__all__ = [
    "COND_LIMIT",
    "Precoder",
    "RATE_ROW_FIELDS",
    "RateReport",
    "SERVED_THRESHOLD",
    "effective_channel",
    "evaluate",
    "make_precoder",
    "wmmse_precoder",
    "write_rate_rows",
    "zf_precoder",
]
