"""PA-to-user assignment: optimal-gain matrix, matching, greedy augmentation,
feasibility projection and wavelength-scale phase alignment."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from dipass.channel import (
    GainEntry,
    boresight_phase,
    coupling_lengths,
    link_coefficient,
    optimal_gain_entry,
    waveguide_selector,
)
from dipass.core import Orientation, PAState, SystemConfig, Vec3, waveguide_entrances
from dipass.hungarian import hungarian
from dipass.single_pa import PlacementSolution, optimal_orientation, solve_placement


# ---------------------------------------------------------------------------
# optimal-gain matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GainMatrix:
    """Best achievable coefficient of every PA slot towards every user.

    ``solutions[m][n]`` is the single-PA placement of user ``m`` on waveguide
    ``n``; all L slots of a waveguide share it, so their columns coincide.
    """

    entries: tuple[tuple[GainEntry, ...], ...]
    solutions: tuple[tuple[PlacementSolution, ...], ...]
    num_waveguides: int
    num_pas_per_wg: int

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.entries), self.num_waveguides * self.num_pas_per_wg)

    @property
    def magnitude(self) -> np.ndarray:
        return np.array([[e.magnitude for e in row] for row in self.entries], dtype=float).reshape(self.shape)

    @property
    def value(self) -> np.ndarray:
        return np.array([[e.value for e in row] for row in self.entries], dtype=complex).reshape(self.shape)

    def waveguide_of(self, pa_index: int) -> int:
        return pa_index // self.num_pas_per_wg


def build_gain_matrix(users: Sequence[Sequence[float]], cfg: SystemConfig) -> GainMatrix:
    """Solve the single-PA problem for every (user, waveguide) pair."""
    N, L = cfg.num_waveguides, cfg.num_pas_per_wg
    entrances = waveguide_entrances(cfg)
    solutions = []
    entries = []
    for m, user in enumerate(users):
        sols = tuple(solve_placement(user, entrances[n].x, cfg) for n in range(N))
        solutions.append(sols)
        entries.append(tuple(optimal_gain_entry(m, k, cfg, sols[k // L]) for k in range(N * L)))
    return GainMatrix(tuple(entries), tuple(solutions), N, L)


# ---------------------------------------------------------------------------
# mask-local SINR and the assignment objective
# ---------------------------------------------------------------------------


def interim_precoder(num_waveguides: int, num_users: int) -> np.ndarray:
    """Equal-magnitude weights with unit trace, used before the final precoder exists."""
    return np.full((num_waveguides, num_users), 1.0 / math.sqrt(num_waveguides * num_users), dtype=complex)


def masked_channel(mask: np.ndarray, gain_mag: np.ndarray, num_waveguides: int) -> np.ndarray:
    """M x N channel seen through the mask, using gain magnitudes."""
    L = mask.shape[1] // num_waveguides
    return (np.asarray(mask, dtype=float) * gain_mag) @ waveguide_selector(num_waveguides, L)


def mask_sinr(mask, gain_mag, W, tx_power: float, noise) -> np.ndarray:
    """Per-user SINR where user m only sees the PAs assigned to it."""
    W = np.asarray(W)
    Q = masked_channel(np.asarray(mask), np.asarray(gain_mag), W.shape[0]) @ W
    power = tx_power * np.abs(Q) ** 2
    signal = np.diag(power).copy()
    np.fill_diagonal(power, 0.0)
    interference = power.sum(axis=1)
    return signal / (interference + np.broadcast_to(noise, signal.shape))


def assignment_objective(mask, gain_mag, W, tx_power: float, noise) -> float:
    """Sum rate of the assignment problem's objective (bits/s/Hz)."""
    return float(np.sum(np.log2(1.0 + mask_sinr(mask, gain_mag, W, tx_power, noise))))


def marginal_gain(mask, candidate: tuple[int, int], gain_mag, W, noise, tx_power: float) -> float:
    """Rate gain of user m when PA k is added to its serving set.

    Only the candidate's own user is evaluated, matching the mask-local SINR.
    """
    m, k = candidate
    mask = np.asarray(mask)
    if mask[:, k].any():
        raise ValueError(f"PA {k} is already assigned")
    before = mask_sinr(mask, gain_mag, W, tx_power, noise)[m]
    trial = mask.copy()
    trial[m, k] = 1
    after = mask_sinr(trial, gain_mag, W, tx_power, noise)[m]
    return float(np.log2((1.0 + after) / (1.0 + before)))


# ---------------------------------------------------------------------------
# matching + greedy augmentation
# ---------------------------------------------------------------------------


@dataclass
class AssignmentResult:
    """Mask plus the record of how it was built."""

    mask: np.ndarray
    initial_mask: np.ndarray
    rounds: list[dict] = field(default_factory=list)

    def serving_sets(self) -> list[list[int]]:
        return [np.flatnonzero(row).tolist() for row in self.mask]


def single_link_utilities(gain_mag: np.ndarray, tx_power: float, noise) -> np.ndarray:
    """log2(1 + P|h|^2 / sigma^2) for every user/PA pair."""
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (gain_mag.shape[0],))
    return np.log2(1.0 + tx_power * gain_mag**2 / noise[:, None])


def assign(users, gains: GainMatrix, cfg: SystemConfig, interim: np.ndarray | None = None) -> AssignmentResult:
    """Pick the serving PAs of every user.

    With at least as many users as PAs, a single matching chooses the best NL
    pairs. Otherwise each user first gets one PA and the spare PAs are then
    handed out one at a time to whichever user gains the most rate.
    """
    mag = gains.magnitude
    M, K = mag.shape
    if len(users) != M:
        raise ValueError(f"gain matrix has {M} rows but {len(users)} users were given")
    N = gains.num_waveguides
    noise = cfg.noise_vector(M)
    P = cfg.tx_power
    util = single_link_utilities(mag, P, noise)
    R = max(M, K)
    padded = np.zeros((R, R))
    padded[:M, :K] = util
    perm = hungarian(padded, maximize=True)
    mask = np.zeros((M, K), dtype=int)
    for m in range(M):
        if perm[m] < K:
            mask[m, perm[m]] = 1
    initial = mask.copy()
    result = AssignmentResult(mask, initial)
    if M >= K:
        return result

    W = interim_precoder(N, M) if interim is None else np.asarray(interim)
    objective = assignment_objective(mask, mag, W, P, noise)
    for _ in range(K - M):
        free = np.flatnonzero(mask.sum(axis=0) == 0)
        best = (-math.inf, -1, -1)
        for m in range(M):
            for k in free:
                gain = marginal_gain(mask, (m, int(k)), mag, W, noise, P)
                if gain > best[0]:
                    best = (gain, m, int(k))
        gain, m, k = best
        mask[m, k] = 1
        new_objective = assignment_objective(mask, mag, W, P, noise)
        result.rounds.append({"user": m, "pa": k, "delta_rate": gain, "objective": new_objective,
                              "previous_objective": objective})
        objective = new_objective
    return result


def check_mask(mask: np.ndarray) -> None:
    """Raise if a mask breaks the one-user-per-PA or the coverage rule."""
    mask = np.asarray(mask)
    M, K = mask.shape
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must be binary")
    if M <= K:
        if not np.all(mask.sum(axis=0) == 1):
            raise ValueError("every PA must serve exactly one user")
        if not np.all(mask.sum(axis=1) >= 1):
            raise ValueError("every user must be served by at least one PA")
    else:
        if not np.all(mask.sum(axis=0) == 1):
            raise ValueError("every PA must serve exactly one user")


# ---------------------------------------------------------------------------
# PA states, projection and phase alignment
# ---------------------------------------------------------------------------


def _point(state: PAState, users, cfg: SystemConfig) -> PAState:
    if users is None or state.user is None:
        return state
    return state.with_(orientation=optimal_orientation(users[state.user], state.position(cfg)))


def initial_states(result: AssignmentResult, gains: GainMatrix, cfg: SystemConfig) -> list[PAState]:
    """Nominal PA states: each PA at its user's single-PA optimum."""
    L = cfg.num_pas_per_wg
    plan = coupling_lengths(L, cfg.coupling_coeff)
    states = []
    for k in range(result.mask.shape[1]):
        users_k = np.flatnonzero(result.mask[:, k])
        n, order = divmod(k, L)
        if users_k.size:
            m = int(users_k[0])
            sol = gains.solutions[m][n]
            states.append(PAState(n, order, sol.y_star, sol.orientation, plan.lengths[order], m))
        else:
            # idle PA: park it at its own slot, facing down
            y = (order + 1) * cfg.spacing
            states.append(PAState(n, order, y, Orientation(math.pi, math.pi / 2), plan.lengths[order], None))
    return states


def project_feasible(states: Sequence[PAState], cfg: SystemConfig, users=None) -> list[PAState]:
    """Move PAs onto the feasible set of every waveguide.

    PAs are sorted along each waveguide, pushed right to keep the first at
    least one spacing from the entrance and every pair one spacing apart,
    then pulled back left so nothing passes the waveguide end. Orders and
    coupling lengths are relabelled by sorted position; if ``users`` is given
    the beams are re-pointed at their users.
    """
    dy = cfg.region[1]
    s = cfg.spacing
    plan = coupling_lengths(cfg.num_pas_per_wg, cfg.coupling_coeff)
    out: list[PAState] = []
    for n in sorted({st.waveguide for st in states}):
        group = sorted((st for st in states if st.waveguide == n), key=lambda st: (st.y, st.order))
        if len(group) * s > dy + 1e-12:
            raise ValueError(f"{len(group)} PAs cannot fit on waveguide {n}")
        ys = [st.y for st in group]
        prev = 0.0
        for i, y in enumerate(ys):
            ys[i] = max(y, prev + s)
            prev = ys[i]
        nxt = dy + s
        for i in range(len(ys) - 1, -1, -1):
            ys[i] = min(ys[i], nxt - s)
            nxt = ys[i]
        for i, (st, y) in enumerate(zip(group, ys)):
            moved = st.with_(y=float(y), order=i, coupling_length=plan.lengths[i] if i < len(plan.lengths) else st.coupling_length)
            out.append(_point(moved, users, cfg) if y != st.y or st.order != i else moved)
    return sorted(out, key=lambda st: (st.waveguide, st.order))


def is_feasible(states: Sequence[PAState], cfg: SystemConfig, tol: float = 1e-12) -> bool:
    dy, s = cfg.region[1], cfg.spacing
    for n in {st.waveguide for st in states}:
        ys = sorted(st.y for st in states if st.waveguide == n)
        if ys[0] < s - tol or ys[-1] > dy + tol:
            return False
        if any(b - a < s - tol for a, b in zip(ys, ys[1:])):
            return False
    return True


def mask_from_states(states: Sequence[PAState], num_users: int, cfg: SystemConfig) -> np.ndarray:
    L = cfg.num_pas_per_wg
    mask = np.zeros((num_users, cfg.num_waveguides * L), dtype=int)
    for st in states:
        if st.user is not None:
            mask[st.user, st.waveguide * L + st.order] = 1
    return mask


def _link(state: PAState, users, cfg: SystemConfig) -> complex:
    user = users[state.user]
    pos = state.position(cfg)
    return link_coefficient(user, pos, optimal_orientation(user, pos), cfg)


def _user_signal(states: Sequence[PAState], m: int, users, cfg: SystemConfig) -> complex:
    return sum((_link(st, users, cfg) for st in states if st.user == m), 0j)


def phase_slope(state: PAState, cfg: SystemConfig) -> float:
    """Linear phase change per meter of PA displacement."""
    o = state.orientation
    lam = cfg.wavelength
    return -(2.0 * math.pi * cfg.refractive_index / lam - 2.0 * math.pi / lam * math.sin(o.theta) * math.sin(o.phi))


@dataclass
class TuningReport:
    shifts: dict[int, float] = field(default_factory=dict)
    skipped: list[int] = field(default_factory=list)
    residual: dict[int, float] = field(default_factory=dict)


def _path_phase(y: float, user: Vec3, wg_x: float, cfg: SystemConfig) -> float:
    dz = cfg.region[2]
    d = math.sqrt((user.x - wg_x) ** 2 + (user.z - dz) ** 2 + (user.y - y) ** 2)
    return boresight_phase(y, d, cfg)


def aligning_shifts(state: PAState, user: Vec3, target: float, cfg: SystemConfig) -> list[float]:
    """Displacements within one wavelength that bring the path phase to ``target`` mod 2 pi.

    Sorted by size. When no displacement in the window reaches the target,
    the single window end (or zero) closest in phase is returned.
    """
    user = Vec3(*map(float, user))
    lam = cfg.wavelength
    wg_x = state.position(cfg).x
    y0 = state.y
    lo, hi = max(-lam, -y0), min(lam, cfg.region[1] - y0)

    def phase(dy):
        return _path_phase(y0 + dy, user, wg_x, cfg)

    p_lo, p_hi = phase(lo), phase(hi)
    k_min = math.ceil((min(p_lo, p_hi) - target) / (2 * math.pi))
    k_max = math.floor((max(p_lo, p_hi) - target) / (2 * math.pi))
    roots = []
    for k in range(k_min, k_max + 1):
        goal = target + 2 * math.pi * k
        try:
            roots.append(brentq(lambda dy: phase(dy) - goal, lo, hi, xtol=1e-15, rtol=1e-14))
        except ValueError:
            continue
    if roots:
        return sorted(roots, key=abs)

    def err(dy):
        return abs(math.remainder(phase(dy) - target, 2 * math.pi))

    return [min((0.0, lo, hi), key=err)]


def phase_fine_tune(states: Sequence[PAState], mask, users, cfg: SystemConfig) -> tuple[list[PAState], TuningReport]:
    """Align every user's secondary paths to its strongest path.

    Each secondary PA is shifted by at most one wavelength so its phase at the
    user matches the reference modulo 2 pi. A shift is kept only if, after
    re-projecting the waveguide, the user's combined power does not drop.
    """
    users = [Vec3(*map(float, u)) for u in users]
    states = list(states)
    report = TuningReport()
    mask = np.asarray(mask)
    slope_floor = 1e-9 * 2.0 * math.pi * cfg.refractive_index / cfg.wavelength
    for m in range(mask.shape[0]):
        idx = [i for i, st in enumerate(states) if st.user == m]
        if len(idx) < 2:
            continue
        links = {i: _link(states[i], users, cfg) for i in idx}
        ref = max(idx, key=lambda i: (abs(links[i]), -i))
        target = float(np.angle(links[ref]))
        for i in idx:
            if i == ref:
                continue
            st = states[i]
            if abs(phase_slope(st, cfg)) < slope_floor:
                report.skipped.append(i)
                continue
            pos = st.position(cfg)
            # unwrapped path phase differs from angle(link) only by whole turns
            current = _path_phase(st.y, users[m], pos.x, cfg)
            offset = current - float(np.angle(links[i]))
            before = abs(_user_signal(states, m, users, cfg)) ** 2
            best = (before, 0.0, states)
            for shift in aligning_shifts(st, users[m], target + offset, cfg):
                if shift == 0.0:
                    continue
                moved = list(states)
                moved[i] = _point(st.with_(y=st.y + shift), users, cfg)
                trial = _restore_positions(moved, project_feasible(moved, cfg, users))
                after = abs(_user_signal(trial, m, users, cfg)) ** 2
                if after > best[0]:
                    best = (after, shift, trial)
            report.shifts[i] = best[1]
            states = best[2]
    for m in range(mask.shape[0]):
        idx = [i for i, st in enumerate(states) if st.user == m]
        if len(idx) < 2:
            continue
        links = [_link(states[i], users, cfg) for i in idx]
        ref = int(np.argmax(np.abs(links)))
        ref_phase = np.angle(links[ref])
        report.residual[m] = float(max(abs(math.remainder(np.angle(h) - ref_phase, 2 * math.pi)) for h in links))
    return states, report


def _restore_positions(before: Sequence[PAState], after: Sequence[PAState]) -> list[PAState]:
    """Map projected states back onto the list slots of ``before``.

    Projection sorts each waveguide by position, which preserves the relative
    order of the PAs, so the k-th smallest ``y`` before is the k-th after.
    """
    out = list(before)
    for n in {st.waveguide for st in before}:
        slots = sorted((i for i, st in enumerate(before) if st.waveguide == n), key=lambda i: (before[i].y, before[i].order))
        proj = [st for st in after if st.waveguide == n]
        for i, st in zip(slots, proj):
            out[i] = st
    return out


def assignment_to_dict(states: Sequence[PAState], num_users: int, cfg: SystemConfig) -> dict:
    """JSON-ready export: mask, per-PA pose and per-user serving sets."""
    ordered = sorted(states, key=lambda st: (st.waveguide, st.order))
    mask = mask_from_states(ordered, num_users, cfg)
    L = cfg.num_pas_per_wg
    return {
        "mask": mask.tolist(),
        "pas": [
            {
                "waveguide": st.waveguide,
                "order": st.order,
                "y": st.y,
                "theta": st.orientation.theta,
                "phi": st.orientation.phi,
                "user": st.user,
            }
            for st in ordered
        ],
        "serving": [[int(k) for k in np.flatnonzero(mask[m])] for m in range(num_users)],
        "slots_per_waveguide": L,
    }


def assignment_to_json(states: Sequence[PAState], num_users: int, cfg: SystemConfig, **kwargs) -> str:
    return json.dumps(assignment_to_dict(states, num_users, cfg), **kwargs)
