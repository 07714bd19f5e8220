"""End-to-end multi-PA optimization for one set of users."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dipass.assignment import (
    AssignmentResult,
    GainMatrix,
    TuningReport,
    assign,
    assignment_to_dict,
    build_gain_matrix,
    initial_states,
    mask_from_states,
    phase_fine_tune,
    project_feasible,
)
from dipass.beamforming import Precoder, RateReport, effective_channel, evaluate, make_precoder
from dipass.channel import ChannelSet, assemble_channels
from dipass.core import PAState, SystemConfig


@dataclass
class PipelineResult:
    cfg: SystemConfig
    gains: GainMatrix
    assignment: AssignmentResult
    states: list[PAState]
    mask: np.ndarray
    channels: ChannelSet
    slot_channel: np.ndarray
    G: np.ndarray
    precoder: Precoder
    report: RateReport
    tuning: TuningReport | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = assignment_to_dict(self.states, self.mask.shape[0], self.cfg)
        out["report"] = self.report.to_dict()
        out["method"] = self.precoder.method
        return out


def slot_channel(channels: ChannelSet) -> np.ndarray:
    """Coefficient from every PA slot to every user (before waveguide summation)."""
    return channels.h_pu * np.diag(channels.h_wp)[None, :]


def run_pipeline(
    users: Sequence[Sequence[float]],
    cfg: SystemConfig,
    beamformer: str = "wmmse",
    tune: bool = True,
) -> PipelineResult:
    """Gain matrix, assignment, projection, phase alignment and precoding."""
    users = [tuple(map(float, u)) for u in users]
    gains = build_gain_matrix(users, cfg)
    result = assign(users, gains, cfg)
    states = project_feasible(initial_states(result, gains, cfg), cfg, users)
    report = None
    if tune:
        states, report = phase_fine_tune(states, mask_from_states(states, len(users), cfg), users, cfg)
    states = sorted(states, key=lambda st: (st.waveguide, st.order))
    mask = mask_from_states(states, len(users), cfg)
    channels = assemble_channels(states, users, cfg)
    slots = slot_channel(channels)
    G = effective_channel(mask, slots, cfg.num_waveguides)
    noise = cfg.noise_vector(len(users))
    precoder = make_precoder(beamformer, G, cfg.tx_power, noise)
    rates = evaluate(G, precoder.W, cfg.tx_power, noise)
    return PipelineResult(cfg, gains, result, states, mask, channels, slots, G, precoder, rates, report)
