"""Seeded synthetic session generator used as the acceptance oracle.

A two-state semi-Markov process (exponential dwell times) drives alert/fussy
states whose onset ramps linearly over ``transition_ramp_s``, so behavior
changes gradually rather than abruptly. Each modality emits landmarks in a
normalized frame (face: nose at the origin, unit chin-to-brow length; body:
neck at the origin, unit torso) as

    template + ramp * effect * state_delta + idle wobble + jitter,

then maps to per-infant pixel scale and position. Fussiness shifts selected
AU means, deforms the face and body poses, and multiplies body jitter
amplitude (raising landmark speeds). With all effect sizes zero the emission
is state-independent, which the null-calibration checks rely on.

Occlusion bursts arrive as a Poisson process per modality; frames inside a
burst have zeroed coordinates and confidence well below the 20% threshold.
All confidences are short decimals (k/1000) so the written files round-trip
exactly, and the ground-truth occlusion mask is computed from the values as
written with the same per-bin mean arithmetic the ingest pipeline uses --
generator and pipeline therefore agree bin-for-bin at the threshold.

Everything is a pure function of (seed, infant_index): per-infant RNG
streams come from ``SeedSequence(seed, spawn_key=(infant_index,))`` and
population-level parameters (poses, shift directions) from
``SeedSequence(seed, spawn_key=(_POPULATION_KEY,))``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BIN_WIDTH_S, CONFIDENCE_THRESHOLD
from .errors import DiskError, TooFewInfantsError
from .ingest import DatasetManifest, ManifestEntry

_POPULATION_KEY = 0x506F50  # population-level stream, shared by all infants

_N_FACE = 68
_N_BODY = 25
_N_AUS = 17


@dataclass
class OcclusionConfig:
    """Alternating clear/occluded renewal process for one modality.

    Clear gaps are exponential with mean 60/rate_per_min seconds and burst
    lengths exponential with mean_length_s, so the occluded fraction of a
    long session approaches mean_length_s / (60/rate_per_min + mean_length_s).
    """

    rate_per_min: float = 0.0
    mean_length_s: float = 10.0


@dataclass
class EffectSizes:
    """Standardized mean shifts between states, one per feature group."""

    face_distances: float = 2.0
    face_aus: float = 2.0
    body_distances: float = 2.0
    body_speeds: float = 2.0

    def scaled(self, factor: float) -> "EffectSizes":
        return EffectSizes(self.face_distances * factor, self.face_aus * factor,
                           self.body_distances * factor, self.body_speeds * factor)


@dataclass
class SynthConfig:
    n_infants: int = 26
    session_s: float = 600.0
    # Stationary alert fraction is dwell_alert / (dwell_alert + dwell_fussy);
    # 107/20 s targets the ~84/16 alert/fussy imbalance of real coding.
    dwell_alert_s: float = 107.0
    dwell_fussy_s: float = 20.0
    transition_ramp_s: float = 2.0
    effects: EffectSizes = field(default_factory=EffectSizes)
    face_occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    body_occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    body_fps: float = 29.97
    face_fps_range: tuple[float, float] = (20.0, 30.0)
    au_noise: float = 0.25
    landmark_jitter: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.session_s <= 0 or self.dwell_alert_s <= 0 or self.dwell_fussy_s <= 0:
            raise ValueError("durations must be positive")
        if self.transition_ramp_s < 0:
            raise ValueError("transition_ramp_s must be >= 0")


@dataclass
class GroundTruth:
    """What the generator knows that the pipeline must recover."""

    session_id: str
    infant_id: str
    transition_times: list[float]     # state changes after t = 0
    bin_states: np.ndarray            # per bin: 0 alert / 1 fussy, time-majority
    face_occluded: np.ndarray         # per bin: written mean confidence <= threshold
    body_occluded: np.ndarray
    collapsed_transitions: int        # dwells shorter than one bin


def sample_state_path(rng: np.random.Generator, config: SynthConfig
                      ) -> list[tuple[float, float, int]]:
    """Dwell segments (start_s, end_s, state) covering [0, session_s).

    The initial state draws from the stationary distribution so the expected
    time share matches the dwell ratio even for short sessions.
    """
    p_alert = config.dwell_alert_s / (config.dwell_alert_s + config.dwell_fussy_s)
    state = 0 if rng.random() < p_alert else 1
    t = 0.0
    segments = []
    while t < config.session_s:
        mean = config.dwell_alert_s if state == 0 else config.dwell_fussy_s
        dwell = rng.exponential(mean)
        segments.append((t, min(t + dwell, config.session_s), state))
        t += dwell
        state = 1 - state
    return segments


def _ramp_knots(segments, ramp_s: float):
    """Piecewise-linear knots of the fussy-intensity signal in [0, 1]."""
    ts, vs = [0.0], [float(segments[0][2])]
    for start, end, state in segments:
        target = float(state)
        if start > 0.0:
            v0 = vs[-1]
            ramp_end = min(start + ramp_s, end) if ramp_s > 0 else start
            ts.append(start)
            vs.append(v0)
            ts.append(ramp_end)
            vs.append(target if ramp_s == 0 or start + ramp_s <= end
                      else v0 + (target - v0) * (end - start) / ramp_s)
        if end > ts[-1]:
            ts.append(end)
            vs.append(vs[-1])
    return np.array(ts), np.array(vs)


def _occlusion_bursts(rng: np.random.Generator, occ: OcclusionConfig,
                      session_s: float) -> list[tuple[float, float]]:
    if occ.rate_per_min <= 0:
        return []
    bursts = []
    t = rng.exponential(60.0 / occ.rate_per_min)
    while t < session_s:
        length = rng.exponential(occ.mean_length_s)
        bursts.append((t, min(t + length, session_s)))
        t += length + rng.exponential(60.0 / occ.rate_per_min)
    return bursts


def _in_bursts(times: np.ndarray, bursts) -> np.ndarray:
    mask = np.zeros(len(times), dtype=bool)
    for start, end in bursts:
        mask |= (times >= start) & (times < end)
    return mask


def _face_template() -> np.ndarray:
    """A 68-point face in normalized units: nose tip at the origin, unit
    distance from chin (8) to the mid-brow of points 19/24; y grows downward."""
    pts = np.zeros((_N_FACE, 2))
    phi = np.linspace(0.0, np.pi, 17)
    pts[0:17, 0] = -0.48 * np.cos(phi)                 # jaw arc, chin at 8
    pts[0:17, 1] = 0.10 + 0.45 * np.sin(phi)
    bx = np.linspace(-0.34, -0.08, 5)
    pts[17:22, 0] = bx
    pts[17:22, 1] = -0.45 + 0.02 * np.abs(np.linspace(-1, 1, 5))
    pts[22:27, 0] = -bx[::-1]
    pts[22:27, 1] = pts[17:22, 1][::-1]
    pts[27:31, 0] = 0.0
    pts[27:31, 1] = np.linspace(-0.33, 0.0, 4)         # nose bridge, tip at 30
    pts[31:36, 0] = np.linspace(-0.08, 0.08, 5)
    pts[31:36, 1] = 0.08
    ang = np.linspace(0, 2 * np.pi, 6, endpoint=False)
    eye = np.column_stack([0.07 * np.cos(ang), 0.035 * np.sin(ang)])
    pts[36:42] = eye + [-0.22, -0.28]
    pts[42:48] = eye + [0.22, -0.28]
    ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts[48:60] = np.column_stack([0.17 * np.cos(ang), 0.07 * np.sin(ang)]) + [0.0, 0.30]
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    pts[60:68] = np.column_stack([0.10 * np.cos(ang), 0.035 * np.sin(ang)]) + [0.0, 0.30]
    # Nudge so the scale anchors are exact: chin at (0, 0.55), brows level.
    chin_to_brow = pts[8] - (pts[19] + pts[24]) / 2.0
    pts /= np.hypot(*chin_to_brow)
    return pts


def _body_template() -> np.ndarray:
    """A 25-point body: neck (1) at the origin, unit neck-to-mid-hip torso."""
    pts = np.array([
        [0.00, -0.25],   # 0 nose
        [0.00, 0.00],    # 1 neck
        [-0.18, 0.02], [-0.28, 0.30], [-0.30, 0.55],   # 2-4 right arm
        [0.18, 0.02], [0.28, 0.30], [0.30, 0.55],      # 5-7 left arm
        [0.00, 1.00],    # 8 mid-hip
        [-0.12, 1.00], [-0.15, 1.45], [-0.16, 1.85],   # 9-11 right leg
        [0.12, 1.00], [0.15, 1.45], [0.16, 1.85],      # 12-14 left leg
        [-0.05, -0.30], [0.05, -0.30],                 # 15-16 eyes
        [-0.10, -0.27], [0.10, -0.27],                 # 17-18 ears
        [0.17, 2.00], [0.20, 2.02], [0.13, 1.95],      # 19-21 left foot
        [-0.17, 2.00], [-0.20, 2.02], [-0.13, 1.95],   # 22-24 right foot
    ])
    return pts


@dataclass
class _Population:
    """State-shift directions and AU baseline shared by every infant."""

    au_base: np.ndarray
    au_shift: np.ndarray
    face_delta: np.ndarray
    body_delta: np.ndarray
    idle_phase_face: np.ndarray
    idle_phase_body: np.ndarray


def _population(config: SynthConfig) -> _Population:
    rng = np.random.default_rng(np.random.SeedSequence(
        config.seed, spawn_key=(_POPULATION_KEY,)))
    au_base = rng.uniform(0.5, 2.5, _N_AUS)
    au_shift = rng.normal(size=_N_AUS)
    au_shift /= np.sqrt(np.mean(au_shift ** 2))

    # Fussy face: mouth opens and brows drop, plus diffuse deformation.
    face_delta = rng.normal(size=(_N_FACE, 2)) * 0.4
    face_delta[48:68, 1] += 1.2
    face_delta[17:27, 1] += 0.8
    face_delta /= np.sqrt(np.mean(face_delta ** 2))

    # Fussy body: arms pull up and in, plus diffuse deformation.
    body_delta = rng.normal(size=(_N_BODY, 2)) * 0.4
    body_delta[[3, 4, 6, 7], 1] -= 1.2
    body_delta[[4, 7], 0] *= 0.5
    body_delta /= np.sqrt(np.mean(body_delta ** 2))

    return _Population(
        au_base=au_base,
        au_shift=au_shift,
        face_delta=face_delta,
        body_delta=body_delta,
        idle_phase_face=rng.uniform(0, 2 * np.pi, (_N_FACE, 2)),
        idle_phase_body=rng.uniform(0, 2 * np.pi, (_N_BODY, 2)),
    )


_IDLE_AMP = 0.008
_IDLE_FREQ_HZ = 0.4


def _emit_modality(rng, times, intensity, template, delta, idle_phase,
                   pose_effect, jitter_base, jitter_gain, occluded,
                   scale_px, offset_px):
    """Landmark pixel positions and confidences for one modality's frames."""
    n = len(times)
    pose = template[None, :, :] + (pose_effect * jitter_base) * \
        intensity[:, None, None] * delta[None, :, :]
    wobble = _IDLE_AMP * np.sin(
        2 * np.pi * _IDLE_FREQ_HZ * times[:, None, None] + idle_phase[None, :, :])
    amp = jitter_base * (1.0 + intensity * jitter_gain)
    jitter = rng.normal(size=(n, template.shape[0], 2)) * amp[:, None, None]
    pts = (pose + wobble + jitter) * scale_px + offset_px
    conf = rng.integers(500, 951, n) / 1000.0
    conf[occluded] = rng.integers(10, 120, int(occluded.sum())) / 1000.0
    pts[occluded] = 0.0
    return pts, conf


def _fmt_rows(sid: str, modality: str, times, numeric: np.ndarray) -> list[str]:
    """Render ``sid,t,modality,<numeric...>`` lines with %.9g fields."""
    block = np.column_stack([times, numeric])
    buf = io.StringIO()
    np.savetxt(buf, block, fmt="%.9g", delimiter=",")
    lines = []
    for row in buf.getvalue().splitlines():
        t_str, rest = row.split(",", 1)
        lines.append(f"{sid},{t_str},{modality},{rest}")
    return lines


def _round_9g(values: np.ndarray) -> np.ndarray:
    """The float64 values the %.9g-rendered file will parse back to."""
    return np.array([float("%.9g" % v) for v in values])


def _bin_mean_conf(times: np.ndarray, conf: np.ndarray, n_bins: int) -> np.ndarray:
    """Per-bin mean confidence using the same arithmetic as ingest binning."""
    bin_idx = np.floor_divide(times, BIN_WIDTH_S).astype(np.int64)
    out = np.zeros(n_bins)
    starts = np.searchsorted(bin_idx, np.arange(n_bins), side="left")
    ends = np.searchsorted(bin_idx, np.arange(n_bins) + 1, side="left")
    for b in range(n_bins):
        if ends[b] > starts[b]:
            out[b] = conf[starts[b]: ends[b]].mean()
    return out


def generate_session(config: SynthConfig, infant_index: int, out_dir: str | Path
                     ) -> tuple[ManifestEntry, GroundTruth]:
    """Write one synthetic session's frames/labels files.

    Output is fully determined by (config.seed, infant_index).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    infant_id = f"infant{infant_index:03d}"
    session_id = f"session{infant_index:03d}"
    pop = _population(config)
    rng = np.random.default_rng(np.random.SeedSequence(
        config.seed, spawn_key=(infant_index,)))

    segments = sample_state_path(rng, config)
    knot_t, knot_v = _ramp_knots(segments, config.transition_ramp_s)

    # Frame clocks. The body camera ticks at a fixed rate; the face camera's
    # inter-frame gap jitters uniformly over the configured fps range.
    n_body = int(np.floor((config.session_s - 1e-9) * config.body_fps)) + 1
    body_times = np.arange(n_body) / config.body_fps
    face_times = [0.0]
    lo, hi = config.face_fps_range
    while True:
        nxt = face_times[-1] + 1.0 / rng.uniform(lo, hi)
        if nxt >= config.session_s:
            break
        face_times.append(nxt)
    face_times = np.array(face_times)

    face_bursts = _occlusion_bursts(rng, config.face_occlusion, config.session_s)
    body_bursts = _occlusion_bursts(rng, config.body_occlusion, config.session_s)
    face_occ = _in_bursts(face_times, face_bursts)
    body_occ = _in_bursts(body_times, body_bursts)

    face_scale = rng.uniform(80.0, 140.0)
    face_offset = rng.uniform(200.0, 450.0, 2)
    body_scale = rng.uniform(120.0, 200.0)
    body_offset = rng.uniform(150.0, 400.0, 2)

    face_int = np.interp(face_times, knot_t, knot_v)
    body_int = np.interp(body_times, knot_t, knot_v)

    face_pts, face_conf = _emit_modality(
        rng, face_times, face_int, _face_template(), pop.face_delta,
        pop.idle_phase_face, config.effects.face_distances,
        config.landmark_jitter, 0.0, face_occ, face_scale, face_offset)
    aus = (pop.au_base[None, :]
           + config.effects.face_aus * config.au_noise
           * face_int[:, None] * pop.au_shift[None, :]
           + rng.normal(size=(len(face_times), _N_AUS)) * config.au_noise)
    aus[face_occ] = 0.0
    body_pts, body_conf = _emit_modality(
        rng, body_times, body_int, _body_template(), pop.body_delta,
        pop.idle_phase_body, config.effects.body_distances,
        config.landmark_jitter, config.effects.body_speeds, body_occ,
        body_scale, body_offset)

    frames_path = out_dir / f"{session_id}.frames.csv"
    labels_path = out_dir / f"{session_id}.labels.csv"
    face_numeric = np.column_stack([face_conf, face_pts.reshape(len(face_times), -1), aus])
    body_numeric = np.column_stack([body_conf, body_pts.reshape(len(body_times), -1)])
    face_lines = _fmt_rows(session_id, "face", face_times, face_numeric)
    body_lines = _fmt_rows(session_id, "body", body_times, body_numeric)
    merged = sorted(
        [(t, 0, ln) for t, ln in zip(face_times, face_lines)]
        + [(t, 1, ln) for t, ln in zip(body_times, body_lines)])
    try:
        with open(frames_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(ln for _, _, ln in merged) + "\n")
        with open(labels_path, "w", encoding="utf-8") as fh:
            names = {0: "alert", 1: "fussy"}
            for start, _, state in segments:
                fh.write("%.9g,%s\n" % (start, names[state]))
    except OSError as exc:
        raise DiskError(f"cannot write session files under {out_dir}: {exc}") from exc

    # Ground truth, derived from the values as written (the %.9g rendering
    # can nudge a knife-edge frame across a bin boundary).
    face_times_w = _round_9g(face_times)
    body_times_w = _round_9g(body_times)
    last_t = max(face_times_w[-1], body_times_w[-1])
    n_bins = int(last_t // BIN_WIDTH_S) + 1
    edges = np.arange(n_bins + 1) * BIN_WIDTH_S
    fussy_time = _integrate_fussy(segments, edges)
    bin_states = (fussy_time >= BIN_WIDTH_S / 2.0).astype(np.int64)
    face_bin_conf = _bin_mean_conf(face_times_w, _round_9g(face_conf), n_bins)
    body_bin_conf = _bin_mean_conf(body_times_w, _round_9g(body_conf), n_bins)
    transition_times = [seg[0] for seg in segments[1:]]
    collapsed = sum(1 for s, e, _ in segments if e - s < BIN_WIDTH_S)

    gt = GroundTruth(
        session_id=session_id,
        infant_id=infant_id,
        transition_times=transition_times,
        bin_states=bin_states,
        face_occluded=~(face_bin_conf > CONFIDENCE_THRESHOLD),
        body_occluded=~(body_bin_conf > CONFIDENCE_THRESHOLD),
        collapsed_transitions=collapsed,
    )
    entry = ManifestEntry(infant_id=infant_id, session_id=session_id,
                          frames_path=frames_path, labels_path=labels_path)
    return entry, gt


def _integrate_fussy(segments, edges: np.ndarray) -> np.ndarray:
    """Fussy occupancy time within each [edges[i], edges[i+1]) interval."""
    knots_t = [0.0]
    knots_c = [0.0]
    for start, end, state in segments:
        knots_t.append(end)
        knots_c.append(knots_c[-1] + (end - start) * state)
    cumulative = np.interp(edges, knots_t, knots_c)
    return np.diff(cumulative)


def generate_dataset(config: SynthConfig, out_dir: str | Path
                     ) -> tuple[DatasetManifest, list[GroundTruth]]:
    """Write one session per synthetic infant plus a manifest.json.

    Raises:
        TooFewInfantsError: n_infants < 5 cannot fill the default folds.
        DiskError: output files could not be written.
    """
    if config.n_infants < 5:
        raise TooFewInfantsError(
            f"n_infants = {config.n_infants} < 5 cannot support 5-fold evaluation")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries, truths = [], []
    for i in range(config.n_infants):
        entry, gt = generate_session(config, i, out_dir)
        entries.append(entry)
        truths.append(gt)
    manifest = DatasetManifest(entries=entries)
    manifest_path = out_dir / "manifest.json"
    payload = {"entries": [{
        "infant_id": e.infant_id, "session_id": e.session_id,
        "frames": e.frames_path.name, "labels": e.labels_path.name,
    } for e in entries]}
    try:
        manifest_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DiskError(f"cannot write {manifest_path}: {exc}") from exc
    return manifest, truths
